"""TRL versus fully-connected regression on synthetic data, across training-set sizes."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from trnet.layers import FcLayer, TrlLayer
from trnet.training import (
    BatchNorm,
    Sequential,
    SyntheticSpec,
    TrainConfig,
    evaluate_rmse,
    generate_synthetic,
    sgd_train,
)


def default_trl_config():
    return TrainConfig(learning_rate=1e-2, batch_size=32, epochs=200, l2_weight_decay=0.05,
                       normalize_factors_every_step=True)


def default_fc_config():
    # FC curvature grows with the flattened input size; 1e-3 is stable for 64x64 at batch 32
    return TrainConfig(learning_rate=1e-3, batch_size=32, epochs=200, l2_weight_decay=0.05)


@dataclass
class SynthExperiment:
    sizes: tuple = (50, 100, 200, 500)
    data: SyntheticSpec = field(default_factory=lambda: SyntheticSpec(true_ranks=(1, 1, 1)))
    trl_ranks: tuple = None
    trl: TrainConfig = field(default_factory=default_trl_config)
    fc: TrainConfig = field(default_factory=default_fc_config)

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if not self.sizes or min(self.sizes) < 1:
            raise ValueError("training sizes must be positive")
        if self.trl_ranks is None:
            self.trl_ranks = self.data.true_ranks
        self.trl_ranks = tuple(int(r) for r in self.trl_ranks)
        if len(self.trl_ranks) != len(self.data.input_shape) + 1:
            raise ValueError("trl_ranks needs one rank per input mode plus the output rank")


@dataclass
class SizeResult:
    size: int
    rmse_trl: float
    rmse_fc: float
    trl_record: object
    fc_record: object
    trl_model: object
    fc_model: object


def _with_bn(layer, feature_shape, enabled):
    return Sequential([BatchNorm(feature_shape), layer]) if enabled else layer


def run_synth(exp: SynthExperiment):
    """Train both models on nested prefixes of one training set.

    All sizes share the same true weight and test set, so the curves differ
    only through the amount of training data.
    """
    spec = replace(exp.data, num_train=max(exp.sizes))
    (x, y), test, w = generate_synthetic(spec)
    seed = spec.seed
    shape = spec.input_shape
    results = []
    for n in exp.sizes:
        train = (x[:n], y[:n])
        trl = TrlLayer.random(shape, exp.trl_ranks, spec.n_outputs, rng=seed)
        trl_model = _with_bn(trl, shape, exp.trl.use_batch_norm)
        trl_rec = sgd_train(trl_model, train, replace(exp.trl, seed=seed))
        fc = FcLayer.zeros(int(np.prod(shape)), spec.n_outputs)
        fc_model = _with_bn(fc, shape, exp.fc.use_batch_norm)
        fc_rec = sgd_train(fc_model, train, replace(exp.fc, seed=seed))
        results.append(SizeResult(n, evaluate_rmse(trl_model, test), evaluate_rmse(fc_model, test),
                                  trl_rec, fc_rec, trl_model, fc_model))
    return results, w


def effective_weight(model, input_shape):
    """The linear map a trained model applies to clean inputs, as a tensor ``input_shape + (O,)``.

    Read off by probing with the identity basis, so it also covers models with
    batch normalisation in evaluation mode.
    """
    if isinstance(model, TrlLayer):
        return model.weight()
    if isinstance(model, FcLayer):
        return model.weight.reshape(tuple(input_shape) + (-1,))
    d = int(np.prod(input_shape))
    basis = np.eye(d).reshape((d,) + tuple(input_shape))
    zero = model.forward(np.zeros((1,) + tuple(input_shape)))
    cols = model.forward(basis) - zero
    return cols.reshape(tuple(input_shape) + (-1,))


def results_csv(results) -> str:
    lines = ["size,rmse_trl,rmse_fc"]
    lines += [f"{r.size},{r.rmse_trl!r},{r.rmse_fc!r}" for r in results]
    return "\n".join(lines) + "\n"
