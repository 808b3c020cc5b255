"""Mini-batch SGD on squared loss, batch normalisation and the synthetic regression data."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from trnet.layers import TrlLayer, normalize_trl_factors
from trnet.tensor import fold, multi_mode_product, unfold


class TrainingDiverged(RuntimeError):
    pass


class BatchNorm:
    """Per-feature batch normalisation over axis 0.

    Every non-batch position is its own feature. Training mode uses batch
    statistics (biased variance) and updates the running averages; evaluation
    mode uses the running averages.
    """

    def __init__(self, feature_shape, eps=1e-5, momentum=0.9):
        feature_shape = tuple(feature_shape)
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(feature_shape)
        self.beta = np.zeros(feature_shape)
        self.running_mean = np.zeros(feature_shape)
        self.running_var = np.ones(feature_shape)

    @property
    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def _stats(self, x):
        if x.shape[0] < 2:
            raise ValueError("batch normalisation needs a batch of at least 2 in training mode")
        return x.mean(axis=0), x.var(axis=0)

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        if training:
            mean, var = self._stats(x)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        return self.gamma * (x - mean) / np.sqrt(var + self.eps) + self.beta

    def backward(self, x, dy):
        """Gradients of the training-mode transform (batch statistics)."""
        x = np.asarray(x, dtype=np.float64)
        mean, var = self._stats(x)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        grads = {"gamma": (dy * xhat).sum(axis=0), "beta": dy.sum(axis=0)}
        dxhat = dy * self.gamma
        dx = inv_std * (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0))
        return grads, dx


class Sequential:
    """Chain of layers; parameter names are prefixed with the layer index."""

    def __init__(self, layers):
        self.layers = list(layers)

    @property
    def params(self):
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def forward(self, x, training=False, keep_inputs=False):
        inputs = []
        for layer in self.layers:
            inputs.append(x)
            x = layer.forward(x, training=training)
        return (x, inputs) if keep_inputs else x

    def backward(self, inputs, dy):
        """``inputs`` are the per-layer inputs returned by ``forward(..., keep_inputs=True)``."""
        grads = {}
        for i in reversed(range(len(self.layers))):
            g, dy = self.layers[i].backward(inputs[i], dy)
            grads.update({f"{i}.{k}": v for k, v in g.items()})
        return grads, dy


@dataclass
class SyntheticSpec:
    """Synthetic regression ``y = vec(X) W`` trained on ``X + E``.

    ``signal_std`` and ``noise_std`` default to ``sqrt(3)``: N(0, 3) read as
    variance 3. ``true_weight`` is ``"lowrank"`` (Tucker with ``true_ranks``,
    one rank per input mode plus the output rank) or ``"dense"``.
    """

    input_shape: tuple = (64, 64)
    num_train: int = 500
    num_test: int = 5000
    n_outputs: int = 1
    signal_std: float = float(np.sqrt(3.0))
    noise_std: float = float(np.sqrt(3.0))
    true_weight: str = "lowrank"
    true_ranks: tuple = (4, 4, 1)
    noisy_test: bool = False
    seed: int = 0

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self.true_ranks = tuple(int(r) for r in self.true_ranks)
        if self.num_train < 1 or self.num_test < 1 or self.n_outputs < 1:
            raise ValueError("sample counts and output size must be positive")
        if self.signal_std < 0 or self.noise_std < 0:
            raise ValueError("standard deviations must be non-negative")
        if self.true_weight not in ("lowrank", "dense"):
            raise ValueError(f"unknown true_weight {self.true_weight!r}")
        if self.true_weight == "lowrank" and len(self.true_ranks) != len(self.input_shape) + 1:
            raise ValueError("true_ranks needs one rank per input mode plus the output rank")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int = 32
    epochs: int = 100
    l2_weight_decay: float = 0.0
    seed: int = 0
    use_batch_norm: bool = False
    normalize_factors_every_step: bool = False

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class RunRecord:
    train_loss: list = field(default_factory=list)
    test_rmse: list = field(default_factory=list)
    wall_clock: list = field(default_factory=list)
    model: object = None

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,test_rmse"]
        for i, (loss, rmse) in enumerate(zip(self.train_loss, self.test_rmse)):
            lines.append(f"{i + 1},{loss!r},{rmse!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"train_loss": self.train_loss, "test_rmse": self.test_rmse, "wall_clock": self.wall_clock}


def _orthonormal(rng, rows, cols):
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diag(r))


def balanced_core(rng, ranks, sweeps=20) -> np.ndarray:
    """Gaussian core whose every unfolding is whitened to (near) equal singular values.

    A raw Gaussian core is often close to rank-deficient along some mode, which
    makes the nominal multilinear rank meaningless.
    """
    core = rng.standard_normal(tuple(ranks))
    for _ in range(sweeps):
        for k in range(core.ndim):
            u, _, vt = np.linalg.svd(unfold(core, k), full_matrices=False)
            core = fold(u @ vt, k, core.shape)
    return core


def make_true_weight(spec: SyntheticSpec, rng) -> np.ndarray:
    """Unit-Frobenius-norm weight of shape ``input_shape + (n_outputs,)``."""
    shape = spec.input_shape + (spec.n_outputs,)
    if spec.true_weight == "dense":
        w = rng.standard_normal(shape)
    else:
        for r, d in zip(spec.true_ranks, shape):
            if not 1 <= r <= d:
                raise ValueError(f"rank {r} invalid for dimension {d}")
        core = balanced_core(rng, spec.true_ranks)
        factors = [_orthonormal(rng, d, r) for d, r in zip(shape, spec.true_ranks)]
        w = multi_mode_product(core, factors, range(len(shape)))
    return w / np.linalg.norm(w)


def generate_synthetic(spec: SyntheticSpec):
    """Returns ``((x_train, y_train), (x_test, y_test), true_weight)``.

    Labels always come from the clean inputs; training inputs carry additive
    Gaussian noise, test inputs only when ``spec.noisy_test`` is set.
    """
    rng = np.random.default_rng(spec.seed)
    w = make_true_weight(spec, rng)
    w_mat = w.reshape(-1, spec.n_outputs)

    def draw(n, noisy):
        x = spec.signal_std * rng.standard_normal((n,) + spec.input_shape)
        y = x.reshape(n, -1) @ w_mat
        if noisy:
            x = x + spec.noise_std * rng.standard_normal(x.shape)
        return x, y

    train = draw(spec.num_train, True)
    test = draw(spec.num_test, spec.noisy_test)
    return train, test, w


def squared_loss(pred, y):
    """``0.5 * ||y - pred||^2 / batch`` and its gradient with respect to ``pred``."""
    diff = pred - y
    n = y.shape[0]
    return 0.5 * float(np.sum(diff * diff)) / n, diff / n


def evaluate_rmse(model, test) -> float:
    x, y = test
    if len(y) == 0:
        raise ValueError("empty test set")
    pred = model.forward(x, training=False)
    return float(np.sqrt(np.mean((np.asarray(y) - pred) ** 2)))


def _trl_layers(model):
    layers = model.layers if isinstance(model, Sequential) else [model]
    return [layer for layer in layers if isinstance(layer, TrlLayer)]


def sgd_train(model, data, config: TrainConfig, test=None) -> RunRecord:
    """Plain mini-batch SGD on :func:`squared_loss`.

    The sample order of every epoch is drawn from ``config.seed`` so the run is
    fully reproducible. Weight decay applies to every parameter except biases
    and batch-norm shifts.
    """
    x, y = data
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(len(x), -1)
    rng = np.random.default_rng(config.seed)
    params = model.params
    record = RunRecord(model=model)
    start = time.perf_counter()
    n = len(x)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total, batches = 0.0, 0
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            xb, yb = x[idx], y[idx]
            if isinstance(model, Sequential):
                pred, inputs = model.forward(xb, training=True, keep_inputs=True)
                loss, dpred = squared_loss(pred, yb)
                grads, _ = model.backward(inputs, dpred)
            else:
                pred = model.forward(xb, training=True)
                loss, dpred = squared_loss(pred, yb)
                grads, _ = model.backward(xb, dpred)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}, batch starting at {lo}")
            for name, p in params.items():
                g = grads[name]
                if config.l2_weight_decay and not name.endswith(("bias", "beta")):
                    g = g + config.l2_weight_decay * p
                p -= config.learning_rate * g
            if config.normalize_factors_every_step:
                for layer in _trl_layers(model):
                    normalize_trl_factors(layer)
            total += loss
            batches += 1
        record.train_loss.append(total / max(batches, 1))
        record.test_rmse.append(evaluate_rmse(model, test) if test is not None else float("nan"))
        record.wall_clock.append(time.perf_counter() - start)
    return record


def record_from_dict(d) -> RunRecord:
    return RunRecord(list(d["train_loss"]), list(d["test_rmse"]), list(d["wall_clock"]))


def config_dict(obj) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(obj).items()}
