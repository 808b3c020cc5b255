"""Tensor contraction (TCL), tensor regression (TRL) and fully-connected layers.

Every layer follows the same small protocol used by the training harness:

* ``params`` -- dict of name to the live parameter arrays,
* ``forward(x, training=False)`` -- batched input, batch on axis 0,
* ``backward(x, dy)`` -- returns ``(grads, dx)`` where ``grads`` has the same
  keys as ``params``.

Backward passes are stateless: they take the forward input again instead of
caching it.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Sequence

import numpy as np

from trnet import io
from trnet.tensor import kronecker, multi_mode_product, n_mode_product, unfold
from trnet.tucker import TuckerTensor, partial_tucker, tucker_reconstruct


def _uniform(rng, shape, fan_in):
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape)


def _check_batch(x, dims, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != len(dims) + 1 or tuple(x.shape[1:]) != tuple(dims):
        raise ValueError(f"{what} expects input of shape (S, {', '.join(map(str, dims))}), got {x.shape}")
    return x


def tcl_param_count(input_dims: Sequence[int], ranks: Sequence[int]) -> int:
    if len(input_dims) != len(ranks):
        raise ValueError("one rank per input mode is required")
    return sum(int(d) * int(r) for d, r in zip(input_dims, ranks))


def trl_param_count(input_dims: Sequence[int], ranks: Sequence[int], n_outputs: int) -> int:
    """Weights of a TRL (bias excluded).

    ``ranks`` holds one rank per input mode followed by the output rank:
    ``prod(ranks) + sum(R_k * I_k) + R_out * n_outputs``.
    """
    if len(ranks) != len(input_dims) + 1:
        raise ValueError("expected one rank per input mode plus the output rank")
    ranks = [int(r) for r in ranks]
    return prod(ranks) + sum(r * int(i) for r, i in zip(ranks, input_dims)) + ranks[-1] * int(n_outputs)


def fc_param_count(input_dims: Sequence[int], n_outputs: int) -> int:
    return int(n_outputs) * prod(int(i) for i in input_dims)


@dataclass
class TclLayer:
    """Tensor contraction layer.

    Factor ``k`` has shape ``(R_k, D_k)`` and is applied to mode ``k + 1`` of
    the batched input; the batch mode is never projected. No bias.
    """

    factors: list

    def __post_init__(self):
        self.factors = [np.array(f, dtype=np.float64) for f in self.factors]
        if any(f.ndim != 2 for f in self.factors):
            raise ValueError("TCL factors must be matrices")

    @classmethod
    def random(cls, input_dims, ranks, rng=None):
        rng = np.random.default_rng(rng)
        if len(input_dims) != len(ranks):
            raise ValueError("one rank per input mode is required")
        return cls([_uniform(rng, (r, d), d) for d, r in zip(input_dims, ranks)])

    @property
    def input_dims(self):
        return tuple(f.shape[1] for f in self.factors)

    @property
    def output_ranks(self):
        return tuple(f.shape[0] for f in self.factors)

    @property
    def params(self):
        return {f"V{k}": f for k, f in enumerate(self.factors)}

    def n_params(self) -> int:
        return tcl_param_count(self.input_dims, self.output_ranks)

    def output_shape(self, input_shape):
        return self.output_ranks

    def forward(self, x, training=False):
        x = _check_batch(x, self.input_dims, "TCL")
        return multi_mode_product(x, self.factors, range(1, x.ndim))

    def backward(self, x, dy):
        x = _check_batch(x, self.input_dims, "TCL")
        dy = np.asarray(dy, dtype=np.float64)
        if dy.shape != (x.shape[0],) + self.output_ranks:
            raise ValueError(f"upstream gradient has shape {dy.shape}, expected {(x.shape[0],) + self.output_ranks}")
        n = len(self.factors)
        grads = {}
        for k in range(n):
            others = [j for j in range(n) if j != k]
            partial = multi_mode_product(x, [self.factors[j] for j in others], [j + 1 for j in others])
            # X'_[k+1] = V^(k) Z_[k+1]  =>  dV^(k) = dY_[k+1] Z_[k+1]^T
            grads[f"V{k}"] = unfold(dy, k + 1) @ unfold(partial, k + 1).T
        dx = multi_mode_product(dy, self.factors, range(1, dy.ndim), transpose=True)
        return grads, dx


@dataclass
class TrlLayer:
    """Tensor regression layer ``Y = <X, W>_N + b`` with a Tucker-factored ``W``.

    ``factors[k]`` is ``(I_k, R_k)`` for every input mode, ``output_factor`` is
    ``(O, R_out)`` and ``core`` has shape ``(R_0, ..., R_N, R_out)``.
    """

    core: np.ndarray
    factors: list
    output_factor: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.core = np.array(self.core, dtype=np.float64)
        self.factors = [np.array(f, dtype=np.float64) for f in self.factors]
        self.output_factor = np.array(self.output_factor, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        # validates the factor/core shape chain
        self.tucker()
        if self.bias.shape != (self.output_factor.shape[0],):
            raise ValueError("bias length must equal the number of outputs")

    @classmethod
    def random(cls, input_dims, ranks, n_outputs, rng=None):
        """Factors uniform in ``[-s, s]`` with ``s = 1/sqrt(fan_in)``; zero bias."""
        rng = np.random.default_rng(rng)
        if len(ranks) != len(input_dims) + 1:
            raise ValueError("expected one rank per input mode plus the output rank")
        for r, d in zip(ranks, list(input_dims) + [n_outputs]):
            if not 1 <= r <= d:
                raise ValueError(f"rank {r} invalid for dimension {d}")
        factors = [_uniform(rng, (d, r), d) for d, r in zip(input_dims, ranks)]
        core = _uniform(rng, tuple(ranks), prod(ranks[:-1]))
        output_factor = _uniform(rng, (n_outputs, ranks[-1]), ranks[-1])
        return cls(core, factors, output_factor, np.zeros(n_outputs))

    @property
    def input_dims(self):
        return tuple(f.shape[0] for f in self.factors)

    @property
    def ranks(self):
        return self.core.shape

    @property
    def n_outputs(self):
        return self.output_factor.shape[0]

    @property
    def params(self):
        p = {"core": self.core}
        for k, f in enumerate(self.all_factors()):
            p[f"U{k}"] = f
        p["bias"] = self.bias
        return p

    def all_factors(self):
        return self.factors + [self.output_factor]

    def tucker(self) -> TuckerTensor:
        return TuckerTensor(self.core, self.all_factors())

    def weight(self) -> np.ndarray:
        """Materialised regression weight of shape ``(I_0, ..., I_N, O)``."""
        return tucker_reconstruct(self.tucker())

    def n_params(self) -> int:
        return trl_param_count(self.input_dims, self.ranks, self.n_outputs)

    def output_shape(self, input_shape):
        return (self.n_outputs,)

    def _project(self, x, skip=None):
        modes = [k for k in range(len(self.factors)) if k != skip]
        return multi_mode_product(x, [self.factors[k] for k in modes], [k + 1 for k in modes], transpose=True)

    def forward(self, x, training=False):
        x = _check_batch(x, self.input_dims, "TRL")
        z = self._project(x).reshape(x.shape[0], -1)
        core = self.core.reshape(-1, self.ranks[-1])
        return z @ core @ self.output_factor.T + self.bias

    def forward_materialized(self, x):
        x = _check_batch(x, self.input_dims, "TRL")
        w = self.weight().reshape(-1, self.n_outputs)
        return x.reshape(x.shape[0], -1) @ w + self.bias

    def _check_upstream(self, x, dy):
        dy = np.asarray(dy, dtype=np.float64)
        if dy.shape != (x.shape[0], self.n_outputs):
            raise ValueError(f"upstream gradient has shape {dy.shape}, expected {(x.shape[0], self.n_outputs)}")
        return dy

    def backward(self, x, dy):
        x = _check_batch(x, self.input_dims, "TRL")
        dy = self._check_upstream(x, dy)
        n = len(self.factors)
        s = x.shape[0]
        z = self._project(x)
        zf = z.reshape(s, -1)
        core = self.core.reshape(-1, self.ranks[-1])
        h = dy @ self.output_factor
        grads = {"core": (zf.T @ h).reshape(self.core.shape)}
        dz = (h @ core.T).reshape(z.shape)
        for k in range(n):
            partial = self._project(x, skip=k)
            grads[f"U{k}"] = unfold(partial, k + 1) @ unfold(dz, k + 1).T
        grads[f"U{n}"] = dy.T @ (zf @ core)
        grads["bias"] = dy.sum(axis=0)
        dx = multi_mode_product(dz, self.factors, range(1, n + 1))
        return grads, dx

    def backward_materialized(self, x, dy):
        """Same gradients as :meth:`backward`, through the full weight tensor.

        With ``dW = X_[0]^T dY`` the factor gradients follow from
        ``W_[k] = U^(k) G_[k] K_k^T`` (``K_k`` the Kronecker product of all other
        factors, in mode order) and the core gradient from
        ``vec(W) = (U^(0) ⊗ ... ⊗ U^(N+1)) vec(G)``. Meant for verification on
        small layers only.
        """
        x = _check_batch(x, self.input_dims, "TRL")
        dy = self._check_upstream(x, dy)
        w_shape = self.input_dims + (self.n_outputs,)
        dw = (x.reshape(x.shape[0], -1).T @ dy).reshape(w_shape)
        factors = self.all_factors()
        grads = {}
        for k, f in enumerate(factors):
            kron_others = kronecker(*[factors[j] for j in range(len(factors)) if j != k])
            grads[f"U{k}"] = unfold(dw, k) @ kron_others @ unfold(self.core, k).T
        grads["core"] = (kronecker(*factors).T @ dw.reshape(-1)).reshape(self.core.shape)
        grads["bias"] = dy.sum(axis=0)
        w = self.weight().reshape(-1, self.n_outputs)
        dx = (dy @ w.T).reshape(x.shape)
        return grads, dx

    def save(self, directory):
        parts = {name: ("core" if name == "core" else "bias" if name == "bias" else "factor", arr)
                 for name, arr in self.params.items()}
        io.save_bundle(directory, parts, {"layer": "trl", "n_input_modes": len(self.factors)})

    @classmethod
    def load(cls, directory):
        meta, parts = io.load_bundle(directory)
        if meta.get("layer") != "trl":
            raise ValueError(f"{directory} does not hold a TRL")
        n = meta["n_input_modes"]
        return cls(parts["core"][1], [parts[f"U{k}"][1] for k in range(n)], parts[f"U{n}"][1], parts["bias"][1])


@dataclass
class FcLayer:
    """Flatten followed by an affine map; ``weight`` has shape ``(prod(I), O)``."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError("FC weight must be (inputs, outputs) with a matching bias")

    @classmethod
    def random(cls, n_inputs, n_outputs, rng=None):
        rng = np.random.default_rng(rng)
        return cls(_uniform(rng, (n_inputs, n_outputs), n_inputs), np.zeros(n_outputs))

    @classmethod
    def zeros(cls, n_inputs, n_outputs):
        return cls(np.zeros((n_inputs, n_outputs)), np.zeros(n_outputs))

    @property
    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def n_params(self) -> int:
        return self.weight.size

    def output_shape(self, input_shape):
        return (self.weight.shape[1],)

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        return x.reshape(x.shape[0], -1) @ self.weight + self.bias

    def backward(self, x, dy):
        x = np.asarray(x, dtype=np.float64)
        xf = x.reshape(x.shape[0], -1)
        grads = {"weight": xf.T @ dy, "bias": dy.sum(axis=0)}
        return grads, (dy @ self.weight.T).reshape(x.shape)

    def save(self, directory):
        io.save_bundle(directory, {"weight": ("weight", self.weight), "bias": ("bias", self.bias)}, {"layer": "fc"})

    @classmethod
    def load(cls, directory):
        meta, parts = io.load_bundle(directory)
        if meta.get("layer") != "fc":
            raise ValueError(f"{directory} does not hold an FC layer")
        return cls(parts["weight"][1], parts["bias"][1])


def save_tcl(layer: TclLayer, directory):
    io.save_bundle(directory, {k: ("factor", v) for k, v in layer.params.items()},
                   {"layer": "tcl", "n_modes": len(layer.factors)})


def load_tcl(directory) -> TclLayer:
    meta, parts = io.load_bundle(directory)
    if meta.get("layer") != "tcl":
        raise ValueError(f"{directory} does not hold a TCL")
    return TclLayer([parts[f"V{k}"][1] for k in range(meta["n_modes"])])


def init_trl_from_linear(fc: FcLayer, input_dims, spatial_modes, ranks) -> TrlLayer:
    """Build a TRL that approximates ``fc`` applied after spatial average pooling.

    ``input_dims`` is the full (unbatched) activation shape, e.g.
    ``(channels, height, width)``, and ``fc`` consumes the pooled activation, so
    its weight has ``prod`` of the non-spatial dims as rows. ``ranks`` has one
    entry per input mode plus the output rank; spatial ranks must be 1.

    The FC weight, viewed as a tensor with singleton spatial modes, is
    partially Tucker-decomposed over the non-spatial modes and the output
    mode. Spatial factors are constant ``1/size`` columns.
    """
    input_dims = tuple(int(d) for d in input_dims)
    spatial = sorted({int(m) for m in spatial_modes})
    if len(ranks) != len(input_dims) + 1:
        raise ValueError("expected one rank per input mode plus the output rank")
    if any(not 0 <= m < len(input_dims) for m in spatial):
        raise ValueError("spatial mode out of range")
    for m in spatial:
        if ranks[m] != 1:
            raise ValueError(f"spatial mode {m} must have rank 1, got {ranks[m]}")
    kept = [m for m in range(len(input_dims)) if m not in spatial]
    n_out = fc.weight.shape[1]
    if fc.weight.shape[0] != prod(input_dims[m] for m in kept):
        raise ValueError("FC weight rows must equal the product of the non-spatial dims")
    w_shape = [1 if m in spatial else input_dims[m] for m in range(len(input_dims))] + [n_out]
    w = fc.weight.reshape(w_shape)
    modes = kept + [len(input_dims)]
    t = partial_tucker(w, modes, [ranks[m] for m in modes])
    by_mode = dict(zip(t.modes, t.factors))
    factors = []
    for m, d in enumerate(input_dims):
        if m in spatial:
            factors.append(np.full((d, 1), 1.0 / d))
        else:
            factors.append(by_mode[m])
    return TrlLayer(t.core, factors, by_mode[len(input_dims)], fc.bias.copy())


def normalize_trl_factors(layer: TrlLayer) -> TrlLayer:
    """Rescale every factor column to unit l2 norm, absorbing the scales into the core.

    Works in place (the parameter arrays keep their identity) and returns the layer.
    """
    for k, f in enumerate(layer.all_factors()):
        norms = np.linalg.norm(f, axis=0)
        if np.any(norms == 0):
            raise ValueError(f"factor U{k} has a zero column")
        f /= norms
        layer.core[...] = n_mode_product(layer.core, np.diag(norms), k)
    return layer
