"""Central finite-difference verification of every analytic gradient."""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from trnet.layers import TclLayer, TrlLayer
from trnet.training import BatchNorm, Sequential, squared_loss

GROUPS = (
    "tcl_factors", "tcl_input",
    "trl_core", "trl_input_factors", "trl_output_factor", "trl_bias", "trl_input",
    "bn_gamma", "bn_beta", "bn_input",
    "composite",
)


def numerical_gradient(f, p, eps=1e-6):
    """Central differences of scalar ``f()`` with respect to array ``p`` (perturbed in place)."""
    g = np.zeros_like(p)
    flat, gflat = p.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def relative_error(analytic, numeric, floor=1e-6) -> float:
    """``||a - n|| / max(||a||, ||n||, floor)``; the floor covers gradients that are exactly zero."""
    a, n = np.ravel(analytic), np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / scale)


def _group(layer_kind, name, n_input_modes=None):
    if layer_kind == "tcl":
        return "tcl_factors"
    if layer_kind == "bn":
        return f"bn_{name}"
    if name in ("core", "bias"):
        return f"trl_{name}"
    return "trl_output_factor" if name == f"U{n_input_modes}" else "trl_input_factors"


def _check_linear_layer(layer, kind, x, dy, errors, flip, eps):
    """Loss ``sum(dy * layer(x))`` so the upstream gradient is exactly ``dy``."""
    grads, dx = layer.backward(x, dy)
    loss = lambda: float(np.sum(dy * layer.forward(x, training=True)))
    n_modes = len(layer.factors) if kind == "trl" else None
    for name, p in layer.params.items():
        group = _group(kind, name, n_modes)
        g = -grads[name] if flip == group else grads[name]
        errors[group].append(relative_error(g, numerical_gradient(loss, p, eps)))
    group = f"{kind}_input"
    g = -dx if flip == group else dx
    errors[group].append(relative_error(g, numerical_gradient(loss, x, eps)))


def _random_dims(rng, max_dim, max_order=3):
    order = int(rng.integers(1, max_order + 1))
    return tuple(int(d) for d in rng.integers(1, max_dim + 1, size=order))


def _random_ranks(rng, dims):
    return tuple(int(rng.integers(1, d + 1)) for d in dims)


def gradcheck_suite(n_instances=100, seed=0, max_dim=6, flip=None, eps=1e-6):
    """Max relative error per parameter group over ``n_instances`` random layers each.

    ``flip`` names a group whose analytic gradient is negated; it exists to
    show that the checker catches a wrong gradient.
    """
    if flip is not None and flip not in GROUPS:
        raise ValueError(f"unknown group {flip!r}")
    rng = np.random.default_rng(seed)
    errors = defaultdict(list)
    for _ in range(n_instances):
        batch = int(rng.integers(2, 5))

        dims = _random_dims(rng, max_dim)
        tcl = TclLayer.random(dims, _random_ranks(rng, dims), rng)
        x = rng.standard_normal((batch,) + dims)
        dy = rng.standard_normal((batch,) + tcl.output_ranks)
        _check_linear_layer(tcl, "tcl", x, dy, errors, flip, eps)

        dims = _random_dims(rng, max_dim)
        n_out = int(rng.integers(1, max_dim + 1))
        trl = TrlLayer.random(dims, _random_ranks(rng, dims + (n_out,)), n_out, rng)
        trl.bias[:] = rng.standard_normal(n_out)
        x = rng.standard_normal((batch,) + dims)
        dy = rng.standard_normal((batch, n_out))
        _check_linear_layer(trl, "trl", x, dy, errors, flip, eps)

        dims = _random_dims(rng, max_dim, max_order=2)
        bn = BatchNorm(dims)
        bn.gamma[...] = rng.uniform(0.5, 2.0, dims)
        bn.beta[...] = rng.standard_normal(dims)
        x = 2.0 * rng.standard_normal((batch + 2,) + dims) + 1.0
        dy = rng.standard_normal(x.shape)
        _check_linear_layer(bn, "bn", x, dy, errors, flip, eps)

        _check_composite(rng, max_dim, errors, flip, eps)
    return {g: max(errors[g]) for g in GROUPS if errors[g]}


def _check_composite(rng, max_dim, errors, flip, eps):
    """BN -> TCL -> BN -> TRL under squared loss."""
    dims = _random_dims(rng, max_dim, max_order=2)
    ranks = _random_ranks(rng, dims)
    n_out = int(rng.integers(1, 4))
    model = Sequential([
        BatchNorm(dims),
        TclLayer.random(dims, ranks, rng),
        BatchNorm(ranks),
        TrlLayer.random(ranks, _random_ranks(rng, ranks + (n_out,)), n_out, rng),
    ])
    batch = int(rng.integers(4, 8))
    x = rng.standard_normal((batch,) + dims)
    y = rng.standard_normal((batch, n_out))

    def loss():
        return squared_loss(model.forward(x, training=True), y)[0]

    pred, inputs = model.forward(x, training=True, keep_inputs=True)
    grads, _ = model.backward(inputs, squared_loss(pred, y)[1])
    # batch norm makes some upstream parameters (nearly) scale-invariant, so
    # per-tensor errors can compare round-off with round-off; judge the full vector
    analytic = np.concatenate([np.ravel(grads[k]) for k in model.params])
    numeric = np.concatenate([np.ravel(numerical_gradient(loss, p, eps)) for p in model.params.values()])
    if flip == "composite":
        analytic = -analytic
    errors["composite"].append(relative_error(analytic, numeric))
