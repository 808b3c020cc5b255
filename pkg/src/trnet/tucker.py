"""Tucker decomposition: HOSVD initialisation, HOOI refinement, partial Tucker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from trnet.tensor import multi_mode_product, unfold


@dataclass
class TuckerTensor:
    """Core plus one ``(I_k, R_k)`` factor per projected mode.

    ``modes`` lists which modes of the full tensor carry a factor, in the same
    order as ``factors``. Modes not listed are left unprojected (partial Tucker).
    """

    core: np.ndarray
    factors: list
    modes: tuple = None

    def __post_init__(self):
        self.core = np.ascontiguousarray(self.core, dtype=np.float64)
        self.factors = [np.ascontiguousarray(f, dtype=np.float64) for f in self.factors]
        if self.modes is None:
            self.modes = tuple(range(len(self.factors)))
        self.modes = tuple(int(m) for m in self.modes)
        if len(self.modes) != len(self.factors):
            raise ValueError("one mode index per factor is required")
        for f, m in zip(self.factors, self.modes):
            if f.ndim != 2 or not 0 <= m < self.core.ndim or f.shape[1] != self.core.shape[m]:
                raise ValueError(
                    f"factor of shape {f.shape} inconsistent with core {self.core.shape} on mode {m}"
                )

    @property
    def skipped_modes(self) -> tuple:
        return tuple(m for m in range(self.core.ndim) if m not in self.modes)

    @property
    def shape(self) -> tuple:
        shape = list(self.core.shape)
        for f, m in zip(self.factors, self.modes):
            shape[m] = f.shape[0]
        return tuple(shape)

    @property
    def rank(self) -> tuple:
        return self.core.shape


@dataclass
class DecompReport:
    iterations: int = 0
    rel_error_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "rel_error_history": list(self.rel_error_history)}


def tucker_reconstruct(t: TuckerTensor) -> np.ndarray:
    return np.ascontiguousarray(multi_mode_product(t.core, t.factors, t.modes))


def _leading_left_singular_vectors(m: np.ndarray, r: int) -> np.ndarray:
    u, _, _ = np.linalg.svd(m, full_matrices=False)
    u = u[:, :r]
    # deterministic signs: largest-magnitude entry of every column is non-negative
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return np.ascontiguousarray(u * signs)


def _check_ranks(shape, modes, ranks):
    if len(ranks) != len(modes):
        raise ValueError(f"got {len(ranks)} ranks for {len(modes)} modes")
    for m, r in zip(modes, ranks):
        if not 0 <= m < len(shape):
            raise ValueError(f"mode {m} out of range for shape {shape}")
        if not 1 <= r <= shape[m]:
            raise ValueError(f"rank {r} invalid for mode {m} of size {shape[m]}")


def _relative_error(x, t: TuckerTensor, norm_x: float) -> float:
    if norm_x == 0:
        return float(np.linalg.norm(tucker_reconstruct(t)))
    return float(np.linalg.norm(x - tucker_reconstruct(t)) / norm_x)


def _hosvd_modes(x, modes, ranks) -> TuckerTensor:
    factors = [_leading_left_singular_vectors(unfold(x, m), r) for m, r in zip(modes, ranks)]
    core = multi_mode_product(x, factors, modes, transpose=True)
    return TuckerTensor(core, factors, modes)


def hosvd(x, ranks: Sequence[int]) -> TuckerTensor:
    """Truncated higher-order SVD.

    Factor ``k`` holds the leading ``ranks[k]`` left singular vectors of the
    mode-k unfolding; the core is ``x`` projected onto every factor.
    """
    x = np.asarray(x, dtype=np.float64)
    modes = tuple(range(x.ndim))
    _check_ranks(x.shape, modes, ranks)
    return _hosvd_modes(x, modes, ranks)


def _hooi_modes(x, modes, ranks, max_iter, tol):
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    _check_ranks(x.shape, modes, ranks)
    t = _hosvd_modes(x, modes, ranks)
    norm_x = float(np.linalg.norm(x))
    report = DecompReport()
    prev = _relative_error(x, t, norm_x)
    factors = list(t.factors)
    for it in range(max_iter):
        for i, (m, r) in enumerate(zip(modes, ranks)):
            others = [j for j in range(len(modes)) if j != i]
            y = multi_mode_product(x, [factors[j] for j in others], [modes[j] for j in others], transpose=True)
            factors[i] = _leading_left_singular_vectors(unfold(y, m), r)
        core = multi_mode_product(x, factors, modes, transpose=True)
        candidate = TuckerTensor(core, list(factors), modes)
        err = _relative_error(x, candidate, norm_x)
        # ALS cannot increase the error in exact arithmetic; guard against round-off
        if err > prev:
            err = prev
        else:
            t = candidate
        report.rel_error_history.append(err)
        report.iterations = it + 1
        if prev - err < tol:
            break
        prev = err
    return t, report


def hooi(x, ranks: Sequence[int], max_iter: int = 50, tol: float = 1e-8):
    """Higher-order orthogonal iteration, initialised by :func:`hosvd`.

    Each sweep replaces factor ``n`` by the leading left singular vectors of
    the mode-n unfolding of ``x`` projected on all other factors, then
    recomputes the core. Stops when the relative error improves by less than
    ``tol`` or after ``max_iter`` sweeps.

    Returns
    -------
    (TuckerTensor, DecompReport)
    """
    x = np.asarray(x, dtype=np.float64)
    return _hooi_modes(x, tuple(range(x.ndim)), ranks, max_iter, tol)


def partial_tucker(x, modes, ranks, max_iter: int = 50, tol: float = 1e-8, return_report=False):
    """HOOI restricted to ``modes``; other modes are kept at full size, unprojected.

    Returns the :class:`TuckerTensor`, or ``(TuckerTensor, DecompReport)`` when
    ``return_report`` is set.
    """
    x = np.asarray(x, dtype=np.float64)
    modes = tuple(int(m) for m in modes)
    if len(set(modes)) != len(modes):
        raise ValueError("duplicate modes")
    if not modes:
        if ranks:
            raise ValueError("ranks given for an empty mode set")
        t, report = TuckerTensor(x.copy(), [], ()), DecompReport()
    else:
        t, report = _hooi_modes(x, modes, list(ranks), max_iter, tol)
    return (t, report) if return_report else t
