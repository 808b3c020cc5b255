"""Dense multilinear algebra on row-major float64 arrays.

A tensor is a C-contiguous ``numpy.ndarray`` of dtype float64. With that
layout, vectorization is the identity on the data buffer and the mode-n
unfolding maps ``(i_0, ..., i_N)`` to ``(i_n, j)`` where ``j`` enumerates the
remaining indices in row-major order.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def _check_mode(ndim: int, n: int) -> None:
    if not 0 <= n < ndim:
        raise ValueError(f"mode {n} out of range for a tensor of order {ndim}")


def unfold(x: np.ndarray, n: int) -> np.ndarray:
    """Mode-``n`` unfolding: an ``(I_n, prod_{k != n} I_k)`` matrix."""
    x = np.asarray(x)
    _check_mode(x.ndim, n)
    return np.ascontiguousarray(np.moveaxis(x, n, 0).reshape(x.shape[n], -1))


def fold(m: np.ndarray, n: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    m = np.asarray(m)
    shape = tuple(int(s) for s in shape)
    _check_mode(len(shape), n)
    rest = shape[:n] + shape[n + 1:]
    if m.ndim != 2 or m.shape[0] != shape[n] or m.shape[1] != int(np.prod(rest, dtype=np.int64)):
        raise ValueError(f"cannot fold a {m.shape} matrix into shape {shape} along mode {n}")
    return np.ascontiguousarray(np.moveaxis(m.reshape((shape[n],) + rest), 0, n))


def vectorize(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x).reshape(-1)


def n_mode_product(x: np.ndarray, m: np.ndarray, n: int) -> np.ndarray:
    """``x ×_n m``: replaces dimension ``I_n`` of ``x`` by ``m.shape[0]``."""
    x = np.asarray(x)
    m = np.asarray(m)
    _check_mode(x.ndim, n)
    if m.ndim != 2 or m.shape[1] != x.shape[n]:
        raise ValueError(
            f"matrix of shape {m.shape} does not match mode {n} of a tensor of shape {x.shape}"
        )
    new_shape = x.shape[:n] + (m.shape[0],) + x.shape[n + 1:]
    return fold(m @ unfold(x, n), n, new_shape)


def multi_mode_product(x, matrices, modes, transpose=False):
    """Apply ``x ×_{modes[0]} M_0 ×_{modes[1]} M_1 ...``, optionally with each ``M_i`` transposed."""
    out = np.asarray(x)
    for m, n in zip(matrices, modes):
        out = n_mode_product(out, m.T if transpose else m, n)
    return out


def kronecker(*matrices: np.ndarray) -> np.ndarray:
    """Kronecker product of one or more matrices, left to right."""
    if not matrices:
        raise ValueError("kronecker needs at least one matrix")
    out = np.asarray(matrices[0], dtype=np.float64)
    for m in matrices[1:]:
        out = np.kron(out, np.asarray(m, dtype=np.float64))
    return out


def generalized_inner_product(x: np.ndarray, y: np.ndarray, n_shared: int) -> np.ndarray:
    """Contract the last ``n_shared`` modes of ``x`` with the first ``n_shared`` of ``y``.

    ``x`` must have exactly one leading mode and ``y`` exactly one trailing
    mode besides the shared ones; the result has shape ``(x.shape[0], y.shape[-1])``.
    Computed as ``unfold(x, 0) @ unfold(y, last).T``.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if n_shared < 1 or x.ndim != n_shared + 1 or y.ndim != n_shared + 1:
        raise ValueError(
            f"expected tensors of order {n_shared + 1}, got {x.ndim} and {y.ndim}"
        )
    if x.shape[1:] != y.shape[:-1]:
        raise ValueError(f"shared modes differ: {x.shape[1:]} vs {y.shape[:-1]}")
    return unfold(x, 0) @ unfold(y, y.ndim - 1).T
