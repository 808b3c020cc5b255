"""Element-by-element reference implementations, independent of numpy reshapes."""

import itertools

import numpy as np


def unfold_by_index_map(x, n):
    """Place element (i_0..i_N) at (i_n, j), j = sum_{k!=n} i_k * prod_{m>k, m!=n} I_m."""
    shape = x.shape
    cols = int(np.prod([s for k, s in enumerate(shape) if k != n]))
    out = np.zeros((shape[n], cols))
    for idx in itertools.product(*[range(s) for s in shape]):
        j = 0
        for k in range(len(shape)):
            if k == n:
                continue
            stride = 1
            for m in range(k + 1, len(shape)):
                if m != n:
                    stride *= shape[m]
            j += idx[k] * stride
        out[idx[n], j] = x[idx]
    return out


def vec_by_index_map(x):
    shape = x.shape
    out = np.zeros(int(np.prod(shape)))
    for idx in itertools.product(*[range(s) for s in shape]):
        j = sum(idx[k] * int(np.prod(shape[k + 1:])) for k in range(len(shape)))
        out[j] = x[idx]
    return out


def n_mode_product_loops(x, m, n):
    shape = list(x.shape)
    out_shape = shape[:n] + [m.shape[0]] + shape[n + 1:]
    out = np.zeros(out_shape)
    for idx in itertools.product(*[range(s) for s in out_shape]):
        r = idx[n]
        total = 0.0
        for i in range(shape[n]):
            src = idx[:n] + (i,) + idx[n + 1:]
            total += m[r, i] * x[src]
        out[idx] = total
    return out


def inner_product_loops(x, y, n_shared):
    shared = x.shape[1:]
    out = np.zeros((x.shape[0], y.shape[-1]))
    for a in range(x.shape[0]):
        for b in range(y.shape[-1]):
            total = 0.0
            for idx in itertools.product(*[range(s) for s in shared]):
                total += x[(a,) + idx] * y[idx + (b,)]
            out[a, b] = total
    return out
