"""Pure-Python/numpy implementations of the hot loops.

Used when the compiled extension is unavailable. Results, including the
order of enumerated tuples, match ``_ckernels``.
"""
from __future__ import annotations

import numpy as np


def enumerate_closed(jvec, sigma, lookup, radius, d):
    """Momentum-zero nondecreasing index tuples of length ``d``.

    Parameters
    ----------
    jvec : ndarray of int64, shape (n, dim)
        Lattice sites of the candidate modes, in canonical order.
    sigma : ndarray of int64, shape (n,)
        Signs of the candidate modes.
    lookup : ndarray of int64
        Flat table mapping a site in the box ``[-radius, radius]^dim`` and a
        sign slot (0 for -1, 1 for +1) to a candidate index, or -1.
    radius : int
        Box half-width used by ``lookup``.
    d : int
        Tuple length.

    Returns
    -------
    ndarray of int32, shape (count, d)
        Rows ``i_1 <= ... <= i_d`` with ``sum sigma[i] * jvec[i] = 0``.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    jvec = np.asarray(jvec, dtype=np.int64)
    sigma = np.asarray(sigma, dtype=np.int64)
    n, dim = jvec.shape
    R = int(radius)
    side = 2 * R + 1
    steps = [tuple(int(sigma[k]) * int(x) for x in jvec[k]) for k in range(n)]
    lookup = np.asarray(lookup).tolist()
    out: list[int] = []
    row = [0] * d

    def rec(level, start, psum):
        if level == d - 1:
            for q, sgn in ((0, -1), (1, 1)):
                flat = 0
                for t in psum:
                    jl = -sgn * t
                    if jl > R or jl < -R:
                        break
                    flat = flat * side + (jl + R)
                else:
                    k = lookup[flat * 2 + q]
                    if k >= start:
                        row[level] = k
                        out.extend(row)
            return
        rem = (d - level - 1) * R
        for k in range(start, n):
            nxt = tuple(a + b for a, b in zip(psum, steps[k]))
            if any(t > rem or t < -rem for t in nxt):
                continue
            row[level] = k
            rec(level + 1, k, nxt)

    rec(0, 0, (0,) * dim)
    return np.asarray(out, dtype=np.int32).reshape(-1, d)


def poly_gradient(idx, deg, coeff, u, out):
    """Accumulate the gradient of a packed polynomial into ``out``."""
    for k in np.unique(deg):
        k = int(k)
        if k == 0:
            continue
        rows = np.nonzero(deg == k)[0]
        ids = idx[rows, :k]
        vals = u[ids]
        # prefix/suffix products give all leave-one-out products at once
        pre = np.ones((rows.size, k + 1), dtype=complex)
        suf = np.ones((rows.size, k + 1), dtype=complex)
        pre[:, 1:] = np.cumprod(vals, axis=1)
        suf[:, :-1] = np.cumprod(vals[:, ::-1], axis=1)[:, ::-1]
        c = coeff[rows]
        for l in range(k):
            np.add.at(out, ids[:, l], c * pre[:, l] * suf[:, l + 1])


def poly_value(idx, deg, coeff, u):
    """Value of a packed polynomial at ``u``."""
    acc = 0j
    for k in np.unique(deg):
        k = int(k)
        rows = np.nonzero(deg == k)[0]
        vals = u[idx[rows, :k]] if k else np.ones((rows.size, 0), dtype=complex)
        acc += complex(np.sum(coeff[rows] * np.prod(vals, axis=1)))
    return acc
