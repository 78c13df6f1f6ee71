# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Behaviour (including output order) mirrors ``_pykernels`` exactly; the test
suite runs both backends against each other.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport free, malloc, realloc

cnp.import_array()


cdef struct _Buf:
    int* data
    Py_ssize_t size
    Py_ssize_t cap


cdef int _push(_Buf* b, int* row, int d) except -1:
    cdef Py_ssize_t k, newcap
    cdef int* p
    if b.size + d > b.cap:
        newcap = 2 * b.cap + d
        p = <int*>realloc(b.data, newcap * sizeof(int))
        if p == NULL:
            raise MemoryError()
        b.data = p
        b.cap = newcap
    for k in range(d):
        b.data[b.size + k] = row[k]
    b.size += d
    return 0


cdef int _rec(int level, Py_ssize_t start, int d, int dim, long long R,
              const long long[:, ::1] jvec, const long long[::1] sigma,
              const long long[::1] lookup, long long* psum, int* row,
              _Buf* buf, Py_ssize_t n) except -1:
    cdef Py_ssize_t k, flat
    cdef int i, q, ok
    cdef long long t, jl, rem, sgn
    if level == d - 1:
        for q in range(2):
            sgn = 2 * q - 1
            flat = 0
            ok = 1
            for i in range(dim):
                jl = -sgn * psum[level * dim + i]
                if jl > R or jl < -R:
                    ok = 0
                    break
                flat = flat * (2 * R + 1) + (jl + R)
            if not ok:
                continue
            k = lookup[flat * 2 + q]
            if k < 0 or k < start:
                continue
            row[level] = <int>k
            _push(buf, row, d)
        return 0
    rem = (d - level - 1) * R
    for k in range(start, n):
        ok = 1
        for i in range(dim):
            t = psum[level * dim + i] + sigma[k] * jvec[k, i]
            psum[(level + 1) * dim + i] = t
            if t > rem or t < -rem:
                ok = 0
        if not ok:
            continue
        row[level] = <int>k
        _rec(level + 1, k, d, dim, R, jvec, sigma, lookup, psum, row, buf, n)
    return 0


def enumerate_closed(const long long[:, ::1] jvec, const long long[::1] sigma,
                     const long long[::1] lookup, long long radius, int d):
    """Momentum-zero nondecreasing index tuples of length ``d``.

    See ``_pykernels.enumerate_closed`` for the argument conventions.
    """
    cdef Py_ssize_t n = jvec.shape[0]
    cdef int dim = jvec.shape[1]
    cdef _Buf buf
    cdef long long* psum
    cdef int* row
    cdef Py_ssize_t k
    if d < 1:
        raise ValueError("d must be >= 1")
    buf.size = 0
    buf.cap = 1024 * d
    buf.data = <int*>malloc(buf.cap * sizeof(int))
    psum = <long long*>malloc((d + 1) * dim * sizeof(long long))
    row = <int*>malloc(d * sizeof(int))
    if buf.data == NULL or psum == NULL or row == NULL:
        free(buf.data); free(psum); free(row)
        raise MemoryError()
    try:
        for k in range((d + 1) * dim):
            psum[k] = 0
        _rec(0, 0, d, dim, radius, jvec, sigma, lookup, psum, row, &buf, n)
        out = np.empty((buf.size // d, d), dtype=np.int32)
        for k in range(buf.size):
            out.flat[k] = buf.data[k]
    finally:
        free(buf.data)
        free(psum)
        free(row)
    return out


def poly_gradient(const int[:, ::1] idx, const int[::1] deg,
                  const double complex[::1] coeff, const double complex[::1] u,
                  double complex[::1] out):
    """Accumulate the gradient of a packed polynomial into ``out``."""
    cdef Py_ssize_t T = idx.shape[0]
    cdef Py_ssize_t t
    cdef int k, l, m
    cdef double complex prod
    for t in range(T):
        k = deg[t]
        for l in range(k):
            prod = coeff[t]
            for m in range(k):
                if m != l:
                    prod = prod * u[idx[t, m]]
            out[idx[t, l]] = out[idx[t, l]] + prod


def poly_value(const int[:, ::1] idx, const int[::1] deg,
               const double complex[::1] coeff, const double complex[::1] u):
    """Value of a packed polynomial at ``u``."""
    cdef Py_ssize_t T = idx.shape[0]
    cdef Py_ssize_t t
    cdef int m
    cdef double complex prod, acc = 0
    for t in range(T):
        prod = coeff[t]
        for m in range(deg[t]):
            prod = prod * u[idx[t, m]]
        acc = acc + prod
    return acc
