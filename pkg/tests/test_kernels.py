import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nekhoroshev import kernels
from nekhoroshev.lattice import ModeTable
from nekhoroshev.polyalg import random_polynomial

BACKENDS = kernels.backends()
needs_ext = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def test_backend_selected():
    assert kernels.BACKEND in BACKENDS


@needs_ext
@pytest.mark.parametrize("dim,K,d", [(1, 4, 3), (1, 3, 5), (2, 2, 3), (2, 1, 4)])
def test_enumeration_backends_agree(dim, K, d):
    t = ModeTable(dim, K)
    jv, sg, lookup, R = t.box_lookup(np.arange(len(t)))
    a = BACKENDS["python"].enumerate_closed(jv, sg, lookup, R, d)
    b = BACKENDS["cython"].enumerate_closed(jv, sg, lookup, R, d)
    np.testing.assert_array_equal(a, b)


@needs_ext
@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_evaluation_backends_agree(seed):
    rng = np.random.default_rng(seed)
    t = ModeTable(1, 3)
    P = random_polynomial(t, [2, 3, 4], rng, density=0.3)
    if P.is_zero():
        return
    idx, deg, coeff = P.packed()
    u = rng.standard_normal(len(t)) + 1j * rng.standard_normal(len(t))
    va = BACKENDS["python"].poly_value(idx, deg, coeff, u)
    vb = BACKENDS["cython"].poly_value(idx, deg, coeff, u)
    assert vb == pytest.approx(va, rel=1e-13)
    ga = np.zeros(len(t), dtype=complex)
    gb = np.zeros(len(t), dtype=complex)
    BACKENDS["python"].poly_gradient(idx, deg, coeff, u, ga)
    BACKENDS["cython"].poly_gradient(idx, deg, coeff, u, gb)
    np.testing.assert_allclose(gb, ga, rtol=1e-13, atol=1e-15)


def test_python_enumeration_rejects_bad_degree():
    t = ModeTable(1, 1)
    jv, sg, lookup, R = t.box_lookup(np.arange(len(t)))
    with pytest.raises(ValueError):
        BACKENDS["python"].enumerate_closed(jv, sg, lookup, R, 0)
