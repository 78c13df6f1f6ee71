import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nekhoroshev.lattice import ModeTable, mode
from nekhoroshev.weights import (
    WeightedState,
    calibrate_Cf,
    check_A0,
    gevrey,
    log_ultra,
    norm_s,
    reference_scale,
    sample_sphere,
    weight_factors,
    weight_value,
    with_reference_scale,
)


def test_weight_values():
    assert weight_value(gevrey(0.5), 4) == pytest.approx(2.0)
    assert weight_value(gevrey(0.5), 1) == pytest.approx(1.0)
    w = log_ultra(2.0)
    assert w.kappa == pytest.approx(math.e ** 2)
    # ln(x + e^2) = 3
    assert weight_value(w, math.e ** 3 - math.e ** 2) == pytest.approx(9.0, rel=1e-12)


def test_weight_validation():
    with pytest.raises(ValueError):
        gevrey(1.0)
    with pytest.raises(ValueError):
        log_ultra(1.0)
    with pytest.raises(ValueError):
        log_ultra(2.0, kappa=1.0)
    with pytest.raises(ValueError):
        gevrey(0.5, s=0)


def test_gevrey_subadditivity_constant():
    assert gevrey(0.5).Cf == pytest.approx(2 ** -0.5)
    # f(2 + 2) = 2 <= f(2) + 2^-0.5 f(2) = 2.414...
    w = gevrey(0.5)
    assert w.f(4.0) <= w.f(2.0) * (1 + w.Cf)


def test_logultra_cf_calibration():
    w = log_ultra(2.0)
    assert 0 < w.Cf < 1
    xs = np.geomspace(w.c, 1e10, 2000)
    assert np.all(w.f(2 * xs) <= (1 + w.Cf) * w.f(xs) * (1 + 1e-12))
    # the constant is tight: a slightly smaller one fails somewhere
    assert np.any(w.f(2 * xs) > (1 + w.Cf - 1e-4) * w.f(xs))
    assert calibrate_Cf(w.f, w.c) == pytest.approx(w.Cf)


@pytest.mark.parametrize("w", [gevrey(0.25), gevrey(0.5), gevrey(0.75), log_ultra(2.0), log_ultra(3.0)])
def test_check_A0_passes(w):
    rep = check_A0(w, 6, 2000, seed=1)
    assert rep.passed and rep.counterexample is None
    assert rep.samples == 2000


def test_check_A0_negative_control():
    rep = check_A0(lambda x: np.asarray(x, dtype=float) ** 2, 3, 500, seed=0, Cf=0.5)
    assert not rep.passed and rep.counterexample is not None
    with pytest.raises(ValueError):
        check_A0(lambda x: x, 3, 10, 0)


def test_check_A0_single_entry_trivial():
    with pytest.raises(ValueError):
        check_A0(gevrey(0.5), 1, 10, 0)


def test_norm_examples():
    w = gevrey(0.5, s=1.5)
    t = ModeTable(1, 5)
    u = np.zeros(len(t), dtype=complex)
    u[t.id_of(mode(0, 1))] = 1.0
    # |j| = 0 sits at the floor c
    assert norm_s(WeightedState(t, u), w) == pytest.approx(math.exp(1.5 * math.sqrt(w.c)))
    assert norm_s(WeightedState(t, np.zeros(len(t))), w) == 0.0
    v = np.zeros(len(t), dtype=complex)
    v[t.id_of(mode(3, 1))] = 0.3
    v[t.id_of(mode(4, -1))] = -0.2j
    expect = math.sqrt(0.09 * math.exp(3 * math.sqrt(3)) + 0.04 * math.exp(3 * 2))
    assert norm_s(WeightedState(t, v), w) == pytest.approx(expect)


def test_sample_sphere():
    w = gevrey(0.5)
    t = ModeTable(2, 3)
    a = sample_sphere(w, 0.3, t, seed=4)
    b = sample_sphere(w, 0.3, t, seed=4)
    assert norm_s(a, w) == pytest.approx(0.3, abs=1e-12)
    np.testing.assert_array_equal(a.values, b.values)
    one = t.id_of(mode((1, 2), 1))
    c = sample_sphere(w, 0.5, t, support=[one], seed=2)
    assert abs(c.values[one]) == pytest.approx(0.5 * math.exp(-w.s * w.f(math.sqrt(5))))
    r = sample_sphere(w, 0.1, t, seed=3, real=True)
    assert r.is_real(1e-15)
    with pytest.raises(ValueError):
        sample_sphere(w, 1.0, t, support=[])


def test_reference_scale_definition():
    w = gevrey(0.5)
    t = ModeTable(1, 16)
    s0 = reference_scale(w, t)
    fv = w.f(t.bracket_radius)
    rate = 2 * w.Cf - 2
    assert np.sum(np.exp(rate * s0 * fv)) < 1 / 3
    assert np.sum(np.exp(rate * s0 * (1 - 1e-6) * fv)) > 1 / 3 - 1e-9
    assert with_reference_scale(w, t).s0 == s0


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_triangle_inequality(seed):
    w = gevrey(0.5)
    t = ModeTable(1, 6)
    a = sample_sphere(w, 1.0, t, seed=seed)
    b = sample_sphere(w, 2.0, t, seed=seed + 1)
    assert norm_s(a + b, w) <= norm_s(a, w) + norm_s(b, w) + 1e-12


@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2, 3, 4]))
@settings(max_examples=30, deadline=None)
def test_tail_bound(seed, N):
    w = gevrey(0.5, s=2.0)
    s0 = 0.5
    t = ModeTable(1, 8)
    u = sample_sphere(w, 1.0, t, seed=seed)
    tail = norm_s(u.project_high(N), w, s=s0)
    assert tail <= norm_s(u, w) * math.exp(-(w.s - s0) * w.f(max(N, w.c))) * (1 + 1e-12)


def test_weight_factors_shape():
    t = ModeTable(1, 3)
    wf = weight_factors(gevrey(0.5), t)
    assert wf.shape == (len(t),) and np.all(wf >= 1)
