import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nekhoroshev.measure import (
    DiophantineFamilySpec,
    bourgain_threshold_check,
    determinant_lower_constant,
    directional_derivative_bound,
    falling_factorial_product,
    fit_determinant_exponent,
    frequency_determinant,
    metric_diophantine_margin,
    metric_failure_fraction,
    metric_separation,
    random_metric_direction,
    resonant_fraction,
    sublevel_measure_bound,
)

FRAC = DiophantineFamilySpec("fractional_mass", eta=0.75, interval=(1.0, 2.0))


def test_family_validation():
    with pytest.raises(ValueError):
        DiophantineFamilySpec("other")
    with pytest.raises(ValueError):
        DiophantineFamilySpec("fractional_mass", interval=(2.0, 1.0))
    with pytest.raises(ValueError):
        DiophantineFamilySpec("beam_metric", zeta=(2.0, 1.0))
    assert FRAC.default_exponent(3) == 108
    beam = DiophantineFamilySpec("beam_metric", dim=2)
    assert beam.tau_star == 3 and beam.default_exponent(2) == 4 * 4 * 8


def test_falling_factorial_product():
    # k = 3: eta^2 (eta - 1)
    assert falling_factorial_product(0.75, 3) == pytest.approx(0.75 ** 2 * (-0.25))
    assert falling_factorial_product(0.75, 1) == 1.0


def test_single_index_determinant():
    assert frequency_determinant(FRAC, [2], 1.5) == pytest.approx((4 + 1.5) ** 0.75)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_determinant_factored_vs_direct(k):
    rng = np.random.default_rng(k)
    for combo in list(combinations(range(0, 9), k))[:12]:
        t = float(rng.uniform(1.0, 2.0))
        a = frequency_determinant(FRAC, combo, t)
        b = frequency_determinant(FRAC, combo, t, method="direct")
        assert a == pytest.approx(b, rel=1e-9)


def test_determinant_coincident_radii():
    with pytest.raises(ValueError):
        frequency_determinant(FRAC, [2, -2], 1.0)
    with pytest.raises(ValueError):
        frequency_determinant(FRAC, [1], 1.0, method="other")


@pytest.mark.parametrize("k", [2, 3, 4])
def test_determinant_lower_constant(k):
    N = 9
    for t in (1.0, 1.5, 2.0):
        C = determinant_lower_constant(FRAC, k, t)
        for combo in combinations(range(0, 9), k):
            D = frequency_determinant(FRAC, combo, t)
            assert abs(D) * N ** (2 * k * k) >= C


def test_determinant_exponent_fit():
    # the minimum over more index sets can only shrink, at most like N^(-2k^2)
    slope = fit_determinant_exponent(FRAC, 2, 1.5, [3, 4, 5, 6])
    assert -1e-9 <= slope <= 2 * 2 * 2


def test_directional_examples():
    r = directional_derivative_bound([[1.0]], [5.0])
    assert r.value == 5.0 and r.bound == 5.0 and r.holds
    dep = directional_derivative_bound([[0.5, 0.5], [0.5, 0.5]], [1.0, -1.0])
    assert dep.degenerate
    with pytest.raises(ValueError):
        directional_derivative_bound([[2.0]], [1.0])


@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
@settings(max_examples=50, deadline=None)
def test_directional_random(seed, k):
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((k, k))
    U /= np.abs(U).sum(axis=1, keepdims=True)
    w = rng.standard_normal(k)
    assert directional_derivative_bound(U, w).holds


def test_sublevel_examples():
    assert sublevel_measure_bound(1, 1.0, 0.01) == pytest.approx(0.02)
    assert sublevel_measure_bound(3, 2.0, 1e-3) == pytest.approx(2 * (5 + 0.5) * 0.1)
    assert sublevel_measure_bound(2, 1.0, 1e-30) < 1e-13
    with pytest.raises(ValueError):
        sublevel_measure_bound(0, 1.0, 0.1)


def test_sublevel_against_sampling():
    # |{t in [0,1]: |t^2 - 1/4| < h}| vs the bound with m = 2, second derivative 2
    h = 1e-3
    t = np.linspace(0, 1, 2_000_001)
    meas = np.mean(np.abs(t * t - 0.25) < h)
    assert meas <= sublevel_measure_bound(2, 2.0, h)


def test_fraction_zero_gamma():
    assert resonant_fraction(FRAC, 0.0, 4, 3, 500, 0).fraction == 0.0


def test_fraction_scaling():
    rs = [resonant_fraction(FRAC, g, 4, 3, 4000, 1, exponent=1.0) for g in (1e-3, 1e-2, 1e-1)]
    for r in rs:
        sigma = math.sqrt(r.gamma * (1 - r.gamma) / r.samples)
        assert r.fraction <= r.gamma + 3 * sigma
        assert r.ci_low <= r.fraction <= r.ci_high
    slope = np.polyfit(np.log([r.gamma for r in rs]), np.log([r.fraction for r in rs]), 1)[0]
    assert 0.7 <= slope <= 1.3


def test_fraction_deterministic_across_jobs():
    a = resonant_fraction(FRAC, 0.05, 4, 3, 5000, 3, exponent=1.0, jobs=1, chunk=512)
    b = resonant_fraction(FRAC, 0.05, 4, 3, 5000, 3, exponent=1.0, jobs=4, chunk=512)
    assert a.as_dict() == b.as_dict()


def test_fraction_monotone_in_gamma():
    fr = [resonant_fraction(FRAC, g, 4, 3, 2000, 5, exponent=1.0).fraction for g in (0.01, 0.1, 1.0)]
    assert fr == sorted(fr)


def test_beam_and_convolution_families():
    beam = DiophantineFamilySpec("beam_metric", dim=1, g_dir=((1.0,),))
    r = resonant_fraction(beam, 0.1, 3, 3, 1000, 0, exponent=1.0)
    assert 0 <= r.fraction <= 1 and r.forms > 0
    conv = DiophantineFamilySpec("convolution", dim=1)
    r = resonant_fraction(conv, 0.1, 3, 3, 1000, 0)
    assert 0 <= r.fraction <= 1
    assert bourgain_threshold_check(conv, 0.1, 5, 3, 10, 0)["holds"]


def test_metric_directions():
    rng = np.random.default_rng(0)
    G = random_metric_direction(2, rng)
    assert np.linalg.norm(G) == pytest.approx(1.0)
    assert np.linalg.eigvalsh(G).min() > 0
    assert metric_diophantine_margin(G, 3) > 0
    gap, pair = metric_separation(G, 3)
    assert gap > 0 and pair[0] < pair[1]


def test_metric_failure_fraction_vanishes():
    fr = [metric_failure_fraction(2, G, 3, 200, 1) for G in (1e-1, 1e-2, 1e-4)]
    assert fr == sorted(fr, reverse=True) and fr[-1] <= 0.05
