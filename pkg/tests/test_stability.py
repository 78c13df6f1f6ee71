import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw

from nekhoroshev.spectrum import conv_nls
from nekhoroshev.stability import (
    BalanceError,
    LedgerInputs,
    admissible_exponent,
    bound_chain,
    build_ledger,
    default_log_eps0,
    divisor_floor,
    gevrey_ratio,
    lambert_w_minus1,
    ledger_for_model,
    log_divisor_floor,
    log_gate,
    logultra_growth_exponent,
    logultra_sandwich,
    predict_time,
    radius_schedule,
    solve_balance,
)
from nekhoroshev.weights import gevrey, log_ultra


def inputs(**kw):
    base = dict(C0=2.0, C1=1.0, C2=0.5, beta=2.0, delta=1.0, tau=1.0, gamma=0.5, p=1.0,
                C_P=1.0, s=1.0, Cf=2 ** -0.5, f_C1=1.0, s0=0.5)
    base.update(kw)
    return LedgerInputs(**base)


def test_ledger_golden_values():
    L = build_ledger(inputs())
    assert L.C_exp == 4
    assert L.C_fin == 32
    assert L.C_deno == 64
    assert L.C_sep == pytest.approx(2.0)
    assert L.S_fin == pytest.approx(0.5 + 32)
    assert L.C_sta == pytest.approx(math.exp(-2 * 2 ** -0.5))
    assert L.C_estP == pytest.approx(64 * math.e ** 2 / 0.5)


def test_ledger_closed_forms():
    i = inputs(tau=2.0, beta=3.0, delta=0.5, p=2.0, C0=3.0, C2=0.25)
    L = build_ledger(i)
    assert L.C_exp == pytest.approx(2 * (1 + 3 / 0.5) + 1)
    assert L.C_fin == pytest.approx(2 ** 4 * L.C_exp)
    assert L.C_deno == pytest.approx((3 / 0.25 + 9) ** 3)
    assert L.C_rema >= max(L.C_deno, L.C_estP)
    assert L.D_fin >= 4 * L.C_rema


def test_ledger_validation():
    with pytest.raises(ValueError):
        build_ledger(inputs(Cf=1.0))
    with pytest.raises(ValueError):
        build_ledger(inputs(beta=1.0))
    with pytest.raises(ValueError):
        build_ledger(inputs(gamma=0.0))


def test_ledger_for_model():
    L = ledger_for_model(conv_nls(1), gevrey(0.5, 1.0), s0=0.25)
    assert L.C_exp == 4 and L.C_deno == 64 and L.inputs.s0 == 0.25
    assert L.as_dict()["inputs"]["gamma"] == 0.5


def test_divisor_floor_and_gate():
    L = build_ledger(inputs())
    assert log_divisor_floor(L, 3, 3) == pytest.approx(math.log(0.5) - 4 * 3 * math.log(64 * 9))
    assert divisor_floor(L, 3, 3) == pytest.approx(0.5 / (64 * 9) ** 12)
    assert log_gate(L, 1e-300, 3, 3) < 0 < log_gate(L, 1e-3, 3, 3)
    assert radius_schedule(1.0, 5, 3) == 2.0 and radius_schedule(1.0, 5, 5) == 1.0


def test_bound_chain_under_gate_monotone():
    L = build_ledger(inputs())
    for d in (4, 5, 6):
        r = math.exp(-log_gate(L, 1.0, d, 3) - 1)
        logs = [s.log_P_bound for s in bound_chain(L, r, d, 3)]
        assert all(b < a for a, b in zip(logs, logs[1:]))


def test_lambert_example():
    assert lambert_w_minus1(-0.05) == pytest.approx(-4.4998, abs=1e-4)
    # bisection oracle; x e^x decreases on (-inf, -1)
    lo, hi = -50.0, -1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * math.exp(mid) > -0.05:
            lo = mid
        else:
            hi = mid
    assert lambert_w_minus1(-0.05) == pytest.approx(mid, rel=1e-14)


def test_lambert_against_scipy_and_bounds():
    for y in -np.logspace(-300, math.log10(0.27), 200):
        x = lambert_w_minus1(y)
        assert x == pytest.approx(lambertw(y, -1).real, rel=1e-12)
        assert abs(x * math.exp(x) - y) <= 1e-12 * abs(y)
        L = math.log(-1 / y)
        assert L < -x < 2 * L


def test_lambert_monotone_branch():
    ys = -np.logspace(-1, -30, 50)
    xs = [-lambert_w_minus1(y) for y in ys]
    assert all(b > a for a, b in zip(xs, xs[1:]))
    with pytest.raises(ValueError):
        lambert_w_minus1(-0.5)
    with pytest.raises(ValueError):
        lambert_w_minus1(0.0)


def test_balance_example():
    sol = solve_balance(gevrey(0.5), 1.0, 10)
    assert sol.N == pytest.approx(2.9e6, rel=0.05)
    lhs = 10 * math.log(10 * sol.N)
    assert abs(math.sqrt(sol.N) / 10 - lhs) / lhs < 1e-8
    assert sol.log_N_closed == pytest.approx(sol.log_N, rel=1e-10)


@pytest.mark.parametrize("theta", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_balance_closed_form_agrees(theta, p):
    w = gevrey(theta)
    for d in (5, 6, 10, 25, 50, 100, 200):
        sol = solve_balance(w, p, d)
        assert sol.log_N == pytest.approx(sol.log_N_closed, rel=1e-6)
        assert sol.residual < 1e-8


def test_balance_logultra():
    sol = solve_balance(log_ultra(2.0), 1.0, 10)
    assert sol.log_N_closed is None and sol.residual < 1e-8
    with pytest.raises(BalanceError):
        solve_balance(gevrey(0.5), 1.0, 3)


def test_gevrey_ratio_same_order():
    w = gevrey(0.5)
    a, b = (gevrey_ratio(solve_balance(w, 1.0, d)) for d in (40, 80))
    assert abs(a - b) / max(a, b) < 0.25


@pytest.mark.parametrize("q", [2.0, 2.5, 3.0])
@pytest.mark.parametrize("p", [1.0, 2.0])
def test_logultra_sandwich(q, p):
    w = log_ultra(q)
    for d in (8, 16, 32, 64):
        sol = solve_balance(w, p, d)
        lo, hi = logultra_sandwich(q, p, d)
        assert lo <= sol.log_N <= hi


def test_admissible_exponent():
    a = admissible_exponent(2.0, 1.0)
    assert a == pytest.approx(1 / 3)
    assert logultra_growth_exponent(1 / 3 - 1e-6, 2.0, 1.0) > 0
    assert logultra_growth_exponent(1 / 3 + 1e-6, 2.0, 1.0) < 0


@given(st.floats(1.5, 4.0), st.floats(0.5, 3.0))
@settings(max_examples=50, deadline=None)
def test_admissible_exponent_is_sign_change(q, p):
    a = admissible_exponent(q, p)
    assert logultra_growth_exponent(a, q, p) == pytest.approx(0.0, abs=1e-12)


def test_predict_time():
    w = gevrey(0.5, 1.0)
    L = ledger_for_model(conv_nls(1), w, s0=0.5)
    le0 = default_log_eps0(w, 1.0, 4)
    with pytest.raises(ValueError):
        predict_time(w, 1.0, None, L, log_eps=le0 + 1)
    rows = [predict_time(w, 1.0, None, L, log_eps=le0 * k) for k in (1, 2, 4, 8)]
    ds = [r.d for r in rows]
    logs = [r.log_T for r in rows]
    assert ds == sorted(ds) and all(b > a for a, b in zip(logs, logs[1:]))
    assert rows[0].d == 4 and rows[0].regime == "gevrey"
    # the chosen degree is the largest admitted one
    for r in rows:
        assert r.abs_log_r <= abs(r.log_eps) < solve_balance(w, 1.0, r.d + 1).abs_log_r
    u = predict_time(log_ultra(2.0), 1.0, None, L, log_eps=-1e4)
    assert u.regime == "logultra" and u.a == pytest.approx(1 / 3)
