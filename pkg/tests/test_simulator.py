import math

import numpy as np
import pytest

from nekhoroshev.simulator import (
    Grid,
    Integrator,
    SimConfig,
    SimulationError,
    escape_experiment,
    initial_state,
    observed_order,
    reversal_residual,
    run,
)
from nekhoroshev.spectrum import beam, conv_nls, fractional
from nekhoroshev.stability import ledger_for_model
from nekhoroshev.weights import gevrey


def cfg_nls(nl=(1.0,), K=8, dt=1e-3, T=0.1, **kw):
    return SimConfig(conv_nls(1), nl, K, dt, T, gevrey(0.5, 1.0), **kw)


def cfg_beam(nl=(0.0, 1.0), K=8, dt=1e-3, T=0.1, **kw):
    return SimConfig(beam([[1.0]], 1.0), nl, K, dt, T, gevrey(0.5, 1.0), **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        cfg_nls(K=0)
    with pytest.raises(ValueError):
        cfg_nls(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(conv_nls(3), (1.0,), 2, 1e-3, 1.0, gevrey(0.5))
    assert cfg_nls(T=1.0, dt=1e-3).steps == 1000


def test_grid_roundtrip_and_dealiasing():
    g = Grid(1, 4, 1)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(g.size) + 1j * rng.standard_normal(g.size)
    np.testing.assert_allclose(g.project(g.to_physical(u)), u, atol=1e-13)
    # a cubic product of single modes lands on the exact convolution
    g3 = Grid(1, 4, 3)
    e = np.zeros(g3.size, dtype=complex)
    e[g3.j[:, 0] == 3] = 1.0
    x = g3.to_physical(e)
    # |x|^2 x of a single mode e^{3ix} is the same mode
    np.testing.assert_allclose(g3.project(np.abs(x) ** 2 * x), e, atol=1e-13)


def test_linear_flow_preserves_moduli():
    cfg = cfg_nls(nl=(), T=1.0, dt=1e-2)
    u0 = initial_state(cfg, 0.1, seed=1)
    tr = run(cfg, u0)
    np.testing.assert_allclose(np.abs(tr.final_state), np.abs(u0), rtol=1e-13, atol=1e-16)
    # exact phase rotation by the frequencies
    itg = Integrator(cfg)
    np.testing.assert_allclose(tr.final_state, u0 * np.exp(-1j * itg.omega * 1.0), atol=1e-13)


def test_linear_l2_drift():
    cfg = cfg_nls(nl=(), T=10.0, dt=1e-3, record_stride=1000)
    tr = run(cfg, initial_state(cfg, 0.1, seed=2))
    assert max(abs(x - tr.norms_l2[0]) for x in tr.norms_l2) < 1e-10


def test_nls_conservation_short():
    cfg = cfg_nls(K=16, dt=1e-3, T=2.0, record_stride=100)
    tr = run(cfg, initial_state(cfg, 1e-2, seed=3))
    s = tr.summary()
    assert s["mass_drift"] < 1e-12 and s["energy_drift"] < 1e-10
    itg = Integrator(cfg)
    assert abs(itg.momentum(tr.final_state) - itg.momentum(initial_state(cfg, 1e-2, seed=3))) < 1e-14


def test_nls_order():
    cfg = cfg_nls(K=8, dt=1e-2)
    u0 = initial_state(cfg, 3.0, seed=0)
    order = observed_order(cfg, u0, 1.0, [0.01, 0.005, 0.0025, 0.00125])
    assert 1.8 <= order <= 2.2


def test_beam_order_and_reality():
    cfg = cfg_beam(K=8, dt=1e-2)
    u0 = initial_state(cfg, 0.5, seed=0)
    itg = Integrator(cfg)
    assert itg.reality_defect(u0) < 1e-15
    order = observed_order(cfg, u0, 1.0, [0.01, 0.005, 0.0025, 0.00125])
    assert 1.8 <= order <= 2.2
    tr = run(cfg_beam(T=1.0, dt=1e-3, record_stride=100), u0)
    assert itg.reality_defect(tr.final_state) < 1e-12
    assert tr.summary()["energy_drift"] < 1e-8


def test_reversal():
    cfg = cfg_nls(K=16, dt=1e-3)
    u0 = initial_state(cfg, 1e-2, seed=4)
    assert reversal_residual(cfg, u0, pairs=10) < 1e-12
    cb = cfg_beam(K=8, dt=1e-3)
    assert reversal_residual(cb, initial_state(cb, 0.1, seed=4), pairs=5) < 1e-12


def test_fractional_model_runs():
    cfg = SimConfig(fractional(1, 0.75, 1.0), (1.0,), 8, 1e-3, 0.5, gevrey(0.5, 1.0), record_stride=50)
    tr = run(cfg, initial_state(cfg, 1e-2, seed=0))
    assert tr.summary()["mass_drift"] < 1e-12


def test_two_dimensional_nls():
    cfg = SimConfig(conv_nls(2), (1.0,), 4, 1e-3, 0.2, gevrey(0.5, 1.0), record_stride=50)
    tr = run(cfg, initial_state(cfg, 1e-2, seed=0))
    s = tr.summary()
    assert s["mass_drift"] < 1e-12 and s["energy_drift"] < 1e-10


def test_initial_state():
    cfg = cfg_nls()
    itg = Integrator(cfg)
    u = initial_state(cfg, 0.3, seed=5)
    assert itg.norm_s(u) == pytest.approx(0.3, rel=1e-12)
    np.testing.assert_array_equal(u, initial_state(cfg, 0.3, seed=5))
    assert not np.any(initial_state(cfg, 0.0))
    low = initial_state(cfg, 0.3, seed=5, support=1)
    assert np.all(low[np.abs(itg.grid.j[:, 0]) > 1] == 0)


def test_contraction_guard():
    cfg = cfg_nls(dt=0.5, K=16)
    with pytest.raises(ValueError):
        run(cfg, initial_state(cfg, 5.0, seed=0))


def test_nonfinite_state_raises():
    cfg = cfg_nls()
    u = initial_state(cfg, 0.1, seed=0)
    u[0] = np.nan
    with pytest.raises(SimulationError):
        Integrator(cfg).step(u)


def test_escape_zero_and_large():
    cfg = SimConfig(conv_nls(1), (-1.0,), 16, 1e-4, 0.5, gevrey(0.5, 1.0), record_stride=100)
    rows = escape_experiment(cfg, [0.0, 20.0], support=1)
    assert rows[0]["escape_time"] is None and rows[0]["sup_norm_s"] == 0.0
    assert rows[1]["escape_time"] is not None and rows[1]["escape_time"] < 0.5


def test_escape_small_amplitude_stays():
    cfg = cfg_nls(K=16, dt=1e-2, T=20.0, record_stride=100)
    L = ledger_for_model(cfg.model, cfg.w, s0=0.5)
    rows = escape_experiment(cfg, [1e-3, 1e-2], ledger=L, log_eps0=0.0)
    for r in rows:
        assert r["escape_time"] is None and r["sup_norm_s"] < 2 * r["eps"]
        assert r["log_T_pred"] is not None and r["d_pred"] >= 4
    with pytest.raises(ValueError):
        escape_experiment(cfg, [1e-3], threshold="C_sta")


def test_escape_jobs_deterministic():
    cfg = cfg_nls(K=8, dt=1e-2, T=1.0, record_stride=10)
    a = escape_experiment(cfg, [1e-2, 5e-2, 0.1], jobs=1)
    b = escape_experiment(cfg, [1e-2, 5e-2, 0.1], jobs=3)
    assert a == b


def test_trajectory_csv():
    cfg = cfg_nls(T=0.01, dt=1e-3, record_stride=5)
    tr = run(cfg, initial_state(cfg, 0.1, seed=0))
    text = tr.to_csv()
    head, *rows = text.strip().split("\n")
    assert head == "t,norm_s,norm_l2,energy,norm_low,norm_high"
    assert len(rows) == len(tr.times) == 3
    assert math.isclose(float(rows[-1].split(",")[0]), 0.01)
