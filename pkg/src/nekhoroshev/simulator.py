"""Galerkin-truncated integration of the model equations in Fourier variables.

Schrodinger family (convolution and fractional)::

    i psi_t = L psi + p(|psi|^2) psi,      L e^{ijx} = omega_j e^{ijx},

with ``psi = sum_j u_j e^{ijx}`` over the box ``|j_i| <= K``. One step is
a symmetric splitting: half a step of the exact linear phases
``exp(-i omega_j dt/2)``, a full implicit-midpoint step of the projected
nonlinear flow, and another linear half step. The midpoint rule keeps every
quadratic invariant (mass, momentum) up to the fixed-point tolerance and is
its own adjoint, so the scheme is second order and time-reversible.

Beam family, with ``phi = psi_t`` and ``Omega_j = sqrt(|j|_g^4 + m)``::

    psi_tt + Omega^2 psi = -p'(psi),

split as exact rotation, kick ``phi -= dt Pi_K p'(psi)``, rotation.

Nonlinear terms are evaluated on a padded grid large enough that the
projection onto ``|j_i| <= K`` is alias-free, which keeps the truncated
system exactly translation invariant.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft as sfft

from .spectrum import BEAM, FrequencyModel
from .weights import WeightSpec

MIDPOINT_TOL = 1e-15
MIDPOINT_MAXITER = 200


class SimulationError(RuntimeError):
    """Non-finite state or failed nonlinear solve."""


@dataclass
class SimConfig:
    """Simulation setup.

    Attributes
    ----------
    model : FrequencyModel
    nonlinearity : sequence of float
        Schrodinger: coefficients ``c_k`` of ``p(x) = sum_k c_k x^k``, ``k >= 1``
        (``nonlinearity[0]`` is ``c_1``). Beam: coefficients ``b_k`` of the
        potential ``sum_k b_k psi^k``, ``k >= 3`` (``nonlinearity[0]`` is ``b_3``).
    K : int
        Mode cutoff per dimension.
    dt : float
    T_end : float
    w : WeightSpec
    seed : int
    record_stride : int
    N_split : float
        Low/high split radius for the recorded partial norms.
    escape_threshold : float, optional
        Stop when ``||u||_s`` exceeds it.
    """

    model: FrequencyModel
    nonlinearity: Sequence[float]
    K: int
    dt: float
    T_end: float
    w: WeightSpec
    seed: int = 0
    record_stride: int = 1
    N_split: float = 4.0
    escape_threshold: float | None = None

    def __post_init__(self):
        if self.model.dim not in (1, 2):
            raise ValueError("simulator supports dimensions 1 and 2")
        if self.K < 1 or self.dt == 0 or self.T_end < 0 or self.record_stride < 1:
            raise ValueError("need K >= 1, dt != 0, T_end >= 0, record_stride >= 1")
        self.nonlinearity = tuple(float(c) for c in self.nonlinearity)

    @property
    def beam(self) -> bool:
        return self.model.kind == BEAM

    @property
    def steps(self) -> int:
        return int(round(self.T_end / abs(self.dt)))


class Grid:
    """Box of modes ``|j_i| <= K`` embedded in an ``M^dim`` FFT grid."""

    def __init__(self, dim: int, K: int, factors: int):
        self.dim, self.K = dim, K
        # products of `factors` modes reach |j| <= factors*K; alias-free projection needs M > (factors+1) K
        self.M = sfft.next_fast_len((factors + 1) * K + 1)
        ks = np.arange(-K, K + 1)
        mesh = np.meshgrid(*([ks] * dim), indexing="ij")
        self.j = np.stack(mesh, axis=-1).reshape(-1, dim)
        self.idx = tuple((self.j % self.M).T)
        self.shape = (2 * K + 1,) * dim
        self.size = self.j.shape[0]

    def to_physical(self, u: np.ndarray) -> np.ndarray:
        buf = np.zeros((self.M,) * self.dim, dtype=complex)
        buf[self.idx] = u
        return sfft.ifftn(buf) * self.M ** self.dim

    def project(self, g: np.ndarray) -> np.ndarray:
        return sfft.fftn(g)[self.idx] / self.M ** self.dim

    def mean(self, g: np.ndarray) -> float:
        return float(np.mean(g).real)


def _poly(coeffs: Sequence[float], x: np.ndarray, start: int) -> np.ndarray:
    out = np.zeros_like(x)
    for k, c in enumerate(coeffs, start=start):
        if c:
            out = out + c * x ** k
    return out


class Integrator:
    """Stepper and diagnostics for one configuration."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        m = cfg.model
        degree = len(cfg.nonlinearity)
        if cfg.beam:
            factors = max(degree + 1, 1)  # p' of a degree (degree+2) potential
        else:
            factors = 2 * degree + 1
        self.grid = Grid(m.dim, cfg.K, factors)
        j = self.grid.j
        self.omega = np.array([m.omega(tuple(int(x) for x in row)) for row in j], dtype=float)
        self.bracket = np.maximum(np.sqrt(np.sum(j * j, axis=1)), cfg.w.c)
        self.wf = np.exp(cfg.w.s * np.asarray(cfg.w.f(self.bracket)))
        self.low = np.sum(j * j, axis=1) <= cfg.N_split ** 2
        self.neg = self._negation_index()

    def _negation_index(self) -> np.ndarray:
        pos = {tuple(r): i for i, r in enumerate(self.grid.j)}
        return np.array([pos[tuple(-r)] for r in self.grid.j])

    # -- state layout: Schrodinger u (size n); beam (psi_hat, phi_hat) stacked (2, n)

    def zeros(self) -> np.ndarray:
        n = self.grid.size
        return np.zeros((2, n) if self.cfg.beam else n, dtype=complex)

    def amplitudes(self, state: np.ndarray) -> np.ndarray:
        """Complex normal-mode amplitudes ``u_(j,+)``.

        Schrodinger: the state itself. Beam: ``(Omega^(1/2) psi + i Omega^(-1/2) phi) / sqrt 2``,
        which rotate as ``exp(-i Omega t)`` under the linear flow.
        """
        if not self.cfg.beam:
            return state
        psi, phi = state
        return (np.sqrt(self.omega) * psi + 1j * phi / np.sqrt(self.omega)) / math.sqrt(2)

    def from_amplitudes(self, u: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`amplitudes` for a Hermitian (real-field) beam state."""
        if not self.cfg.beam:
            return np.asarray(u, dtype=complex)
        ub = np.conj(u[self.neg])
        psi = (u + ub) / (math.sqrt(2) * np.sqrt(self.omega))
        phi = (u - ub) * np.sqrt(self.omega) / (1j * math.sqrt(2))
        return np.stack([psi, phi])

    # -- flows

    def _nls_field(self, u: np.ndarray) -> np.ndarray:
        psi = self.grid.to_physical(u)
        return -1j * self.grid.project(_poly(self.cfg.nonlinearity, np.abs(psi) ** 2, 1) * psi)

    def _force(self, psi_hat: np.ndarray) -> np.ndarray:
        psi = self.grid.to_physical(psi_hat).real
        deriv = [(k + 3) * b for k, b in enumerate(self.cfg.nonlinearity)]
        return self.grid.project(_poly(deriv, psi, 2))

    def step(self, state: np.ndarray, dt: float | None = None) -> np.ndarray:
        dt = self.cfg.dt if dt is None else dt
        if self.cfg.beam:
            s = self._rotate(state, dt / 2)
            if any(self.cfg.nonlinearity):
                s = np.stack([s[0], s[1] - dt * self._force(s[0])])
            out = self._rotate(s, dt / 2)
        else:
            ph = np.exp(-0.5j * dt * self.omega)
            v = ph * state
            if any(self.cfg.nonlinearity):
                v = self._midpoint(v, dt)
            out = ph * v
        if not np.all(np.isfinite(out)):
            raise SimulationError("non-finite state")
        return out

    def _midpoint(self, u: np.ndarray, dt: float) -> np.ndarray:
        v = u + dt * self._nls_field(u)
        scale = max(float(np.max(np.abs(u))), 1e-300)
        for _ in range(MIDPOINT_MAXITER):
            new = u + dt * self._nls_field(0.5 * (u + v))
            diff = float(np.max(np.abs(new - v)))
            v = new
            if diff <= MIDPOINT_TOL * scale:
                return v
        raise SimulationError("implicit midpoint iteration did not converge; reduce dt")

    def _rotate(self, state: np.ndarray, t: float) -> np.ndarray:
        psi, phi = state
        W = self.omega
        c, s = np.cos(W * t), np.sin(W * t)
        return np.stack([c * psi + s * phi / W, -W * s * psi + c * phi])

    # -- diagnostics

    def norm_s(self, state: np.ndarray, mask: np.ndarray | None = None) -> float:
        """``sqrt(2 sum |u_j|^2 e^{2 s f(<j>)})``: both signs of every site."""
        u = self.amplitudes(state)
        v = u * self.wf
        if mask is not None:
            v = v[mask]
        return float(math.sqrt(2.0) * np.linalg.norm(v))

    def norm_l2(self, state: np.ndarray) -> float:
        return float(math.sqrt(2.0) * np.linalg.norm(self.amplitudes(state)))

    def mass(self, state: np.ndarray) -> float:
        return float(np.sum(np.abs(self.amplitudes(state)) ** 2))

    def momentum(self, state: np.ndarray) -> np.ndarray:
        a2 = np.abs(self.amplitudes(state)) ** 2
        return (self.grid.j * a2[:, None]).sum(axis=0)

    def energy(self, state: np.ndarray) -> float:
        c = self.cfg.nonlinearity
        if self.cfg.beam:
            psi_hat, phi_hat = state
            quad = 0.5 * float(np.sum(np.abs(phi_hat) ** 2 + self.omega ** 2 * np.abs(psi_hat) ** 2))
            if not any(c):
                return quad
            psi = self.grid.to_physical(psi_hat).real
            return quad + self.grid.mean(_poly(c, psi, 3))
        quad = float(np.sum(self.omega * np.abs(state) ** 2))
        if not any(c):
            return quad
        prim = [ck / (k + 2) for k, ck in enumerate(c)]
        rho = np.abs(self.grid.to_physical(state)) ** 2
        return quad + self.grid.mean(_poly(prim, rho, 2))

    def reality_defect(self, state: np.ndarray) -> float:
        """Beam: ``max |psi_hat_(-j) - conj(psi_hat_j)|`` (and for ``phi``); 0 for Schrodinger."""
        if not self.cfg.beam:
            return 0.0
        return float(max(np.max(np.abs(state[0][self.neg] - np.conj(state[0]))),
                         np.max(np.abs(state[1][self.neg] - np.conj(state[1])))))

    def nonlinear_contraction(self, state: np.ndarray) -> float:
        """``|dt| * Lip`` of the nonlinear substep near ``state`` (must stay below 1/2)."""
        c = self.cfg.nonlinearity
        if not any(c):
            return 0.0
        amp = float(np.sum(np.abs(self.amplitudes(state))))  # bounds sup |psi|
        if self.cfg.beam:
            lip = sum(abs(b) * (k + 3) * (k + 2) * amp ** (k + 1) for k, b in enumerate(c))
            return abs(self.cfg.dt) * lip / max(float(self.omega.min()), 1e-300)
        lip = sum(abs(ck) * (2 * k + 3) * amp ** (2 * k + 2) for k, ck in enumerate(c))
        return abs(self.cfg.dt) * lip


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    norms_s: list = field(default_factory=list)
    norms_l2: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    norm_low: list = field(default_factory=list)
    norm_high: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    escape_time: float | None = None
    final_state: np.ndarray | None = None

    COLUMNS = ("t", "norm_s", "norm_l2", "energy", "norm_low", "norm_high")

    def rows(self) -> list[dict]:
        return [dict(zip(self.COLUMNS, r)) for r in zip(self.times, self.norms_s, self.norms_l2,
                                                          self.energy, self.norm_low, self.norm_high)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.COLUMNS)
        for r in zip(self.times, self.norms_s, self.norms_l2, self.energy, self.norm_low, self.norm_high):
            wr.writerow([repr(float(x)) for x in r])
        return buf.getvalue()

    def summary(self) -> dict:
        e0 = self.energy[0] if self.energy else 0.0
        m0 = self.mass[0] if self.mass else 0.0
        return {
            "records": len(self.times),
            "t_end": self.times[-1] if self.times else 0.0,
            "sup_norm_s": max(self.norms_s) if self.norms_s else 0.0,
            "energy_drift": max(abs(e - e0) for e in self.energy) / abs(e0) if e0 else 0.0,
            "mass_drift": max(abs(m - m0) for m in self.mass) / m0 if m0 else 0.0,
            "escape_time": self.escape_time,
        }


def initial_state(cfg: SimConfig, eps: float, seed: int | None = None, support: float | None = None,
                  integrator: Integrator | None = None) -> np.ndarray:
    """Random state with ``||u||_s = eps``; modes with ``|j| <= support`` (default: all).

    Beam states are built from Hermitian-symmetric amplitudes so that the
    physical fields are real.
    """
    itg = integrator or Integrator(cfg)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    n = itg.grid.size
    z = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / itg.wf
    if support is not None:
        z = np.where(np.sum(itg.grid.j ** 2, axis=1) <= support ** 2, z, 0)
    state = itg.from_amplitudes(z) if cfg.beam else z
    if cfg.beam:
        psi = 0.5 * (state[0] + np.conj(state[0][itg.neg]))
        phi = 0.5 * (state[1] + np.conj(state[1][itg.neg]))
        state = np.stack([psi, phi])
    nrm = itg.norm_s(state)
    if eps == 0 or nrm == 0:
        return itg.zeros()
    return state * (eps / nrm)


def run(cfg: SimConfig, initial: np.ndarray, integrator: Integrator | None = None,
        check_contraction: bool = True) -> Trajectory:
    """Integrate to ``T_end`` (or escape), recording every ``record_stride`` steps.

    Raises
    ------
    ValueError
        If the nonlinear substep is not a contraction at the initial state.
    SimulationError
        On a non-finite state.
    """
    itg = integrator or Integrator(cfg)
    state = np.array(initial, dtype=complex)
    if check_contraction:
        q = itg.nonlinear_contraction(state)
        if q >= 0.5:
            raise ValueError(f"dt too large for the nonlinear substep (contraction {q:.3g} >= 0.5)")
    tr = Trajectory()

    def record(t, st):
        tr.times.append(float(t))
        tr.norms_s.append(itg.norm_s(st))
        tr.norms_l2.append(itg.norm_l2(st))
        tr.energy.append(itg.energy(st))
        tr.norm_low.append(itg.norm_s(st, itg.low))
        tr.norm_high.append(itg.norm_s(st, ~itg.low))
        tr.mass.append(itg.mass(st))

    record(0.0, state)
    thr = cfg.escape_threshold
    for n in range(1, cfg.steps + 1):
        state = itg.step(state)
        t = n * abs(cfg.dt)
        escaped = thr is not None and itg.norm_s(state) > thr
        if n % cfg.record_stride == 0 or n == cfg.steps or escaped:
            record(t, state)
        if escaped:
            tr.escape_time = t
            break
    tr.final_state = state
    return tr


def observed_order(cfg: SimConfig, initial: np.ndarray, T: float, dts: Sequence[float],
                   refine: int = 8) -> float:
    """Least-squares slope of ``log error`` against ``log dt``.

    The reference is a run with step ``min(dts) / refine``; errors are state
    differences at time ``T``.
    """
    itg = Integrator(cfg)

    def final(dt):
        st = np.array(initial, dtype=complex)
        for _ in range(int(round(T / dt))):
            st = itg.step(st, dt)
        return st

    ref = final(min(dts) / refine)
    errs = [float(np.linalg.norm(final(dt) - ref)) for dt in dts]
    return float(np.polyfit(np.log(dts), np.log(errs), 1)[0])


def reversal_residual(cfg: SimConfig, state: np.ndarray, pairs: int = 1) -> float:
    """Max relative distance after ``+dt`` then ``-dt``, per step pair."""
    itg = Integrator(cfg)
    worst = 0.0
    st = np.array(state, dtype=complex)
    scale = max(float(np.max(np.abs(st))), 1e-300)
    for _ in range(pairs):
        fwd = itg.step(st, cfg.dt)
        back = itg.step(fwd, -cfg.dt)
        worst = max(worst, float(np.max(np.abs(back - st))) / scale)
        st = fwd
    return worst


def escape_experiment(cfg: SimConfig, eps_grid: Sequence[float], ledger=None, p: float | None = None,
                      threshold: str = "2r", jobs: int = 1, log_eps0: float | None = None,
                      support: float | None = None) -> list[dict]:
    """Integrate random data on ``||u||_s = eps`` for each ``eps`` until escape or ``T_end``.

    ``threshold`` is ``"2r"`` (escape above ``2 eps``) or ``"C_sta"`` (above
    ``eps / C_sta``; needs a ledger). Rows carry the predicted log time from
    :func:`nekhoroshev.stability.predict_time` when ``eps`` is below the
    smallness threshold (``log_eps0``, default from the balance); otherwise
    ``log_T_pred`` is ``None``. ``support`` restricts the initial data to
    ``|j| <= support``.
    """
    from concurrent.futures import ThreadPoolExecutor
    from dataclasses import replace

    from .stability import predict_time

    if threshold not in ("2r", "C_sta"):
        raise ValueError("threshold must be '2r' or 'C_sta'")
    if threshold == "C_sta" and ledger is None:
        raise ValueError("the C_sta threshold needs a ledger")
    p = cfg.model.params.p if p is None else p

    def one(i_eps):
        i, eps = i_eps
        factor = 2.0 if threshold == "2r" else 1.0 / ledger.C_sta
        c = replace(cfg, escape_threshold=factor * eps if eps > 0 else math.inf, seed=cfg.seed + i)
        itg = Integrator(c)
        u0 = initial_state(c, eps, support=support, integrator=itg)
        tr = run(c, u0, itg)
        row = {"eps": eps, "threshold": factor * eps, "escape_time": tr.escape_time,
               "horizon": c.T_end, "sup_norm_s": max(tr.norms_s), "log_T_pred": None, "d_pred": None}
        if ledger is not None and eps > 0:
            try:
                pred = predict_time(cfg.w, p, eps, ledger, log_eps0=log_eps0)
                row["log_T_pred"], row["d_pred"] = pred.log_T, pred.d
            except ValueError:
                pass
        return row

    items = list(enumerate(eps_grid))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(one, items))
    return [one(it) for it in items]
