"""Frequency determinants and Monte Carlo estimates of resonant parameter sets.

Three parameter families are covered:

* fractional mass: ``omega_j(m) = (|j|^2 + m)^eta`` with ``m`` in ``[M1, M2]``;
* beam metric: ``Omega_j(xi) = sqrt(|j|_g^4 + xi)`` for a fixed unit-norm
  direction ``g`` and ``xi = m / zeta^2`` (the metric is ``zeta g``, and
  ``omega_j = zeta Omega_j(m / zeta^2)``);
* convolution potentials: ``omega_j = |j|^2 + V_j`` with ``V_j |j|^n`` uniform
  in ``[-1/2, 1/2]``.

For the first two, ``omega`` has the form ``(a_j + t)^eta`` in the parameter
``t``. The matrix of derivatives ``d^l omega_(j_i) / dt^l`` then factors as

    det = prod_i omega_i * prod_{n=0}^{k-2} (eta - n)^(k-1-n) * prod_{r<s} (x_s - x_r),

with ``x_i = 1 / (a_i + t)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import mpmath
import numpy as np
from scipy.stats import binomtest

from .lattice import ModeTable, enumerate_momentum_zero
from .spectrum import BudgetExceeded, DEFAULT_SCAN_BUDGET, divisor_rows, scan_count

FRACTIONAL_MASS = "fractional_mass"
BEAM_METRIC = "beam_metric"
CONVOLUTION = "convolution"


@dataclass(frozen=True)
class DiophantineFamilySpec:
    """Parameter family for resonant-set sampling.

    Attributes
    ----------
    family : {"fractional_mass", "beam_metric", "convolution"}
    dim : int
    interval : (float, float)
        ``[M1, M2]`` for the fractional mass.
    eta : float
    zeta : (float, float)
        Norm range of the beam metric.
    g_dir : tuple, optional
        Beam metric direction (normalised to unit Frobenius norm); random
        when omitted.
    m : float
        Beam mass.
    Gamma : float
        Beam metric Diophantine constant.
    n, mu1, mu2 : float
        Convolution potential decay and Diophantine exponents.
    """

    family: str
    dim: int = 1
    interval: tuple = (1.0, 2.0)
    eta: float = 0.75
    zeta: tuple = (1.0, 2.0)
    g_dir: tuple | None = None
    m: float = 1.0
    Gamma: float = 1e-3
    n: float = 1.0
    mu1: float = 2.0
    mu2: float = 2.0

    def __post_init__(self):
        if self.family not in (FRACTIONAL_MASS, BEAM_METRIC, CONVOLUTION):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == FRACTIONAL_MASS and not self.interval[0] < self.interval[1]:
            raise ValueError("mass interval must be nonempty")
        if self.family == BEAM_METRIC:
            if not 0 < self.zeta[0] < self.zeta[1]:
                raise ValueError("need 0 < zeta1 < zeta2")
            if self.Gamma <= 0:
                raise ValueError("Gamma must be positive")
            if self.m <= 0:
                raise ValueError("beam mass must be positive")
        if self.family == CONVOLUTION and not (self.mu1 > 1 and self.mu2 > 1):
            raise ValueError("need mu1, mu2 > 1")

    @property
    def tau_star(self) -> int:
        return self.dim * (self.dim + 1) // 2

    def default_exponent(self, d: int) -> float:
        """Threshold exponent: ``4 d^3`` (fractional), ``4 (tau* + 1) d^3`` (beam), ``tau d`` (convolution)."""
        if self.family == FRACTIONAL_MASS:
            return 4.0 * d ** 3
        if self.family == BEAM_METRIC:
            return 4.0 * (self.tau_star + 1) * d ** 3
        return (self.n + self.mu1 + self.mu2) * d

    def parameter_range(self) -> tuple[float, float]:
        if self.family == FRACTIONAL_MASS:
            return tuple(self.interval)
        if self.family == BEAM_METRIC:
            return (self.m / self.zeta[1] ** 2, self.m / self.zeta[0] ** 2)
        return (0.0, 1.0)

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["interval"] = list(self.interval)
        out["zeta"] = list(self.zeta)
        out["g_dir"] = None if self.g_dir is None else [list(r) for r in self.g_dir]
        return out


# ----------------------------------------------------------------------------
# determinants


def falling_factorial_product(eta: float, k: int) -> float:
    """``prod_{l=0}^{k-1} prod_{n<l} (eta - n) = prod_{n=0}^{k-2} (eta - n)^(k-1-n)``."""
    out = 1.0
    for n in range(k - 1):
        out *= (eta - n) ** (k - 1 - n)
    return out


def _offsets(family: DiophantineFamilySpec, indices, g=None) -> list:
    """``a_j`` such that the frequency is ``(a_j + t)^eta`` in the family parameter ``t``."""
    if family.family == FRACTIONAL_MASS:
        return [sum(x * x for x in _site(j)) for j in indices]
    if family.family == BEAM_METRIC:
        G = np.asarray(g if g is not None else family.g_dir, dtype=float)
        return [float(np.asarray(_site(j)) @ G @ np.asarray(_site(j))) ** 2 for j in indices]
    raise ValueError("determinants are defined for the fractional and beam families")


def _power(family: DiophantineFamilySpec) -> float:
    return family.eta if family.family == FRACTIONAL_MASS else 0.5


def _site(j):
    return (int(j),) if isinstance(j, (int, np.integer)) else tuple(int(x) for x in j)


def frequency_determinant(family: DiophantineFamilySpec, indices: Sequence, param: float,
                          method: str = "factored", g=None, dps: int = 40) -> float:
    """Determinant of ``d^l omega_(j_i) / dt^l`` (rows ``l = 0..k-1``).

    Parameters
    ----------
    method : {"factored", "direct"}
        ``"direct"`` differentiates the closed form numerically in
        multiprecision and takes the determinant; ``"factored"`` uses the
        Vandermonde product.

    Raises
    ------
    ValueError
        If two indices have the same offset (coincident radii).
    """
    a = _offsets(family, indices, g)
    k = len(a)
    if k < 1:
        raise ValueError("need at least one index")
    for r in range(k):
        for s in range(r + 1, k):
            if a[r] == a[s]:
                raise ValueError(f"coincident radii for {indices[r]} and {indices[s]}")
    eta = _power(family)
    if method == "factored":
        x = [1.0 / (ai + param) for ai in a]
        vdm = 1.0
        for r in range(k):
            for s in range(r + 1, k):
                vdm *= x[s] - x[r]
        return math.prod((ai + param) ** eta for ai in a) * falling_factorial_product(eta, k) * vdm
    if method == "direct":
        with mpmath.workdps(dps):
            t0 = mpmath.mpf(param)
            M = mpmath.matrix(k, k)
            for i, ai in enumerate(a):
                f = (lambda t, ai=ai: (ai + t) ** mpmath.mpf(eta))
                for l in range(k):
                    M[l, i] = mpmath.diff(f, t0, l)
            return float(mpmath.det(M))
    raise ValueError(f"unknown method {method!r}")


def determinant_lower_constant(family: DiophantineFamilySpec, k: int, param: float) -> float:
    """Instance constant ``C`` with ``|D| N^(2k^2) >= C`` for distinct integer offsets.

    From the factored form with ``omega >= param^eta``, ``|a_r - a_s| >= 1``
    and ``a + param <= 2 N^2``: ``C = param^(k eta) |prod (eta - n)^(k-1-n)| 2^(-k(k-1))``.
    Valid when every ``a_j < N^2`` and ``param <= N^2``.
    """
    eta = _power(family)
    return param ** (k * eta) * abs(falling_factorial_product(eta, k)) * 2.0 ** (-k * (k - 1))


def fit_determinant_exponent(family: DiophantineFamilySpec, k: int, param: float,
                             N_values: Sequence[int]) -> float:
    """Regression slope of ``-ln min|D|`` against ``ln N`` over index sets with ``|j| < N``."""
    xs, ys = [], []
    for N in N_values:
        radii = sorted({r for r in range(N * N) if _is_sum_of_squares(r, family.dim)})
        best = math.inf
        from itertools import combinations

        for combo in combinations(radii, k):
            idx = [_radius_site(r, family.dim) for r in combo]
            best = min(best, abs(frequency_determinant(family, idx, param)))
        xs.append(math.log(N))
        ys.append(-math.log(best))
    return float(np.polyfit(xs, ys, 1)[0])


def _is_sum_of_squares(r: int, dim: int) -> bool:
    return _radius_site(r, dim) is not None


def _radius_site(r: int, dim: int):
    R = math.isqrt(r)
    for s in product(range(R + 1), repeat=dim):
        if sum(x * x for x in s) == r:
            return s
    return None


# ----------------------------------------------------------------------------
# auxiliary lemmas


@dataclass
class DirectionalResult:
    index: int
    value: float
    bound: float
    det: float
    degenerate: bool
    holds: bool


def directional_derivative_bound(vectors, w) -> DirectionalResult:
    """``max_i |u_i . w|`` against ``||w||_1 |det(u)| / k^(3/2)``.

    Rows of ``vectors`` are the ``u_i`` (``||u_i||_1 <= 1`` required).
    A vanishing determinant is flagged as degenerate.
    """
    U = np.atleast_2d(np.asarray(vectors, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    k = U.shape[0]
    if U.shape != (k, k) or w.shape != (k,):
        raise ValueError("need k vectors of length k and w of length k")
    if np.any(np.abs(U).sum(axis=1) > 1 + 1e-12):
        raise ValueError("vectors must have l1 norm <= 1")
    det = float(abs(np.linalg.det(U)))
    proj = np.abs(U @ w)
    i = int(np.argmax(proj))
    bound = float(np.abs(w).sum() * det / k ** 1.5)
    degenerate = det <= 1e-14
    return DirectionalResult(i, float(proj[i]), bound, det, degenerate, float(proj[i]) >= bound * (1 - 1e-12))


def sublevel_measure_bound(m_order: int, d_lower: float, h: float) -> float:
    """``2 (2 + 3 + ... + m + 1/d) h^(1/m)`` (the sum ``2 + ... + m`` is empty for ``m = 1``)."""
    if m_order < 1 or d_lower <= 0 or h <= 0:
        raise ValueError("need m_order >= 1, d_lower > 0, h > 0")
    s = sum(range(2, m_order + 1))
    return 2.0 * (s + 1.0 / d_lower) * h ** (1.0 / m_order)


# ----------------------------------------------------------------------------
# beam metrics


def _sym_from_upper(v: np.ndarray, dim: int) -> np.ndarray:
    G = np.zeros((dim, dim))
    iu = np.triu_indices(dim)
    G[iu] = v
    return G + np.triu(G, 1).T


def random_metric_direction(dim: int, rng: np.random.Generator, max_tries: int = 10000) -> np.ndarray:
    """Positive definite ``g`` with ``||g||_2 = 1``; upper entries uniform on the unit sphere, rejection sampled."""
    ts = dim * (dim + 1) // 2
    for _ in range(max_tries):
        v = rng.standard_normal(ts)
        G = _sym_from_upper(v / np.linalg.norm(v), dim)
        G = G / np.linalg.norm(G)
        if np.linalg.eigvalsh(G).min() > 0:
            return G
    raise RuntimeError("no positive definite direction found")


def metric_form_vectors(dim: int, L: int) -> np.ndarray:
    """Nonzero integer vectors ``l`` of the ``tau*`` upper-triangle coordinates with ``|l|_1 <= L``."""
    ts = dim * (dim + 1) // 2
    rng_ = range(-L, L + 1)
    out = [v for v in product(rng_, repeat=ts) if 0 < sum(abs(x) for x in v) <= L]
    return np.array(out, dtype=np.int64).reshape(-1, ts)


def metric_diophantine_margin(G: np.ndarray, L: int) -> float:
    """``min_l |sum_{i<=j} g_ij l_ij| (sum |l_ij|)^(tau*)`` over integer ``l`` with ``|l|_1 <= L``.

    ``g`` belongs to the finite-``L`` version of the admissible set for
    every ``Gamma`` up to this value.
    """
    dim = G.shape[0]
    ts = dim * (dim + 1) // 2
    gv = G[np.triu_indices(dim)]
    ls = metric_form_vectors(dim, L)
    val = np.abs(ls @ gv) * np.abs(ls).sum(axis=1).astype(float) ** ts
    return float(val.min())


def metric_separation(G: np.ndarray, N: int) -> tuple[float, tuple | None]:
    """``min ||R|_g^2 - |S|_g^2|`` over integer ``R, S`` with ``|R|, |S| <= N`` and distinct norms."""
    dim = G.shape[0]
    sites = [s for s in product(range(-N, N + 1), repeat=dim) if sum(x * x for x in s) <= N * N]
    q = np.array([float(np.asarray(s) @ G @ np.asarray(s)) for s in sites])
    uq = np.unique(np.round(q, 14))
    if uq.size < 2:
        return math.inf, None
    gaps = np.diff(uq)
    k = int(np.argmin(gaps))
    return float(gaps[k]), (float(uq[k]), float(uq[k + 1]))


def metric_failure_fraction(dim: int, Gamma: float, L: int, samples: int, seed: int) -> float:
    """Fraction of random unit directions failing the finite-``L`` Diophantine test at ``Gamma``."""
    rng = np.random.default_rng(seed)
    fails = 0
    for _ in range(samples):
        G = random_metric_direction(dim, rng)
        fails += metric_diophantine_margin(G, L) < Gamma
    return fails / samples


# ----------------------------------------------------------------------------
# resonant fraction


@dataclass
class ResonantFraction:
    family: str
    gamma: float
    N: int
    d: int
    exponent: float
    threshold: float
    fraction: float
    ci_low: float
    ci_high: float
    samples: int
    seed: int
    hits: int
    forms: int
    interval_length: float

    def row(self) -> dict:
        return {k: getattr(self, k) for k in ("family", "gamma", "N", "d", "fraction", "ci_low",
                                               "ci_high", "samples", "seed")}

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _forms(table: ModeTable, ids, d_max: int, class_of, budget: int) -> tuple[np.ndarray, list]:
    """Distinct nonzero signed class-count vectors of momentum-zero multi-indices of degree ``3..d_max``."""
    keys = [class_of(table.modes[i].j) for i in range(len(table))]
    uniq = sorted(set(keys))
    pos = {k: c for c, k in enumerate(uniq)}
    cid = np.array([pos[k] for k in keys], dtype=np.int64)
    rows_all = set()
    for d in range(3, d_max + 1):
        if scan_count(len(ids), d) > budget:
            raise BudgetExceeded(f"form enumeration at degree {d} exceeds the budget of {budget}")
        rows = enumerate_momentum_zero(table, ids, d)
        A = np.zeros((rows.shape[0], len(uniq)), dtype=np.int64)
        np.add.at(A, (np.repeat(np.arange(rows.shape[0]), d), cid[rows].ravel()), table.sigma[rows].ravel())
        A = A[np.any(A != 0, axis=1)]
        # a form and its negative give the same |divisor|
        first = A[np.arange(A.shape[0]), np.argmax(A != 0, axis=1)]
        A = A * np.sign(first)[:, None]
        rows_all.update(map(tuple, A))
    forms = np.array(sorted(rows_all), dtype=np.int64).reshape(-1, len(uniq))
    return forms, uniq


def _sample_params(family: DiophantineFamilySpec, samples: int, rng: np.random.Generator):
    lo, hi = family.parameter_range()
    return rng.uniform(lo, hi, size=samples)


def _class_frequencies(family: DiophantineFamilySpec, uniq: list, t: np.ndarray, G=None) -> np.ndarray:
    """Matrix ``(samples, classes)`` of frequencies."""
    if family.family == FRACTIONAL_MASS:
        a = np.array([k[1] for k in uniq], dtype=float)
        return (a[None, :] + t[:, None]) ** family.eta
    a = np.array([float(np.asarray(k[1]) @ G @ np.asarray(k[1])) ** 2 for k in uniq])
    return np.sqrt(a[None, :] + t[:, None])


def resonant_fraction(family: DiophantineFamilySpec, gamma: float, N: int, d_max: int, samples: int,
                      seed: int, exponent: float | None = None, jobs: int = 1,
                      budget: int = DEFAULT_SCAN_BUDGET, chunk: int = 2048) -> ResonantFraction:
    """Fraction of sampled parameters with a divisor below ``gamma / N^exponent``.

    Multi-indices range over momentum-zero ones with ``|j| < N`` and degree
    ``3..d_max`` whose divisor does not vanish identically. The parameter is
    uniform on the family range; the Wilson score interval is reported.
    Samples are drawn up front from ``seed``, so the result does not depend
    on ``jobs``.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    exponent = family.default_exponent(d_max) if exponent is None else exponent
    threshold = gamma / float(N) ** exponent
    rng = np.random.default_rng(seed)
    R = N - 1
    table = ModeTable(family.dim, max(R, 0))
    ids = np.nonzero(table.radius2 < N * N)[0]
    lo, hi = family.parameter_range()
    if family.family == CONVOLUTION:
        return _convolution_fraction(family, gamma, N, d_max, samples, rng, seed, exponent, threshold,
                                     table, ids, budget)
    G = None
    if family.family == FRACTIONAL_MASS:
        class_of = lambda j: ("r2", sum(x * x for x in j))  # noqa: E731
    else:
        G = (np.asarray(family.g_dir, dtype=float) if family.g_dir is not None
             else random_metric_direction(family.dim, rng))
        G = G / np.linalg.norm(G)

        def class_of(j):
            neg = tuple(-x for x in j)
            return ("pm", max(tuple(j), neg))
    forms, uniq = _forms(table, ids, d_max, class_of, budget)
    t = _sample_params(family, samples, rng)

    def count(part):
        W = _class_frequencies(family, uniq, part, G) @ forms.T.astype(float)
        return int(np.sum(np.min(np.abs(W), axis=1) < threshold)) if forms.size else 0

    parts = [t[i:i + chunk] for i in range(0, samples, chunk)]
    if jobs > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            hits = sum(ex.map(count, parts))
    else:
        hits = sum(count(p) for p in parts)
    return _finish(family, gamma, N, d_max, exponent, threshold, hits, samples, seed, forms.shape[0], hi - lo)


def _finish(family, gamma, N, d, exponent, threshold, hits, samples, seed, nforms, length):
    ci = binomtest(hits, samples).proportion_ci(method="wilson")
    return ResonantFraction(family.family, gamma, N, d, exponent, threshold, hits / samples,
                            float(ci.low), float(ci.high), samples, seed, hits, nforms, float(length))


def _convolution_fraction(family, gamma, N, d_max, samples, rng, seed, exponent, threshold, table, ids,
                          budget):
    # classes are the sites; a form is the integer vector l of the Bourgain condition
    forms, uniq = _forms(table, ids, d_max, lambda j: ("j", tuple(j)), budget)
    r2 = np.array([sum(x * x for x in k[1]) for k in uniq], dtype=float)
    scale = np.where(r2 > 0, np.maximum(r2, 1.0) ** (-family.n / 2), 1.0)
    V = rng.uniform(-0.5, 0.5, size=(samples, len(uniq))) * scale[None, :]
    om = r2[None, :] + V
    W = np.abs(om @ forms.T.astype(float))
    hits = int(np.sum(np.min(W, axis=1) < threshold)) if forms.size else 0
    return _finish(family, gamma, N, d_max, exponent, threshold, hits, samples, seed, forms.shape[0], 1.0)


def bourgain_threshold_check(family: DiophantineFamilySpec, gamma: float, N: int, d_max: int,
                             samples: int, seed: int) -> dict:
    """Check that the product-weight lower bound implies ``gamma / N^(tau d)`` on the sampled forms.

    For every form ``l`` over sites with ``<m> < N - 1`` the product
    ``prod (1 + |l_m|^mu1 <m>^(mu2+n))`` is compared with ``N^(tau |l|_1)``.
    """
    from .spectrum import bourgain_product

    table = ModeTable(family.dim, max(N - 2, 0))
    ids = np.nonzero(np.maximum(np.sqrt(table.radius2), 1.0) < N - 1)[0]
    forms, uniq = _forms(table, ids, d_max, lambda j: ("j", tuple(j)), DEFAULT_SCAN_BUDGET)
    tau = family.n + family.mu1 + family.mu2
    worst = -math.inf
    for f in forms:
        ell = {uniq[c][1]: int(v) for c, v in enumerate(f) if v}
        lhs = math.log(bourgain_product(ell, family.mu1, family.mu2, family.n))
        rhs = tau * sum(abs(v) for v in ell.values()) * math.log(N)
        worst = max(worst, lhs - rhs)
    return {"forms": int(forms.shape[0]), "max_log_excess": worst, "holds": worst <= 1e-12}
