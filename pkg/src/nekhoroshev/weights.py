"""Weight functions and the weighted sequence norm.

Two families are supported: Gevrey weights ``f(x) = x**theta`` and
logarithmic ultra-differentiable weights ``f(x) = (ln(x + kappa))**q``. The
norm of a truncated state is

    ||u||_s = sqrt( sum_J |u_J|^2 exp(2 s f(<j>)) ),

summed over both signs of every site.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .lattice import DEFAULT_C, ModeTable

GEVREY = "gevrey"
LOGULTRA = "logultra"


@dataclass(frozen=True)
class WeightSpec:
    """Weight family, scale and derived constants.

    Attributes
    ----------
    kind : {"gevrey", "logultra"}
    s : float
        Scale of the norm.
    theta : float, optional
        Gevrey exponent in (0, 1).
    q : float, optional
        Log-ultra exponent, > 1.
    kappa : float, optional
        Log-ultra shift, defaults to ``e**q``.
    Cf : float
        Subadditivity constant; ``2**(theta-1)`` for Gevrey, calibrated for
        log-ultra weights.
    s0 : float, optional
        Reference scale, see :func:`reference_scale`.
    c : float
        Floor in ``<j> = max(|j|, c)``.
    """

    kind: str
    s: float = 1.0
    theta: float | None = None
    q: float | None = None
    kappa: float | None = None
    Cf: float = float("nan")
    s0: float | None = None
    c: float = DEFAULT_C

    def __post_init__(self):
        if self.kind == GEVREY:
            if self.theta is None or not 0 < self.theta < 1:
                raise ValueError("Gevrey weight needs 0 < theta < 1")
        elif self.kind == LOGULTRA:
            if self.q is None or self.q <= 1:
                raise ValueError("log-ultra weight needs q > 1")
            if self.kappa is None:
                object.__setattr__(self, "kappa", math.exp(self.q))
            if self.kappa < math.exp(self.q) * (1 - 1e-12):
                raise ValueError("log-ultra weight needs kappa >= e**q")
        else:
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.s <= 0:
            raise ValueError("scale s must be positive")
        if math.isnan(self.Cf):
            object.__setattr__(self, "Cf", default_Cf(self))

    def f(self, x):
        """Evaluate the weight function (no domain check)."""
        x = np.asarray(x, dtype=float)
        if self.kind == GEVREY:
            out = x ** self.theta
        else:
            out = np.log(x + self.kappa) ** self.q
        return out if out.ndim else float(out)

    def log_f_of_exp(self, L: float) -> float:
        """``f(exp(L))`` without overflow, for large ``L``."""
        if self.kind == GEVREY:
            return math.exp(self.theta * L)
        return (L + math.log1p(self.kappa * math.exp(-L))) ** self.q

    def label(self) -> str:
        if self.kind == GEVREY:
            return f"gevrey(theta={self.theta:g}, s={self.s:g})"
        return f"logultra(q={self.q:g}, kappa={self.kappa:g}, s={self.s:g})"


def gevrey(theta: float, s: float = 1.0, c: float = DEFAULT_C) -> WeightSpec:
    return WeightSpec(GEVREY, s=s, theta=theta, c=c)


def log_ultra(q: float, s: float = 1.0, kappa: float | None = None, c: float = DEFAULT_C) -> WeightSpec:
    return WeightSpec(LOGULTRA, s=s, q=q, kappa=kappa, c=c)


def default_Cf(w: WeightSpec) -> float:
    if w.kind == GEVREY:
        return 2.0 ** (w.theta - 1.0)
    return calibrate_Cf(w.f, w.c)


def calibrate_Cf(f: Callable, c: float = DEFAULT_C, x_hi: float = 1e12, pad: float = 1e-9) -> float:
    """Smallest constant with ``f(2x) <= (1 + Cf) f(x)`` for ``x >= c``.

    For concave increasing ``f`` this two-point constant is enough for the
    full multi-term subadditivity inequality (induction on the number of
    terms, peeling off the smallest). A dense log grid locates the maximum,
    a bounded scalar search refines it, and ``pad`` is added on top.
    """
    xs = np.geomspace(c, x_hi, 4001)
    g = np.asarray(f(2 * xs)) / np.asarray(f(xs)) - 1.0
    k = int(np.argmax(g))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]
    best = float(g[k])
    if hi > lo:
        res = minimize_scalar(lambda t: -(f(2 * math.exp(t)) / f(math.exp(t)) - 1.0),
                              bounds=(math.log(lo), math.log(hi)), method="bounded",
                              options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best + pad


def weight_value(w: WeightSpec, x: float) -> float:
    """``f(x)`` for ``x >= 1``."""
    if x < 1:
        raise ValueError(f"weight argument must be >= 1, got {x}")
    return float(w.f(x))


@dataclass
class A0Report:
    passed: bool
    samples: int
    worst_margin: float
    counterexample: tuple[float, ...] | None = None

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "samples": self.samples,
            "worst_margin": self.worst_margin,
            "counterexample": list(self.counterexample) if self.counterexample else None,
        }


def check_A0(w: WeightSpec | Callable, d_max: int, samples: int, seed: int,
             Cf: float | None = None, c: float = DEFAULT_C, x_hi: float = 1e8) -> A0Report:
    """Random test of ``f(sum x) <= f(max x) + Cf * sum_{others} f(x_l)``.

    ``w`` may be a :class:`WeightSpec` or a plain callable (tabulated or custom
    weights), in which case ``Cf`` must be given. Half of the vectors are drawn
    near the floor ``c`` and half log-uniformly up to ``x_hi``. The margin is
    relative to the right-hand side.
    """
    if d_max < 2:
        raise ValueError("d_max must be >= 2")
    if isinstance(w, WeightSpec):
        f, Cf, c = w.f, (w.Cf if Cf is None else Cf), w.c
    else:
        if Cf is None:
            raise ValueError("Cf is required for a custom weight function")
        f = w
    rng = np.random.default_rng(seed)
    worst, witness = math.inf, None
    ds = rng.integers(2, d_max + 1, size=samples)
    for d in range(2, d_max + 1):
        rows = int(np.sum(ds == d))
        if not rows:
            continue
        near = rng.uniform(c, 10 * c, size=(rows, d))
        far = np.exp(rng.uniform(math.log(c), math.log(x_hi), size=(rows, d)))
        pick = rng.random(rows) < 0.5
        x = np.where(pick[:, None], near, far)
        fx = np.asarray(f(x))
        lhs = np.asarray(f(x.sum(axis=1)))
        kmax = np.argmax(x, axis=1)
        fmax = fx[np.arange(rows), kmax]
        rhs = fmax + Cf * (fx.sum(axis=1) - fmax)
        margin = (rhs - lhs) / rhs
        k = int(np.argmin(margin))
        if margin[k] < worst:
            worst, witness = float(margin[k]), tuple(float(v) for v in x[k])
    passed = worst >= -1e-12
    return A0Report(passed, int(samples), worst, None if passed else witness)


@dataclass(frozen=True, eq=False)
class WeightedState:
    """Amplitudes on the modes of a :class:`ModeTable`.

    ``values[i]`` is the amplitude of ``table.modes[i]``. ``real`` records that
    the state satisfies ``u_(j,-) = conj(u_(j,+))``.
    """

    table: ModeTable
    values: np.ndarray
    real: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (len(self.table),):
            raise ValueError("state length does not match the mode table")
        object.__setattr__(self, "values", v)

    def as_dict(self) -> dict:
        return {self.table.modes[i]: complex(v) for i, v in enumerate(self.values) if v != 0}

    def is_real(self, tol: float = 1e-12) -> bool:
        v = self.values
        return bool(np.max(np.abs(v[self.table.conj] - np.conj(v)), initial=0.0) <= tol)

    def project_high(self, N: float) -> "WeightedState":
        return WeightedState(self.table, np.where(self.table.high_mask(N), self.values, 0), self.real)

    def project_low(self, N: float) -> "WeightedState":
        return WeightedState(self.table, np.where(self.table.high_mask(N), 0, self.values), self.real)

    def __add__(self, other: "WeightedState") -> "WeightedState":
        return WeightedState(self.table, self.values + other.values, self.real and other.real)

    def scaled(self, a: complex) -> "WeightedState":
        return WeightedState(self.table, a * self.values, self.real and complex(a).imag == 0)


def weight_factors(w: WeightSpec, table: ModeTable, s: float | None = None) -> np.ndarray:
    """``exp(s f(<j>))`` for every mode of the table."""
    s = w.s if s is None else s
    return np.exp(s * np.asarray(w.f(table.bracket_radius)))


def norm_s(u: WeightedState, w: WeightSpec, s: float | None = None) -> float:
    """Weighted norm ``sqrt(sum |u_J|^2 exp(2 s f(<j>)))``."""
    return float(np.linalg.norm(u.values * weight_factors(w, u.table, s)))


def reference_scale(w: WeightSpec, table: ModeTable) -> float:
    """Smallest ``s0`` (plus a hair) with ``sum_J exp((2Cf-2) s0 f(<j>)) < 1/3``.

    The sum runs over every mode of the table (both signs).
    """
    fv = np.asarray(w.f(table.bracket_radius))
    rate = 2.0 * w.Cf - 2.0

    def excess(s0):
        return float(np.sum(np.exp(rate * s0 * fv))) - 1.0 / 3.0

    hi = 1.0
    while excess(hi) >= 0:
        hi *= 2.0
    root = brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-14)
    return root * (1 + 1e-9) + 1e-12


def with_reference_scale(w: WeightSpec, table: ModeTable) -> WeightSpec:
    return replace(w, s0=reference_scale(w, table))


def sample_sphere(w: WeightSpec, r: float, table: ModeTable, support: Sequence[int] | None = None,
                  seed: int | np.random.Generator = 0, real: bool = False) -> WeightedState:
    """Random state with ``||u||_s = r`` supported on ``support`` (mode ids).

    Complex Gaussian amplitudes are damped by ``exp(-s f(<j>))`` and then
    normalised. With ``real=True`` the conjugate of every supported mode is
    added to the support and set to the conjugate amplitude.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = len(table)
    ids = np.arange(n) if support is None else np.unique(np.asarray(support, dtype=np.int64))
    if ids.size == 0:
        raise ValueError("support must be non-empty")
    z = (rng.standard_normal(ids.size) + 1j * rng.standard_normal(ids.size)) / math.sqrt(2)
    vals = np.zeros(n, dtype=complex)
    vals[ids] = z / weight_factors(w, table)[ids]
    if real:
        sites = np.unique(np.where(table.sigma[ids] > 0, ids, table.conj[ids]))
        vals[:] = 0
        vals[sites] = z[: sites.size] / weight_factors(w, table)[sites]
        vals[table.conj[sites]] = np.conj(vals[sites])
    state = WeightedState(table, vals, real)
    nrm = norm_s(state, w)
    if nrm == 0:
        raise ValueError("degenerate sample")
    return WeightedState(table, vals * (r / nrm), real)
