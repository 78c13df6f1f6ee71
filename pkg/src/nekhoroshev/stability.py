"""Constants ledger, balancing equation and stability-time predictions.

The ledger collects every explicit constant of the iteration scheme as a pure
function of the model and weight inputs. The balancing equation

    d^p ln(d N) = f(N) / d

ties the cutoff ``N`` to the normal-form degree ``d``; the smallness scale then
follows from ``|ln r| = 2 d^p ln(d N)``. Predicted times are returned in log
form because they overflow any floating-point type almost immediately.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from scipy.optimize import brentq, minimize_scalar

from .weights import GEVREY, WeightSpec, gevrey

E = math.e


@dataclass(frozen=True)
class LedgerInputs:
    C0: float
    C1: float
    C2: float
    beta: float
    delta: float
    tau: float
    gamma: float
    p: float
    C_P: float
    s: float
    Cf: float
    f_C1: float
    s0: float


@dataclass(frozen=True)
class ConstantsLedger:
    """Explicit constants of the scheme (see :func:`build_ledger`)."""

    inputs: LedgerInputs
    C_sep: float
    C_deno: float
    C_exp: float
    C_estP: float
    C_thre: float
    C_rema: float
    C_fin: float
    D_fin: float
    S_fin: float
    C_sta: float

    def as_dict(self) -> dict:
        out = asdict(self)
        out["inputs"] = asdict(self.inputs)
        return out


def build_ledger(inputs: LedgerInputs) -> ConstantsLedger:
    """Evaluate every constant from its closed form.

    Raises
    ------
    ValueError
        On nonpositive inputs, ``Cf >= 1`` or ``beta <= 1``.
    """
    i = inputs
    for name in ("C0", "C1", "C2", "beta", "delta", "tau", "gamma", "p", "C_P", "s", "Cf", "f_C1"):
        if not getattr(i, name) > 0:
            raise ValueError(f"ledger input {name} must be positive, got {getattr(i, name)}")
    if i.s0 < 0:
        raise ValueError("ledger input s0 must be nonnegative")
    if i.Cf >= 1:
        raise ValueError("ledger input Cf must be < 1")
    if i.beta <= 1:
        raise ValueError("ledger input beta must exceed 1")
    C_sep = i.C0 ** (2.0 / i.beta)
    C_deno = (i.C0 / i.C2 + i.C0 ** 2) ** i.beta
    C_exp = i.tau * (1 + i.beta / i.delta) + 1
    C_estP = 64 * E ** 2 * i.C_P ** 2 / i.gamma
    growth = 2 * i.s * i.Cf * i.f_C1
    C_thre = max(32 * i.C_P * E / i.gamma, 2.0, 24 * E ** 2 / i.gamma, 16 * E * C_estP / i.gamma,
                 math.exp(growth))
    C_rema = max(48 * E * (math.exp(1 / (16 * E)) - 1), C_estP, E * i.C_P, C_deno)
    C_fin = 2.0 ** (i.p + 2) * C_exp
    D_fin = max(4 * C_rema, 32 * E ** 2 / i.gamma)
    S_fin = i.s0 + C_fin
    C_sta = math.exp(-growth)
    return ConstantsLedger(i, C_sep, C_deno, C_exp, C_estP, C_thre, C_rema, C_fin, D_fin, S_fin, C_sta)


def ledger_for_model(model, weight: WeightSpec | None = None, C_P: float = 1.0, C1: float = 1.0,
                     s0: float | None = None, K_max: int = 16) -> ConstantsLedger:
    """Ledger from a :class:`~nekhoroshev.spectrum.FrequencyModel` and a weight.

    ``s0`` defaults to the reference scale of ``weight`` on ``|j| <= K_max``.
    """
    from .lattice import ModeTable
    from .weights import reference_scale

    w = weight or gevrey(0.5, 1.0)
    if s0 is None:
        s0 = w.s0 if w.s0 is not None else reference_scale(w, ModeTable(model.dim, K_max))
    pr = model.params
    return build_ledger(LedgerInputs(pr.C0, C1, pr.C2, pr.beta, pr.delta, pr.tau, pr.gamma, pr.p,
                                     C_P, w.s, w.Cf, float(w.f(C1)), s0))


def log_divisor_floor(ledger: ConstantsLedger, d: int, N: float) -> float:
    """``ln( gamma / (C_deno d N)^(C_exp d^p) )``."""
    i = ledger.inputs
    return math.log(i.gamma) - ledger.C_exp * d ** i.p * math.log(ledger.C_deno * d * N)


def divisor_floor(ledger: ConstantsLedger, d: int, N: float) -> float:
    """Guaranteed lower bound on small divisors at degree ``d`` (may underflow to 0)."""
    return math.exp(log_divisor_floor(ledger, d, N))


def log_gate(ledger: ConstantsLedger, r: float, d: int, N: float) -> float:
    """``ln( r d^2 C_thre (C_deno d N)^(C_exp d^p) )``; the gate holds when negative."""
    i = ledger.inputs
    return (math.log(r) + 2 * math.log(d) + math.log(ledger.C_thre)
            + ledger.C_exp * d ** i.p * math.log(ledger.C_deno * d * N))


def generator_cap(d: int) -> float:
    """Generator size cap ``1 / (16 e d)`` used in the induction."""
    return 1.0 / (16 * E * d)


def radius_schedule(r: float, d: int, k: int) -> float:
    """Shrinking domain radius ``2r - (k-3) r / (d-3)``."""
    if d <= 3:
        return 2 * r
    return 2 * r - (k - 3) * r / (d - 3)


@dataclass
class BoundStep:
    k: int
    r_k: float
    log_P_bound: float
    log_G_bound: float
    G_cap: float
    G_within_cap: bool


def bound_chain(ledger: ConstantsLedger, r: float, d: int, N: float) -> list[BoundStep]:
    """Per-step a priori bounds of the iteration, in natural logs.

    ``|P_k| <= d^(2k-7) (C_estP r)^(k-2) (C_deno d N)^(C_exp (k-3) d^p)`` and
    ``|G_(k+1)| <= |P_k| (C_deno d N)^(C_exp d^p) / gamma``.
    """
    i = ledger.inputs
    L = math.log(ledger.C_deno * d * N)
    # C_estP scales with C_P^2 and may underflow
    log_Cr = math.log(ledger.C_estP) + math.log(r) if ledger.C_estP > 0 and r > 0 else -math.inf
    steps = []
    for k in range(3, d + 1):
        logP = ((2 * k - 7) * math.log(d) + (k - 2) * log_Cr
                + ledger.C_exp * (k - 3) * d ** i.p * L)
        logG = logP + ledger.C_exp * d ** i.p * L - math.log(i.gamma)
        cap = generator_cap(d)
        steps.append(BoundStep(k, radius_schedule(r, d, k), logP, logG, cap, logG <= math.log(cap)))
    return steps


def log_remainder_degree_bound(ledger: ConstantsLedger, r: float, d: int, N: float) -> float:
    """``ln( r^(d-2) (C_rema d N)^(C_exp d^(p+1)) )``."""
    i = ledger.inputs
    return (d - 2) * math.log(r) + ledger.C_exp * d ** (i.p + 1) * math.log(ledger.C_rema * d * N)


def log_remainder_high_bound(C_R: float, r: float, w: WeightSpec, s0: float, N: float) -> float:
    """``ln( C_R r / exp((s - s0) f(N)) )``."""
    if C_R == 0 or r == 0:
        return -math.inf
    return math.log(C_R) + math.log(r) - (w.s - s0) * float(w.f(N))


# ----------------------------------------------------------------------------
# Lambert W, lower branch


def lambert_w_minus1(y: float, tol: float = 1e-15) -> float:
    """Lower real branch of Lambert W for ``-2/e^2 < y < 0``.

    Solves ``x + ln(-x) = ln(-y)`` by Newton's method from the midpoint of the
    bracket ``ln(-1/y) < -x < 2 ln(-1/y)``, falling back to bisection when a
    step leaves the bracket. The returned root satisfies ``x < -2``.
    """
    if not (-2 * math.exp(-2) < y < 0):
        raise ValueError(f"y = {y} outside (-2/e^2, 0)")
    L = math.log(-1.0 / y)
    lo, hi = -2.0 * L, -L
    target = math.log(-y)

    def h(x):
        return x + math.log(-x) - target

    x = 0.5 * (lo + hi)
    for _ in range(200):
        hx = h(x)
        # h is increasing on x < -1; keep the bracket current
        if hx > 0:
            hi = x
        else:
            lo = x
        step = hx / (1.0 + 1.0 / x)
        nxt = x - step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= tol * abs(nxt):
            return nxt
        x = nxt
    return x


# ----------------------------------------------------------------------------
# balancing equation


@dataclass
class BalanceSolution:
    """Solution of ``d^p ln(dN) = f(N)/d`` with derived quantities.

    Attributes
    ----------
    log_N : float
        Natural log of the cutoff.
    abs_log_r : float
        ``2 d^p ln(d N)``.
    f_N : float
        ``f(N)``.
    residual : float
        Relative back-substitution residual of the balance relation.
    log_N_closed : float, optional
        Closed-form value (Gevrey only).
    """

    d: int
    p: float
    log_N: float
    abs_log_r: float
    f_N: float
    residual: float
    log_N_closed: float | None = None

    @property
    def N(self) -> float:
        return math.exp(self.log_N) if self.log_N < 709 else math.inf


class BalanceError(ValueError):
    pass


def _balance_fn(w: WeightSpec, p: float, d: int):
    ld = math.log(d)

    def g(L):
        return w.log_f_of_exp(L) / d - d ** p * (ld + L)

    return g


def solve_balance(w: WeightSpec, p: float, d: int, rtol: float = 1e-14) -> BalanceSolution:
    """Solve the balancing equation for ``N`` (root finding in ``ln N``).

    The function ``L -> f(e^L)/d - d^p (ln d + L)`` is convex for both weight
    families, so it has at most two roots; the larger one is returned. For
    Gevrey weights the closed form through the lower Lambert branch is also
    evaluated and required to agree.
    """
    if d < 4:
        raise BalanceError("d must be >= 4")
    g = _balance_fn(w, p, d)
    # walk right until g is positive and increasing: past the convex minimum
    b = 1.0
    while not (g(b) > 0 and g(b * 1.001) > g(b)):
        b *= 2.0
        if b > 1e250:
            raise BalanceError("no root in bracket")
    res = minimize_scalar(g, bounds=(0.0, b), method="bounded", options={"xatol": 1e-10})
    lo = float(res.x) if g(float(res.x)) < g(0.0) else 0.0
    if g(lo) >= 0:
        raise BalanceError("no root in bracket")
    L = brentq(g, lo, b, xtol=1e-300, rtol=max(rtol, 4 * 2.2e-16), maxiter=500)
    abs_log_r = 2 * d ** p * (math.log(d) + L)
    fN = w.log_f_of_exp(L)
    lhs = d ** p * (math.log(d) + L)
    residual = abs(fN / d - lhs) / lhs
    closed = None
    if w.kind == GEVREY:
        th = w.theta
        W = lambert_w_minus1(-th * d ** (-(th + p + 1)))
        closed = -math.log(d) - W / th
    return BalanceSolution(d, p, L, abs_log_r, fN, residual, closed)


def logultra_sandwich(q: float, p: float, d: int) -> tuple[float, float]:
    """Bounds ``d^((p+1)/(q-1)) <= ln N <= d^((p+1)/(q-1)) (ln d)^(1/(q-1))``."""
    lo = d ** ((p + 1) / (q - 1))
    return lo, lo * math.log(d) ** (1 / (q - 1))


def admissible_exponent(q: float, p: float) -> float:
    """Supremum of exponents ``a`` with ``exp(f(N)) >> exp(|ln r|^(1+a))`` (log-ultra)."""
    return (q - 1) / (q * p + 1)


def logultra_growth_exponent(a: float, q: float, p: float) -> float:
    """Power of ``d`` in the upper estimate of ``(ln N)^q / |ln r|^(1+a)``; positive iff admissible."""
    return 1 + a - q * a * (p + 1) / (q - 1)


def gevrey_ratio(sol: BalanceSolution) -> float:
    """``f(N) ln|ln r| / |ln r|^2`` for a solved Gevrey balance."""
    return sol.f_N * math.log(sol.abs_log_r) / sol.abs_log_r ** 2


# ----------------------------------------------------------------------------
# predictions


@dataclass
class StabilityPrediction:
    """Predicted cutoff, degree and stability time for a given amplitude.

    Times are reported as natural logs: ``log_T = C_fin f(N) - ln C_sta`` and
    ``log_T_s`` the variant with ``s`` in the exponent.
    """

    eps: float
    log_eps: float
    d: int
    N: float
    log_N: float
    abs_log_r: float
    log_T: float
    log_T_s: float
    regime: str
    scaling: float
    a: float | None = None
    capped: bool = False

    def row(self) -> dict:
        return {"eps": self.eps, "log_eps": self.log_eps, "d": self.d, "N": self.N,
                "log_N": self.log_N, "abs_log_r": self.abs_log_r, "log_T": self.log_T,
                "log_T_s": self.log_T_s, "regime": self.regime, "scaling": self.scaling,
                "a": self.a, "capped": self.capped}


def default_log_eps0(w: WeightSpec, p: float, d_min: int) -> float:
    """``ln eps0``: the smallness scale of the balance at the smallest admitted degree."""
    return -solve_balance(w, p, d_min).abs_log_r


def predict_time(w: WeightSpec, p: float, eps: float | None, ledger: ConstantsLedger,
                 log_eps: float | None = None, d_min: int = 4, d_max: int = 100_000,
                 log_eps0: float | None = None, a: float | None = None) -> StabilityPrediction:
    """Largest degree whose balanced scale admits ``eps`` and the resulting time.

    ``|ln r(d)|`` increases with ``d``; the search picks the largest ``d`` in
    ``[d_min, d_max]`` with ``|ln r(d)| <= |ln eps|``. Pass ``log_eps`` for
    amplitudes below the float range.

    Raises
    ------
    ValueError
        If ``eps`` is not below the threshold ``eps0`` (by default the scale at
        ``d_min``).
    """
    if log_eps is None:
        if eps is None or eps <= 0:
            raise ValueError("eps must be positive")
        log_eps = math.log(eps)
    if log_eps0 is None:
        log_eps0 = default_log_eps0(w, p, d_min)
    if log_eps > log_eps0:
        raise ValueError(f"eps = exp({log_eps:.6g}) is not below eps0 = exp({log_eps0:.6g})")
    target = -log_eps

    def scale(d):
        return solve_balance(w, p, d).abs_log_r

    lo, hi = d_min, d_max
    capped = False
    if scale(hi) <= target:
        lo, capped = hi, True
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if scale(mid) <= target:
                lo = mid
            else:
                hi = mid
    sol = solve_balance(w, p, lo)
    C_fin, C_sta = ledger.C_fin, ledger.C_sta
    log_T = C_fin * sol.f_N - math.log(C_sta)
    log_T_s = C_fin * w.s * sol.f_N - math.log(C_sta)
    le = abs(log_eps)
    if w.kind == GEVREY:
        regime = "gevrey"
        scaling = le ** 2 / math.log(le) if le > 1 else math.nan
        a_out = None
    else:
        regime = "logultra"
        a_out = admissible_exponent(w.q, p) if a is None else a
        scaling = le ** (1 + a_out)
    eps_out = math.exp(log_eps) if log_eps > -745 else 0.0
    return StabilityPrediction(eps_out, log_eps, lo, sol.N, sol.log_N, sol.abs_log_r, log_T, log_T_s,
                               regime, scaling, a_out, capped)
