"""Resonance classes, the homological equation and the Birkhoff iteration.

Every momentum-zero multi-index is sorted by the number ``s`` of its modes
with ``|j| > N``:

========  ==============================================================
class     condition
========  ==============================================================
R0        ``s = 0`` and the divisor vanishes identically
NR0       ``s = 0`` otherwise
NR1       ``s = 1``
NR21      ``s = 2``, both high modes carry the same sign
R2        ``s = 2``, opposite signs, both high modes in one block
NR22      ``s = 2``, opposite signs, different blocks
HIGH      ``s >= 3``
========  ==============================================================

R0 and R2 form the resonant set kept in the normal form. With the bracket
convention of :mod:`nekhoroshev.polyalg`, ``{H0, u^J} = i W u^J`` with
``W = sum sigma_l omega_l``, so the generator solving ``{H0, G} + P = Z`` is
``G_J = i P_J / W``.

The transformed Hamiltonian is ``H o Phi_G`` with ``Phi_G`` the time-one flow
of ``G``; its Lie series is ``sum ad^l H / l!`` with ``ad X = {X, G}``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .lattice import BlockPartition, ModeTable, MultiIndex, is_paired
from .polyalg import (DEFAULT_TERM_BUDGET, GaussianRational, HamiltonianSpec, SparsePolynomial,
                      norm_upper_bound, poisson, project_high_degree, project_high_modes,
                      vector_field)
from .spectrum import FrequencyModel
from .stability import (ConstantsLedger, bound_chain, generator_cap, ledger_for_model,
                        log_divisor_floor, log_gate, log_remainder_degree_bound,
                        log_remainder_high_bound, radius_schedule)
from .weights import WeightSpec


class ResonanceClass(str, enum.Enum):
    R0 = "R0"
    NR0 = "NR0"
    NR1 = "NR1"
    NR21 = "NR21"
    NR22 = "NR22"
    R2 = "R2"
    HIGH = "HIGH"

    @property
    def resonant(self) -> bool:
        return self in (ResonanceClass.R0, ResonanceClass.R2)

    def __str__(self) -> str:
        return self.value


RESONANT = frozenset({ResonanceClass.R0, ResonanceClass.R2})
NONRESONANT = frozenset({ResonanceClass.NR0, ResonanceClass.NR1, ResonanceClass.NR21,
                         ResonanceClass.NR22})


class SmallDivisorError(ArithmeticError):
    """A non-resonant divisor vanished or fell below the guaranteed floor."""

    def __init__(self, msg, witness=None, divisor=None):
        super().__init__(msg)
        self.witness = witness
        self.divisor = divisor


class GateError(ValueError):
    """The smallness condition of the iteration does not hold."""


class Classifier:
    """Vectorised classification over one mode table.

    Parameters
    ----------
    model : FrequencyModel
    table : ModeTable
    N : float
        Low/high cutoff.
    partition : BlockPartition, optional
        Shells for the two-high-mode case (default: unit shells past radius 2).
    """

    def __init__(self, model: FrequencyModel, table: ModeTable, N: float,
                 partition: BlockPartition | None = None):
        if N < 1:
            raise ValueError("N must be >= 1")
        self.model, self.table, self.N = model, table, N
        self.partition = partition or BlockPartition()
        self.omega = model.omega_table(table)
        self.cls = model.class_ids(table)
        self.high = table.high_mask(N)
        self.block = np.array([self.partition.block_of_radius2(int(r)) for r in table.radius2])
        self.sigma = table.sigma
        # plain lists: per-element numpy indexing dominates the per-monomial loop
        self._om = [int(v) for v in self.omega] if model.exact else [float(v) for v in self.omega]
        self._cls = self.cls.tolist()
        self._hi = self.high.tolist()
        self._blk = self.block.tolist()
        self._sg = self.sigma.tolist()

    def divisor(self, key: Sequence[int]):
        """Signed divisor ``sum sigma omega`` (int for exact models)."""
        om, sg = self._om, self._sg
        if self.model.exact:
            return sum(sg[i] * om[i] for i in key)
        return math.fsum(sg[i] * om[i] for i in key)

    def structurally_zero(self, key: Sequence[int]) -> bool:
        net: dict[int, int] = {}
        cls, sg = self._cls, self._sg
        for i in key:
            net[cls[i]] = net.get(cls[i], 0) + sg[i]
        return not any(net.values())

    def classify_key(self, key: Sequence[int]) -> ResonanceClass:
        hi = [i for i in key if self._hi[i]]
        s = len(hi)
        if s == 0:
            if self.structurally_zero(key) or (self.model.exact and self.divisor(key) == 0):
                return ResonanceClass.R0
            return ResonanceClass.NR0
        if s == 1:
            return ResonanceClass.NR1
        if s == 2:
            a, b = hi
            if self._sg[a] == self._sg[b]:
                return ResonanceClass.NR21
            if self._blk[a] == self._blk[b]:
                return ResonanceClass.R2
            return ResonanceClass.NR22
        return ResonanceClass.HIGH


def classify(m: MultiIndex, model: FrequencyModel, N: float,
             partition: BlockPartition | None = None) -> ResonanceClass:
    """Resonance class of a momentum-zero multi-index.

    Raises
    ------
    ValueError
        If the momentum is nonzero.
    """
    m = m if isinstance(m, MultiIndex) else MultiIndex(m)
    if any(m.momentum()):
        raise ValueError(f"{m} has nonzero momentum {m.momentum()}")
    K = max(max((abs(x) for J in m for x in J.j), default=0), 1)
    radius = math.isqrt(max(J.radius2 for J in m)) + 1 if m else 1
    table = ModeTable(m.dim or model.dim, max(K, radius))
    return Classifier(model, table, N, partition).classify_key(table.key_of(m))


def solve_homological(P: SparsePolynomial, model: FrequencyModel, N: float,
                      ledger: ConstantsLedger | None = None,
                      partition: BlockPartition | None = None,
                      classifier: Classifier | None = None):
    """Solve ``{H0, G} + P = Z`` monomial by monomial.

    Resonant monomials (R0, R2) are copied into ``Z``; non-resonant ones get
    ``G_J = i P_J / W_J``. With a ledger, every non-resonant divisor is checked
    against ``gamma / (C_deno d N)^(C_exp d^p)`` at the monomial's degree.

    Returns
    -------
    G, Z : SparsePolynomial

    Raises
    ------
    ValueError
        If a monomial has three or more high modes.
    SmallDivisorError
        On a vanishing or sub-floor non-resonant divisor.
    """
    cl = classifier or Classifier(model, P.table, N, partition)
    G, Z = {}, {}
    floors: dict[int, float] = {}
    for key, c in P.terms.items():
        k = cl.classify_key(key)
        if k is ResonanceClass.HIGH:
            raise ValueError(f"monomial {P.table.multi_index(key)} has three or more high modes")
        if k in RESONANT:
            Z[key] = c
            continue
        W = cl.divisor(key)
        if W == 0:
            raise SmallDivisorError(f"vanishing divisor on {k} monomial {P.table.multi_index(key)}",
                                    P.table.multi_index(key), 0.0)
        if ledger is not None:
            deg = len(key)
            if deg not in floors:
                floors[deg] = log_divisor_floor(ledger, deg, N)
            if math.log(abs(W)) < floors[deg]:
                raise SmallDivisorError(
                    f"divisor {W} below the guaranteed floor exp({floors[deg]:.4g}) on "
                    f"{P.table.multi_index(key)}", P.table.multi_index(key), float(W))
        if P.exact:
            G[key] = GaussianRational._raw(-c.y / W, c.x / W)
        else:
            G[key] = c * (1j / W)
    return P._new(G), P._new(Z)


# ----------------------------------------------------------------------------
# Lie series


def _scale_exact(X: SparsePolynomial, num: int, den: int) -> SparsePolynomial:
    if X.exact:
        return X.scale(Fraction(num, den))
    return X.scale(num / den)


def series_tail(X: SparsePolynomial, G: SparsePolynomial, offset: int = 0,
                max_degree: int | None = None, budget: int = DEFAULT_TERM_BUDGET) -> SparsePolynomial:
    """``sum_{m >= 1} ad^m X * offset! / (m + offset)!`` truncated at ``max_degree``.

    ``offset = 0`` is the tail of the Lie series of ``X``. ``offset = 1`` with
    ``X = {H0, G}`` gives the tail of ``H0 o Phi_G - H0 - {H0, G}``. Terminates
    because ``G`` has degree >= 3, so every ``ad`` raises the degree.
    """
    if G.is_zero() or X.is_zero():
        return SparsePolynomial.zero(X.table, X.exact and G.exact)
    lo, _ = G.degree_range()
    if lo < 3 and max_degree is None:
        raise ValueError("generators of degree < 3 need a max_degree")
    total = None
    term = X
    m = 0
    while True:
        m += 1
        term = _scale_exact(poisson(term, G, max_degree, budget), 1, m + offset)
        if term.is_zero():
            break
        total = term if total is None else total + term
        if len(total) > budget:
            from .spectrum import BudgetExceeded

            raise BudgetExceeded(f"Lie series exceeds the term budget of {budget}")
        if max_degree is None and m > 64:
            raise RuntimeError("Lie series did not terminate; pass max_degree")
    return total if total is not None else SparsePolynomial.zero(X.table, X.exact and G.exact)


def lie_series(X: SparsePolynomial, G: SparsePolynomial, max_degree: int,
               budget: int = DEFAULT_TERM_BUDGET) -> SparsePolynomial:
    """``X o Phi_G`` up to degree ``max_degree`` (exact in every kept degree)."""
    return X + series_tail(X, G, 0, max_degree, budget)


def minimal_terms(k: int, d: int, min_degree: int | None = None) -> int:
    """Smallest ``n`` with ``n (k - 2) + m > d`` where ``m`` is the lowest degree of the part.

    ``m`` defaults to ``k``. The truncation in :func:`series_tail` is applied
    by degree, which is the same as using this ``n`` for every part.
    """
    m = k if min_degree is None else min_degree
    return max(0, (d - m) // (k - 2) + 1)


def lie_transform_truncated(parts: dict, G: SparsePolynomial, d: int,
                            homological: tuple | None = None, max_degree: int | None = None,
                            budget: int = DEFAULT_TERM_BUDGET) -> dict:
    """Transform each part by the flow of ``G``, keeping degrees ``<= max_degree`` (default ``d``).

    Parameters
    ----------
    parts : dict
        Name to polynomial.
    homological : (P, Z), optional
        When given, an ``"H0"`` entry with ``H0 o Phi_G - H0`` is added,
        computed from ``{H0, G} = Z - P`` instead of differentiating ``H0``.

    Returns
    -------
    dict
        Name to transformed polynomial (``"H0"`` holds the increment only).
    """
    top = d if max_degree is None else max_degree
    out = {name: lie_series(X, G, top, budget) for name, X in parts.items()}
    if homological is not None:
        P, Z = homological
        Y = Z - P
        out["H0"] = Y + series_tail(Y, G, 1, top, budget)
    return out


# ----------------------------------------------------------------------------
# Birkhoff iteration


@dataclass
class StepTrace:
    k: int
    r_k: float
    P_terms: int
    P_coeff_max: float
    P_norm_bound: float
    log_P_proof_bound: float
    G_terms: int
    G_norm_bound: float
    log_G_proof_bound: float
    G_cap: float
    G_within_cap: bool
    Z_star_terms: int
    R_gt_terms: int
    leaked_terms: int
    dropped_terms: int

    def as_dict(self) -> dict:
        return {k: _finite(v) for k, v in self.__dict__.items()}


def _finite(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


@dataclass
class NormalFormOutput:
    """Result of :func:`birkhoff_iterate`.

    ``Z = Z0 + Z_gt`` with ``Z0`` the R0 part and ``Z_gt`` the R2 part.
    ``generators[i]`` is the generator of step ``k = i + 3`` (degrees ``k..d``).
    The remainder bounds are natural logs. ``R_gt`` holds the explicit
    high-mode remainder up to degree ``d``; ``R_d`` the explicit degree
    remainder when requested.
    """

    Z: SparsePolynomial
    Z0: SparsePolynomial
    Z_gt: SparsePolynomial
    generators: list
    P_final: SparsePolynomial
    R_gt: SparsePolynomial
    R_d: SparsePolynomial | None
    log_R_d_bound: float
    log_R_gt_bound: float
    log_R_bound: float
    ledger: ConstantsLedger
    N: float
    d: int
    r: float
    C_R: float
    gate_log: float
    gate_overridden: bool
    trace: list = field(default_factory=list)

    def transformed(self, H0: SparsePolynomial) -> SparsePolynomial:
        """``H0 + Z + P_final + R_gt`` (plus ``R_d`` when kept)."""
        out = H0 + self.Z + self.P_final + self.R_gt
        return out + self.R_d if self.R_d is not None else out

    def as_dict(self, include_polynomials: bool = True) -> dict:
        out = {
            "N": self.N, "d": self.d, "r": self.r, "C_R": self.C_R,
            "log_R_d_bound": _finite(self.log_R_d_bound),
            "log_R_gt_bound": _finite(self.log_R_gt_bound),
            "log_R_bound": _finite(self.log_R_bound),
            "gate_log": _finite(self.gate_log), "gate_overridden": self.gate_overridden,
            "ledger": self.ledger.as_dict(),
            "counts": {"Z0": len(self.Z0), "Z_gt": len(self.Z_gt), "P_final": len(self.P_final),
                       "R_gt": len(self.R_gt), "R_d": None if self.R_d is None else len(self.R_d),
                       "generators": [len(g) for g in self.generators]},
            "trace": [t.as_dict() for t in self.trace],
        }
        if include_polynomials:
            out["Z0"] = self.Z0.to_json()
            out["Z_gt"] = self.Z_gt.to_json()
            out["generators"] = [g.to_json() for g in self.generators]
        return out


def birkhoff_iterate(H: HamiltonianSpec, N: float, d: int, r: float, w: WeightSpec,
                     ledger: ConstantsLedger | None = None, partition: BlockPartition | None = None,
                     override_gate: bool = False, explicit_remainder_degree: int | None = None,
                     check_floor: bool = True, budget: int = DEFAULT_TERM_BUDGET) -> NormalFormOutput:
    """Run the normal-form steps ``k = 3..d`` on ``H = H0 + P``.

    At step ``k`` the whole non-normal part ``P_k`` (degrees ``k..d``, at most
    two high modes per monomial) is removed by ``G_(k+1)``; new terms with
    three or more high modes go to ``R_gt`` and terms above degree ``d`` are
    dropped (or kept up to ``explicit_remainder_degree``).

    Parameters
    ----------
    H : HamiltonianSpec
    N : float
        Cutoff.
    d : int
        Final degree, ``>= 3``.
    r : float
        Radius used in the a priori bounds and the smallness gate.
    w : WeightSpec
        Weight; ``w.s0`` (if set) enters the high-mode remainder bound.
    override_gate : bool
        Proceed with a warning when ``r d^2 C_thre (C_deno d N)^(C_exp d^p) >= 1``.

    Raises
    ------
    GateError
        When the gate fails and is not overridden.
    SmallDivisorError, BudgetExceeded
        From the homological solver and the bracket expansions.
    """
    if d < 3:
        raise ValueError("d must be >= 3")
    model = H.model
    P0 = H.perturbation
    table = P0.table
    C_P = max(P0.C_P(), 1e-300)
    if ledger is None:
        ledger = ledger_for_model(model, w, C_P=C_P, K_max=table.K_max)
    gate = log_gate(ledger, r, d, N)
    if gate >= 0:
        if not override_gate:
            raise GateError(f"smallness gate fails: ln(r d^2 C_thre (C_deno d N)^(C_exp d^p)) = {gate:.4g} >= 0")
        warnings.warn(f"smallness gate overridden (log value {gate:.4g})", RuntimeWarning, stacklevel=2)
    top = d if explicit_remainder_degree is None else max(d, explicit_remainder_degree)
    cl = Classifier(model, table, N, partition)
    exact = P0.exact

    def split_degree(X):
        return project_high_degree(X, d)

    zero = SparsePolynomial.zero(table, exact)
    P, R_d = split_degree(P0)
    P, R_gt = project_high_modes(P, N, 3)
    if explicit_remainder_degree is None:
        R_d = None
    else:
        R_d, _ = project_high_degree(R_d, top)
    Z = zero
    generators = []
    trace = []
    chain = {s.k: s for s in bound_chain(ledger, r, d, N)}
    for k in range(3, d + 1):
        r_k = radius_schedule(r, d, k)
        G, Zs = solve_homological(P, model, N, ledger if check_floor else None, classifier=cl)
        generators.append(G)
        tails = [series_tail(Zs - P, G, 1, top, budget), series_tail(Z, G, 0, top, budget),
                 series_tail(P, G, 0, top, budget)]
        Pstar = tails[0] + tails[1] + tails[2]
        R_gt = R_gt + series_tail(R_gt, G, 0, top, budget)
        dropped = 0
        if R_d is not None:
            R_d = R_d + series_tail(R_d, G, 0, top, budget)
        kept, above = split_degree(Pstar)
        R_gt, above_gt = split_degree(R_gt)
        if R_d is not None:
            R_d = R_d + above + above_gt
        dropped = len(above) + len(above_gt)
        P_next, R_star = project_high_modes(kept, N, 3)
        R_gt = R_gt + R_star
        leaked = sum(1 for key in R_gt.terms if sum(1 for i in key if cl.high[i]) < 3)
        Z = Z + Zs
        st = chain[k]
        trace.append(StepTrace(
            k=k, r_k=r_k, P_terms=len(P), P_coeff_max=P.C_P(),
            P_norm_bound=norm_upper_bound(P, r_k), log_P_proof_bound=st.log_P_bound,
            G_terms=len(G), G_norm_bound=norm_upper_bound(G, r_k), log_G_proof_bound=st.log_G_bound,
            G_cap=generator_cap(d), G_within_cap=st.G_within_cap, Z_star_terms=len(Zs),
            R_gt_terms=len(R_gt), leaked_terms=leaked, dropped_terms=dropped))
        P = P_next
    Z0 = Z._new({k: c for k, c in Z.terms.items() if not any(cl.high[i] for i in k)})
    Z_gt = Z._new({k: c for k, c in Z.terms.items() if any(cl.high[i] for i in k)})
    C_R = 2.0 ** d * C_P
    s0 = w.s0 if w.s0 is not None else ledger.inputs.s0
    log_Rd = log_remainder_degree_bound(ledger, r, d, N)
    log_Rgt = log_remainder_high_bound(C_R, r, w, s0, N) if P0 else -math.inf
    if not P0:
        log_Rd = -math.inf
    log_R = np.logaddexp(log_Rd, log_Rgt) if math.isfinite(max(log_Rd, log_Rgt)) else max(log_Rd, log_Rgt)
    return NormalFormOutput(Z, Z0, Z_gt, generators, P, R_gt, R_d, log_Rd, log_Rgt, float(log_R),
                            ledger, N, d, r, C_R, gate, gate >= 0, trace)


def action_bracket(Z0: SparsePolynomial, N: float, weights: dict | None = None) -> SparsePolynomial:
    """``{sum_{|j| <= N} c_j u_(j,+) u_(j,-), Z0}``; zero when ``Z0`` is made of paired monomials."""
    t = Z0.table
    terms = {}
    for i in t.ids_within(N):
        if t.sigma[i] > 0:
            c = 1 if weights is None else weights.get(t.modes[i].j, 0)
            key = tuple(sorted((int(i), int(t.conj[i]))))
            terms[key] = GaussianRational(c) if Z0.exact else complex(c)
    A = SparsePolynomial(t, terms, Z0.exact, check=False)
    return poisson(A, Z0)


def paired_part(Z: SparsePolynomial) -> SparsePolynomial:
    """Monomials whose modes pair up site by site."""
    return Z._new({k: c for k, c in Z.terms.items() if is_paired(Z.table.multi_index(k))})


# ----------------------------------------------------------------------------
# numerical flow oracle


def flow_map(G: SparsePolynomial, u: np.ndarray, t: float = 1.0, rtol: float = 1e-13,
             atol: float = 1e-16) -> np.ndarray:
    """Time-``t`` flow of the Hamiltonian field of ``G`` (DOP853).

    Conjugate variables are treated as independent, so complex scaled states
    are allowed.
    """
    from scipy.integrate import solve_ivp

    u = np.asarray(u, dtype=complex)
    if G.is_zero() or t == 0:
        return u.copy()
    sol = solve_ivp(lambda _t, y: vector_field(G, y), (0.0, t), u, method="DOP853",
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"flow integration failed: {sol.message}")
    return sol.y[:, -1]


def compose_flows(generators: Sequence[SparsePolynomial], u: np.ndarray, **kw) -> np.ndarray:
    """``Phi_(G_first) o ... o Phi_(G_last)`` applied to ``u`` (last generator acts first)."""
    v = np.asarray(u, dtype=complex)
    for G in reversed(list(generators)):
        v = flow_map(G, v, **kw)
    return v


def taylor_coefficients(H: HamiltonianSpec, generators, u: np.ndarray, degrees: Sequence[int],
                        radius: float = 1.0, points: int = 32, **kw) -> dict:
    """Homogeneous parts of ``lambda -> H(T(lambda u))`` via the discrete Cauchy formula."""
    lam = radius * np.exp(2j * np.pi * np.arange(points) / points)
    vals = np.array([H.energy(compose_flows(generators, l * np.asarray(u), **kw)) for l in lam])
    coef = np.fft.fft(vals) / points
    return {k: complex(coef[k] / radius ** k) for k in degrees}


def flow_residual(H: HamiltonianSpec, out: NormalFormOutput, samples: int, seed: int,
                  degrees: Sequence[int] | None = None, **kw) -> dict:
    """Compare the computed normal form with the numerically composed flows.

    States are drawn on the low modes (``|j| <= N``) with unit max modulus.
    On such states the degree-``k`` Taylor coefficient of ``H o T`` must equal
    the low resonant part; the largest absolute difference is returned for
    every degree.
    """
    table = H.table
    rng = np.random.default_rng(seed)
    low = table.ids_within(out.N)
    degrees = list(range(2, out.d + 1)) if degrees is None else list(degrees)
    H0 = H.H0(exact=False)
    normal = (H0 + out.Z0.to_float()).slices()
    worst = {k: 0.0 for k in degrees}
    for _ in range(samples):
        u = np.zeros(len(table), dtype=complex)
        z = rng.standard_normal(low.size) + 1j * rng.standard_normal(low.size)
        u[low] = z / np.max(np.abs(z))
        got = taylor_coefficients(H, out.generators, u, degrees, **kw)
        for k in degrees:
            ref = normal[k].evaluate(u) if k in normal else 0j
            worst[k] = max(worst[k], abs(got[k] - ref))
    return {"per_degree": worst, "max": max(worst.values()) if worst else 0.0, "samples": samples}
