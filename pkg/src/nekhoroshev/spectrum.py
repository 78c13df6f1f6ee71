"""Frequency models, spectral assumption checks and small-divisor scans.

Three families of linear frequencies are provided:

* convolution NLS: ``omega_j = |j|^2 + V_j`` with ``|V_j| |j|^n <= 1/2``;
* fractional NLS: ``omega_j = (|j|^2 + m)^eta``;
* beam: ``omega_j = sqrt(|j|_g^4 + m)`` with ``|j|_g^2 = j^T g j``.

A divisor of a multi-index is ``sum_l sigma_l omega_{j_l}``. Whether it
vanishes identically is decided combinatorially from frequency classes,
never by a floating-point comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .lattice import BlockPartition, ModeIndex, ModeTable, MultiIndex, enumerate_momentum_zero

CONVNLS = "convnls"
FRACTIONAL = "fractional"
BEAM = "beam"

DEFAULT_SCAN_BUDGET = 50_000_000


class BudgetExceeded(RuntimeError):
    """Raised when an enumeration or expansion would exceed its size budget."""


@dataclass(frozen=True)
class NonResonanceParams:
    """Spectral constants: growth ``beta``, bound ``C0``, separation
    ``(C2, delta)`` and Diophantine data ``(gamma, tau, p)``."""

    beta: float = 2.0
    C0: float = 2.0
    delta: float = 1.0
    C2: float = 0.5
    tau: float = 1.0
    gamma: float = 0.5
    p: float = 1.0


@dataclass(frozen=True, eq=False)
class FrequencyModel:
    """Linear frequencies of one of the three model families.

    Use the factory functions :func:`conv_nls`, :func:`fractional` and
    :func:`beam` rather than calling the constructor directly.
    """

    kind: str
    dim: int
    params: NonResonanceParams
    V: dict = field(default_factory=dict)
    n: float = 0.0
    eta: float = 1.0
    m: float = 0.0
    g: tuple = ()

    def __post_init__(self):
        if self.kind not in (CONVNLS, FRACTIONAL, BEAM):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == BEAM:
            G = np.asarray(self.g, dtype=float)
            if G.shape != (self.dim, self.dim) or not np.allclose(G, G.T):
                raise ValueError("beam metric must be a symmetric dim x dim matrix")
            if np.linalg.eigvalsh(G).min() <= 0:
                raise ValueError("beam metric must be positive definite")

    @property
    def exact(self) -> bool:
        """True when every frequency is an integer (unperturbed convolution NLS)."""
        return self.kind == CONVNLS and not any(self.V.values())

    def omega(self, j) -> float:
        j = _site(j)
        r2 = sum(x * x for x in j)
        if self.kind == CONVNLS:
            return r2 + float(self.V.get(j, 0.0))
        if self.kind == FRACTIONAL:
            return (r2 + self.m) ** self.eta
        G = np.asarray(self.g, dtype=float)
        jv = np.asarray(j, dtype=float)
        q = float(jv @ G @ jv)
        return math.sqrt(q * q + self.m)

    def omega_exact(self, j) -> int | None:
        """Integer frequency when the model is exact, else ``None``."""
        if not self.exact:
            return None
        return sum(x * x for x in _site(j))

    def omega_class(self, j):
        """Key such that equal keys imply equal frequencies for every member of the family.

        Used for the structural (pairing) test of vanishing divisors.
        """
        j = _site(j)
        if self.exact or self.kind == FRACTIONAL:
            return ("r2", sum(x * x for x in j))
        if self.kind == CONVNLS:
            return ("j", j)
        neg = tuple(-x for x in j)
        return ("pm", max(j, neg))

    def omega_table(self, table: ModeTable) -> np.ndarray:
        """Frequencies of every table mode (int64 when exact)."""
        vals = [self.omega(J.j) for J in table.modes]
        if self.exact:
            return np.array([int(round(v)) for v in vals], dtype=np.int64)
        return np.array(vals, dtype=float)

    def class_ids(self, table: ModeTable) -> np.ndarray:
        keys = [self.omega_class(J.j) for J in table.modes]
        uniq = {k: i for i, k in enumerate(sorted(set(keys)))}
        return np.array([uniq[k] for k in keys], dtype=np.int64)

    def describe(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim, "params": self.params.__dict__.copy()}
        if self.kind == CONVNLS:
            out["n"] = self.n
            out["V"] = [[list(j), v] for j, v in sorted(self.V.items())]
        elif self.kind == FRACTIONAL:
            out.update(eta=self.eta, m=self.m)
        else:
            out.update(g=[list(r) for r in self.g], m=self.m)
        return out


def _site(j) -> tuple[int, ...]:
    if isinstance(j, ModeIndex):
        return j.j
    if isinstance(j, (int, np.integer)):
        return (int(j),)
    return tuple(int(x) for x in j)


def conv_nls(dim: int = 1, V: dict | None = None, n: float = 0.0,
             params: NonResonanceParams | None = None) -> FrequencyModel:
    """Convolution NLS frequencies ``|j|^2 + V_j`` (``V`` keyed by site tuples)."""
    V = {} if V is None else {_site(k): float(v) for k, v in V.items()}
    for j, v in V.items():
        r = math.sqrt(sum(x * x for x in j))
        if abs(v) * (r ** n if r else 1.0) > 0.5 + 1e-15:
            raise ValueError(f"V_{j} = {v} violates |V_j| |j|^n <= 1/2")
    return FrequencyModel(CONVNLS, dim, params or NonResonanceParams(), V=V, n=n)


def random_potential(dim: int, K: int, n: float, seed: int) -> dict:
    """Seeded sample of the potential class: ``V_j`` uniform in ``[-1/2, 1/2] |j|^{-n}``.

    ``V_0`` is uniform in ``[-1/2, 1/2]``. Sites are visited in canonical order.
    """
    rng = np.random.default_rng(seed)
    table = ModeTable(dim, K)
    V = {}
    for J in table.modes:
        if J.sigma < 0:
            continue
        r = J.radius
        V[J.j] = float(rng.uniform(-0.5, 0.5)) * (r ** -n if r else 1.0)
    return V


def fractional(dim: int = 1, eta: float = 0.75, m: float = 1.0,
               params: NonResonanceParams | None = None) -> FrequencyModel:
    """Fractional NLS frequencies ``(|j|^2 + m)^eta``.

    Default constants: ``beta = 2 eta``, ``delta = 2 eta - 1``, ``(tau, p) = (4, 3)``
    so that ``tau d^p`` is the ``4 d^3`` exponent of the mass family.
    """
    if eta <= 0.5:
        raise ValueError("eta must exceed 1/2")
    if params is None:
        params = NonResonanceParams(beta=2 * eta, C0=2.0, delta=2 * eta - 1,
                                    C2=fractional_C2(eta, m), tau=4.0, gamma=0.5, p=3.0)
    return FrequencyModel(FRACTIONAL, dim, params, eta=eta, m=m)


def fractional_C2(eta: float, m: float, K_max: int = 64) -> float:
    """Largest ``C2`` (rounded down to 3 digits) for which the block separation
    holds on shells of thickness 1 up to ``K_max`` in one dimension."""
    part = BlockPartition()
    best = math.inf
    radii = list(range(0, K_max + 1))
    om = {r: (r * r + m) ** eta for r in radii}
    blk = {r: part.block_of_radius2(r * r) for r in radii}
    for a, b in combinations(radii, 2):
        if blk[a] != blk[b]:
            best = min(best, abs(om[a] - om[b]) / (a ** (2 * eta - 1) + b ** (2 * eta - 1)))
    return math.floor(best * 1000) / 1000


def beam(g, m: float = 1.0, params: NonResonanceParams | None = None) -> FrequencyModel:
    """Beam frequencies ``sqrt(|j|_g^4 + m)``.

    Default constants: ``beta = 2``, ``delta = 1``, ``p = 3`` and
    ``tau = 4 (tau* + 1)`` with ``tau* = dim (dim + 1) / 2``.
    """
    G = np.atleast_2d(np.asarray(g, dtype=float))
    dim = G.shape[0]
    if params is None:
        tau_star = dim * (dim + 1) // 2
        params = NonResonanceParams(beta=2.0, C0=2.0, delta=1.0, C2=0.5,
                                    tau=4.0 * (tau_star + 1), gamma=0.5, p=3.0)
    return FrequencyModel(BEAM, dim, params, g=tuple(tuple(float(x) for x in r) for r in G), m=m)


# ----------------------------------------------------------------------------
# assumption checks


@dataclass
class CheckReport:
    """Outcome of a scan: pass flag, worst observed value and a witness."""

    name: str
    passed: bool
    worst: float
    witness: object = None
    checked: int = 0
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        w = self.witness
        if isinstance(w, MultiIndex):
            w = [[list(J.j), J.sigma] for J in w]
        elif isinstance(w, tuple) and w and isinstance(w[0], tuple):
            w = [list(x) for x in w]
        return {"name": self.name, "passed": self.passed, "worst": _finite(self.worst),
                "witness": w, "checked": self.checked, "details": self.details}


def _finite(x):
    return x if x is None or math.isfinite(x) else str(x)


def _sites(dim: int, K: int, lo: float = 0.0):
    table = ModeTable(dim, K)
    return [J.j for J in table.modes if J.sigma > 0 and J.radius >= lo]


def check_A1(model: FrequencyModel, j_min: float, K_max: int) -> CheckReport:
    """Check ``1/C0 <= omega_j / |j|^beta <= C0`` for ``j_min <= |j| <= K_max``."""
    C0, beta = model.params.C0, model.params.beta
    worst, witness, n = math.inf, None, 0
    for j in _sites(model.dim, K_max, max(j_min, 1e-300)):
        r = math.sqrt(sum(x * x for x in j))
        if r == 0:
            continue
        ratio = model.omega(j) / r ** beta
        margin = min(C0 - ratio, ratio - 1.0 / C0)
        n += 1
        if margin < worst:
            worst, witness = margin, j
    return CheckReport("A1", worst >= 0, worst, witness, n, {"C0": C0, "beta": beta})


def check_A3(model: FrequencyModel, partition: BlockPartition, K_max: int) -> CheckReport:
    """Cross-block separation ``|w_a - w_b| >= C2 (|a|^delta + |b|^delta)``.

    Also checks the shell width condition within each block.
    """
    C2, delta = model.params.C2, model.params.delta
    sites = _sites(model.dim, K_max)
    blk = [partition.block_of_radius2(sum(x * x for x in j)) for j in sites]
    om = [model.omega(j) for j in sites]
    rad = [math.sqrt(sum(x * x for x in j)) for j in sites]
    worst, witness, n = math.inf, None, 0
    for a, b in combinations(range(len(sites)), 2):
        if blk[a] == blk[b]:
            continue
        n += 1
        rhs = C2 * (rad[a] ** delta + rad[b] ** delta)
        margin = abs(om[a] - om[b]) - rhs
        if margin < worst:
            worst, witness = margin, (sites[a], sites[b])
    width = 0.0
    by_block: dict[int, list[float]] = {}
    for b, r in zip(blk, rad):
        by_block.setdefault(b, []).append(r)
    for b, rs in by_block.items():
        if b:
            width = max(width, max(rs) - min(rs))
    ok = worst >= 0 and width <= partition.C1 + 1e-12
    return CheckReport("A3", ok, worst, witness, n, {"C2": C2, "delta": delta, "max_shell_width": width})


# ----------------------------------------------------------------------------
# divisor scans


@dataclass
class DivisorScan:
    """Result of an exhaustive divisor scan.

    ``value`` is the smallest nonzero ``|sum sigma omega|`` over the scanned
    non-paired momentum-zero multi-indices; multi-indices whose divisor
    vanishes without being structurally paired are counted separately in
    ``zero_count`` (first one in ``zero_witness``).
    """

    value: float
    witness: MultiIndex | None
    per_degree: dict
    zero_count: int = 0
    zero_witness: MultiIndex | None = None
    checked: int = 0
    exhaustive: bool = True

    def as_dict(self) -> dict:
        def enc(m):
            return None if m is None else [[list(J.j), J.sigma] for J in m]

        return {
            "value": _finite(self.value),
            "witness": enc(self.witness),
            "per_degree": {str(d): {"value": _finite(v), "witness": enc(w)}
                           for d, (v, w) in sorted(self.per_degree.items())},
            "zero_count": self.zero_count,
            "zero_witness": enc(self.zero_witness),
            "checked": self.checked,
            "exhaustive": self.exhaustive,
        }


def structural_zero(rows: np.ndarray, class_ids: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Rows whose signed class multiplicities all cancel (divisor vanishes identically)."""
    cls = class_ids[rows]
    sg = sigma[rows]
    same = cls[:, :, None] == cls[:, None, :]
    net = np.einsum("rlm,rm->rl", same, sg)
    return np.all(net == 0, axis=1)


def scan_count(n_modes: int, d: int) -> int:
    """Number of enumeration prefixes (multisets of size ``d-1``)."""
    return math.comb(n_modes + d - 2, d - 1)


def divisor_rows(model: FrequencyModel, table: ModeTable, ids: Sequence[int], d: int,
                 budget: int = DEFAULT_SCAN_BUDGET):
    """Enumerate momentum-zero size-``d`` multisets over ``ids``.

    Returns ``(rows, divisors, structural)``: table-id rows, signed divisors
    (int64 for exact models) and the structural-zero mask.
    """
    ids = np.asarray(ids)
    if scan_count(ids.size, d) > budget:
        raise BudgetExceeded(
            f"divisor scan over {ids.size} modes at degree {d} exceeds the budget of {budget} prefixes")
    rows = enumerate_momentum_zero(table, ids, d)
    om = model.omega_table(table)
    div = np.sum(om[rows] * table.sigma[rows], axis=1)
    struct = structural_zero(rows, model.class_ids(table), table.sigma)
    return rows, div, struct


def min_denominator(model: FrequencyModel, N: int, d_max: int, low_only: bool = True,
                    K_max: int | None = None, d_min: int = 3,
                    budget: int = DEFAULT_SCAN_BUDGET) -> DivisorScan:
    """Smallest nonzero divisor over non-paired momentum-zero multi-indices.

    Parameters
    ----------
    model : FrequencyModel
    N : int
        Mode radius for the scan (``|j| <= N``).
    d_max : int
        Largest degree scanned; degrees ``d_min..d_max`` are included.
    low_only : bool
        When False the scan covers every mode up to ``K_max``.
    """
    radius = N if low_only or K_max is None else K_max
    table = ModeTable(model.dim, radius)
    ids = np.arange(len(table))
    best, best_w = math.inf, None
    per_degree = {}
    zero_count, zero_w, checked = 0, None, 0
    for d in range(d_min, d_max + 1):
        rows, div, struct = divisor_rows(model, table, ids, d, budget)
        checked += rows.shape[0]
        live = ~struct
        a = np.abs(div)
        zeros = live & (a == 0) if model.exact else np.zeros_like(live)
        if zeros.any():
            zero_count += int(zeros.sum())
            if zero_w is None:
                zero_w = table.multi_index(rows[np.argmax(zeros)])
        cand = live & ~zeros
        if cand.any():
            k = int(np.argmin(np.where(cand, a, np.inf)))
            v = float(a[k])
            w = table.multi_index(rows[k])
            per_degree[d] = (v, w)
            if v < best:
                best, best_w = v, w
        else:
            per_degree[d] = (math.inf, None)
    return DivisorScan(best, best_w, per_degree, zero_count, zero_w, checked, True)


def verify_A2_bound(model: FrequencyModel, N: int, d_max: int, ledger=None, d_min: int = 3,
                    budget: int = DEFAULT_SCAN_BUDGET) -> CheckReport:
    """Check ``min divisor >= gamma / (C_deno d N)^(C_exp d^p)`` degree by degree.

    ``ledger`` defaults to :func:`nekhoroshev.stability.ledger_for_model`.
    Exact-zero non-paired divisors count as violations.
    """
    from .stability import ledger_for_model, log_divisor_floor

    if ledger is None:
        ledger = ledger_for_model(model)
    scan = min_denominator(model, N, d_max, d_min=d_min, budget=budget)
    worst, witness = math.inf, None
    margins = {}
    for d, (v, w) in sorted(scan.per_degree.items()):
        log_floor = log_divisor_floor(ledger, d, N)
        if v == math.inf:
            margins[str(d)] = None
            continue
        margin = math.log(v) - log_floor
        margins[str(d)] = {"min_divisor": v, "log_floor": log_floor, "log_margin": margin}
        if margin < worst:
            worst, witness = margin, w
    ok = worst >= 0 and scan.zero_count == 0
    if scan.zero_count:
        witness = scan.zero_witness
    return CheckReport("A2", ok, worst, witness, scan.checked,
                       {"per_degree": margins, "zero_count": scan.zero_count})


def bourgain_product(ell: dict, mu1: float, mu2: float, n: float) -> float:
    """``prod_m (1 + |l_m|^mu1 <m>^(mu2+n))`` for an integer vector ``ell`` keyed by site."""
    out = 1.0
    for m, v in ell.items():
        if v:
            r = max(math.sqrt(sum(x * x for x in _site(m))), 1.0)
            out *= 1.0 + abs(v) ** mu1 * r ** (mu2 + n)
    return out
