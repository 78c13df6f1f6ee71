"""Sparse polynomials in the signed mode variables.

A polynomial is a map from canonical multi-index keys (sorted tuples of mode
ids of a :class:`~nekhoroshev.lattice.ModeTable`) to coefficients. The stored
coefficient of a key is the coefficient of the commutative monomial, i.e. the
multinomial multiplicity of ordered tuples is already folded in.

Conventions
-----------
Poisson bracket::

    {P, Q} = -i sum_J sigma_J  dP/du_J  dQ/du_conj(J)

Hamiltonian vector field::

    (X_H)_J = -i sigma_J dH/du_conj(J)

so that ``dF/dt = {F, H}`` along the flow of ``H``.

Coefficients are Python complex numbers, or :class:`GaussianRational` values
when the polynomial is flagged ``exact``.
"""
from __future__ import annotations

import functools
import math
from collections import defaultdict
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np
from sympy.polys.domains import QQ

from . import kernels
from .lattice import ModeIndex, ModeTable, MultiIndex, enumerate_momentum_zero
from .spectrum import BudgetExceeded
from .weights import WeightedState, WeightSpec, norm_s, sample_sphere, weight_factors

DEFAULT_TERM_BUDGET = 1_000_000

_Q = QQ.dtype  # gmpy2.mpq when available, else sympy's pure-Python rational


class GaussianRational:
    """Exact complex rational ``x + i y`` over sympy's ground rational type.

    A thin slotted wrapper: sympy's own Gaussian domain spends most of its
    time in type conversion, which dominates the exact bracket.
    """

    __slots__ = ("x", "y")

    def __init__(self, x=0, y=0):
        self.x = _rational(x)
        self.y = _rational(y)

    @staticmethod
    def _raw(x, y) -> "GaussianRational":
        g = object.__new__(GaussianRational)
        g.x = x
        g.y = y
        return g

    def __add__(self, o):
        if not isinstance(o, GaussianRational):
            o = GaussianRational(o)
        return GaussianRational._raw(self.x + o.x, self.y + o.y)

    __radd__ = __add__

    def __sub__(self, o):
        if not isinstance(o, GaussianRational):
            o = GaussianRational(o)
        return GaussianRational._raw(self.x - o.x, self.y - o.y)

    def __neg__(self):
        return GaussianRational._raw(-self.x, -self.y)

    def __mul__(self, o):
        if isinstance(o, GaussianRational):
            return GaussianRational._raw(self.x * o.x - self.y * o.y, self.x * o.y + self.y * o.x)
        if isinstance(o, (int, np.integer)):
            o = int(o)
            return GaussianRational._raw(self.x * o, self.y * o)
        return self * GaussianRational(o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if not isinstance(o, GaussianRational):
            o = GaussianRational(o)
        n = o.x * o.x + o.y * o.y
        if not n:
            raise ZeroDivisionError("Gaussian rational division by zero")
        return GaussianRational._raw((self.x * o.x + self.y * o.y) / n, (self.y * o.x - self.x * o.y) / n)

    def conjugate(self):
        return GaussianRational._raw(self.x, -self.y)

    def __bool__(self):
        return bool(self.x) or bool(self.y)

    def __eq__(self, o):
        if not isinstance(o, GaussianRational):
            try:
                o = GaussianRational(o)
            except TypeError:
                return NotImplemented
        return self.x == o.x and self.y == o.y

    def __hash__(self):
        return hash((self.x, self.y))

    def __complex__(self):
        return complex(float(self.x), float(self.y))

    def __repr__(self):
        return f"GaussianRational({self.x}, {self.y})"


def _rational(v):
    if isinstance(v, _Q):
        return v
    if isinstance(v, (int, np.integer)):
        return _Q(int(v))
    if isinstance(v, (Fraction, str)):
        f = Fraction(v)
        return _Q(f.numerator, f.denominator)
    if hasattr(v, "numerator") and hasattr(v, "denominator"):
        return _Q(int(v.numerator), int(v.denominator))
    raise TypeError(f"cannot convert {type(v).__name__} to an exact rational")


I_EXACT = GaussianRational(0, 1)
ZERO_EXACT = GaussianRational(0, 0)


def to_complex(c) -> complex:
    """Complex value of a float or Gaussian-rational coefficient."""
    return complex(c)


def gaussian(re, im=0) -> GaussianRational:
    """Gaussian rational from ints, Fractions or strings like ``"1/3"``."""
    if isinstance(re, GaussianRational) and im == 0:
        return re
    return GaussianRational(re, im)


def _conj(c, exact: bool):
    return c.conjugate()


class SparsePolynomial:
    """Immutable sparse polynomial over a mode table.

    Parameters
    ----------
    table : ModeTable
    terms : mapping
        Canonical id tuples (or multi-indices) to coefficients. Zero
        coefficients are dropped.
    exact : bool
        Coefficients are Gaussian rationals.
    check : bool
        Verify momentum conservation of every key.
    """

    __slots__ = ("table", "terms", "exact", "_deriv", "_packed")

    def __init__(self, table: ModeTable, terms: Mapping | None = None, exact: bool = False,
                 check: bool = True):
        self.table = table
        self.exact = bool(exact)
        clean = {}
        for k, c in (terms or {}).items():
            if not isinstance(k, tuple) or (k and not isinstance(k[0], (int, np.integer))):
                k = table.key_of(k)
            else:
                k = tuple(sorted(int(i) for i in k))
            if self.exact and not isinstance(c, GaussianRational):
                if isinstance(c, (complex, float)):
                    raise TypeError("exact polynomials need Gaussian-rational coefficients")
                c = GaussianRational(c)
            elif not self.exact:
                c = to_complex(c)
            if c:
                clean[k] = c
        if check:
            for k in clean:
                if k and np.any(np.sum(table.jvec[list(k)] * table.sigma[list(k), None], axis=0)):
                    raise ValueError(f"monomial {table.multi_index(k)} has nonzero momentum")
        self.terms: dict[tuple[int, ...], object] = clean
        self._deriv = None
        self._packed = None

    # -- basic protocol -------------------------------------------------

    @classmethod
    def zero(cls, table: ModeTable, exact: bool = False) -> "SparsePolynomial":
        return cls(table, {}, exact, check=False)

    def _new(self, terms, exact=None) -> "SparsePolynomial":
        p = SparsePolynomial.__new__(SparsePolynomial)
        p.table = self.table
        p.exact = self.exact if exact is None else exact
        p.terms = {k: c for k, c in terms.items() if c}
        p._deriv = None
        p._packed = None
        return p

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __repr__(self) -> str:
        lo, hi = self.degree_range()
        return f"SparsePolynomial({len(self.terms)} terms, degrees {lo}..{hi}, exact={self.exact})"

    def items(self):
        """Yield ``(MultiIndex, coefficient)`` pairs in canonical order."""
        for k in sorted(self.terms):
            yield self.table.multi_index(k), self.terms[k]

    def coefficient(self, m) -> object:
        key = m if isinstance(m, tuple) and m and isinstance(m[0], (int, np.integer)) else self.table.key_of(m)
        return self.terms.get(tuple(key), ZERO_EXACT if self.exact else 0j)

    def degrees(self) -> list[int]:
        return sorted({len(k) for k in self.terms})

    def degree_range(self) -> tuple[int, int]:
        ds = self.degrees()
        return (ds[0], ds[-1]) if ds else (0, -1)

    def _coerce(self, other: "SparsePolynomial"):
        if self.table is not other.table and self.table != other.table:
            raise ValueError("polynomials live on different mode tables")
        if self.exact == other.exact:
            return self, other, self.exact
        return self.to_float(), other.to_float(), False

    def __add__(self, other: "SparsePolynomial") -> "SparsePolynomial":
        a, b, ex = self._coerce(other)
        out = dict(a.terms)
        for k, c in b.terms.items():
            out[k] = out[k] + c if k in out else c
        return a._new(out, ex)

    def __neg__(self) -> "SparsePolynomial":
        return self._new({k: -c for k, c in self.terms.items()})

    def __sub__(self, other: "SparsePolynomial") -> "SparsePolynomial":
        return self + (-other)

    def scale(self, a) -> "SparsePolynomial":
        if self.exact and isinstance(a, (GaussianRational, int, np.integer, Fraction)):
            a = gaussian(a)
            return self._new({k: c * a for k, c in self.terms.items()})
        src = self if not self.exact else self.to_float()
        a = to_complex(a)
        return src._new({k: c * a for k, c in src.terms.items()}, False)

    def to_float(self) -> "SparsePolynomial":
        if not self.exact:
            return self
        return self._new({k: to_complex(c) for k, c in self.terms.items()}, False)

    def equals(self, other: "SparsePolynomial", tol: float = 0.0) -> bool:
        """Coefficient-wise equality (exactly, or up to ``tol`` relative to the largest coefficient)."""
        diff = self - other
        if tol == 0.0:
            return diff.is_zero()
        scale = max(self.C_P(), other.C_P(), 1e-300)
        return diff.C_P() <= tol * scale

    # -- structural properties -----------------------------------------

    def C_P(self) -> float:
        """Largest coefficient modulus."""
        return max((abs(to_complex(c)) for c in self.terms.values()), default=0.0)

    def homogeneous(self, d: int) -> "SparsePolynomial":
        return self._new({k: c for k, c in self.terms.items() if len(k) == d})

    def slices(self) -> dict[int, "SparsePolynomial"]:
        out: dict[int, dict] = defaultdict(dict)
        for k, c in self.terms.items():
            out[len(k)][k] = c
        return {d: self._new(t) for d, t in sorted(out.items())}

    def conj_key(self, key: tuple[int, ...]) -> tuple[int, ...]:
        cj = self.table.conj
        return tuple(sorted(int(cj[i]) for i in key))

    def is_real(self, tol: float = 0.0) -> bool:
        """True when ``coeff(conj key) = conj(coeff(key))`` for every key."""
        for k, c in self.terms.items():
            other = self.terms.get(self.conj_key(k), ZERO_EXACT if self.exact else 0j)
            d = to_complex(other) - to_complex(c).conjugate()
            if abs(d) > tol * max(1.0, abs(to_complex(c))):
                return False
        return True

    def is_momentum_conserving(self) -> bool:
        t = self.table
        return all(not np.any(np.sum(t.jvec[list(k)] * t.sigma[list(k), None], axis=0))
                   for k in self.terms if k)

    def max_high_count(self, N: float) -> int:
        r2 = self.table.radius2
        n2 = N * N
        return max((sum(1 for i in k if r2[i] > n2) for k in self.terms), default=0)

    # -- calculus ----------------------------------------------------------

    def derivatives(self) -> dict[int, list[tuple[tuple[int, ...], object]]]:
        """Map ``var -> [(remaining key, exponent * coefficient)]``."""
        if self._deriv is None:
            d: dict[int, list] = defaultdict(list)
            for k, c in self.terms.items():
                prev = None
                for pos, v in enumerate(k):
                    if v == prev:
                        continue
                    prev = v
                    e = k.count(v)
                    rest = k[:pos] + k[pos + 1:]
                    d[v].append((rest, c * e if e > 1 else c))
            self._deriv = dict(d)
        return self._deriv

    def packed(self):
        """Dense arrays ``(idx, deg, coeff)`` for the evaluation kernels."""
        if self._packed is None:
            keys = sorted(self.terms)
            T = len(keys)
            D = max((len(k) for k in keys), default=1) or 1
            idx = np.zeros((T, D), dtype=np.int32)
            deg = np.zeros(T, dtype=np.int32)
            coeff = np.zeros(T, dtype=np.complex128)
            for t, k in enumerate(keys):
                idx[t, : len(k)] = k
                deg[t] = len(k)
                coeff[t] = to_complex(self.terms[k])
            self._packed = (idx, deg, coeff)
        return self._packed

    def gradient(self, u) -> np.ndarray:
        """``dP/du_J`` for every mode ``J``."""
        vals = _values(u)
        out = np.zeros(len(self.table), dtype=np.complex128)
        if self.terms:
            idx, deg, coeff = self.packed()
            kernels.poly_gradient(idx, deg, coeff, vals, out)
        return out

    def evaluate(self, u) -> complex:
        if not self.terms:
            return 0j
        idx, deg, coeff = self.packed()
        return complex(kernels.poly_value(idx, deg, coeff, _values(u)))

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        rows = []
        for k in sorted(self.terms):
            c = self.terms[k]
            ent = [[list(self.table.modes[i].j), self.table.modes[i].sigma] for i in k]
            if self.exact:
                rows.append([ent, str(c.x), str(c.y)])
            else:
                z = complex(c)
                rows.append([ent, z.real, z.imag])
        return {"dim": self.table.dim, "K_max": self.table.K_max, "c": self.table.c,
                "exact": self.exact, "terms": rows}

    @classmethod
    def from_json(cls, data: dict, table: ModeTable | None = None) -> "SparsePolynomial":
        table = table or ModeTable(data["dim"], data["K_max"], data.get("c", 2.0))
        exact = bool(data.get("exact", False))
        terms = {}
        for ent, re, im in data["terms"]:
            key = table.key_of(ModeIndex(tuple(j), int(s)) for j, s in ent)
            terms[key] = gaussian(re, im) if exact else complex(re, im)
        return cls(table, terms, exact)


def _values(u) -> np.ndarray:
    v = u.values if isinstance(u, WeightedState) else u
    return np.ascontiguousarray(v, dtype=np.complex128)


# ----------------------------------------------------------------------------
# brackets and fields


def poisson(P: SparsePolynomial, Q: SparsePolynomial, max_degree: int | None = None,
            budget: int = DEFAULT_TERM_BUDGET) -> SparsePolynomial:
    """Poisson bracket ``{P, Q}``, optionally dropping terms above ``max_degree``.

    Raises
    ------
    BudgetExceeded
        When the result would hold more than ``budget`` terms.
    """
    P, Q, exact = P._coerce(Q)
    table = P.table
    dP, dQ = P.derivatives(), Q.derivatives()
    conj, sigma = table.conj, table.sigma
    out: dict[tuple[int, ...], object] = {}
    for var in sorted(dP):
        qlist = dQ.get(int(conj[var]))
        if not qlist:
            continue
        # prefactor -i sigma
        plus = int(sigma[var]) > 0
        for ra, ca in dP[var]:
            room = None if max_degree is None else max_degree - len(ra)
            for rb, cb in qlist:
                if room is not None and len(rb) > room:
                    continue
                key = tuple(sorted(ra + rb))
                # ca * cb commutes exactly, so swapping operands only flips signs
                v = ca * cb
                if exact:
                    val = GaussianRational._raw(v.y, -v.x) if plus else GaussianRational._raw(-v.y, v.x)
                    prev = out.get(key)
                    out[key] = val if prev is None else prev + val
                else:
                    out.setdefault(key, []).append(complex(v.imag, -v.real) if plus else complex(-v.imag, v.real))
        if len(out) > budget:
            raise BudgetExceeded(f"bracket exceeds the term budget of {budget}")
    if not exact:
        # exactly rounded sums do not depend on accumulation order
        out = {k: complex(math.fsum(v.real for v in vals), math.fsum(v.imag for v in vals))
               for k, vals in out.items()}
    return P._new(out, exact)


def vector_field(P: SparsePolynomial, u) -> np.ndarray:
    """Hamiltonian field ``(X_P)_J = -i sigma_J dP/du_conj(J)``."""
    g = P.gradient(u)
    t = P.table
    return -1j * t.sigma * g[t.conj]


def diagonal_field(omega: np.ndarray, table: ModeTable, u) -> np.ndarray:
    """Field of ``H0 = sum_j omega_j u_(j,+) u_(j,-)``: ``-i sigma omega_j u_J``."""
    return -1j * table.sigma * np.asarray(omega, dtype=float) * _values(u)


def quadratic_polynomial(table: ModeTable, omega, ids=None, exact: bool = False) -> SparsePolynomial:
    """``sum_j omega_j u_(j,+) u_(j,-)`` over the sites of ``ids`` (default: all)."""
    ids = range(len(table)) if ids is None else ids
    terms = {}
    for i in ids:
        if table.sigma[i] > 0:
            w = omega[i]
            c = gaussian(int(w)) if exact else complex(w)
            terms[tuple(sorted((int(i), int(table.conj[i]))))] = c
    return SparsePolynomial(table, terms, exact, check=False)


def bracket_identities(P: SparsePolynomial, Q: SparsePolynomial, R: SparsePolynomial) -> dict:
    """Check the bracket laws on one triple.

    Returns ``antisymmetric`` (exact cancellation of ``{P,Q} + {Q,P}``),
    ``jacobi`` (largest Jacobi-sum coefficient relative to the largest
    coefficient of its three summands), ``degree_law`` (homogeneous slices of
    degrees ``a, b`` bracket into degree ``a + b - 2``) and ``momentum``.
    """
    PQ = poisson(P, Q)
    anti = (PQ + poisson(Q, P)).is_zero()
    parts = [poisson(P, poisson(Q, R)), poisson(Q, poisson(R, P)), poisson(R, PQ)]
    total = parts[0] + parts[1] + parts[2]
    scale = max(p.C_P() for p in parts)
    jac = total.C_P() / scale if scale else 0.0
    law = True
    for a, Pa in P.slices().items():
        for b, Qb in Q.slices().items():
            law &= all(len(k) == a + b - 2 for k in poisson(Pa, Qb).terms)
    return {"antisymmetric": anti, "jacobi": jac, "degree_law": law,
            "momentum": PQ.is_momentum_conserving() and total.is_momentum_conserving()}


def bracket_with_diagonal(omega: np.ndarray, P: SparsePolynomial) -> SparsePolynomial:
    """``{H0, P}`` for diagonal ``H0``: each monomial picks up ``i * sum sigma omega``.

    ``omega`` may be an integer array (exact path) or floats.
    """
    t = P.table
    out = {}
    for k, c in P.terms.items():
        div = sum(int(t.sigma[i]) * omega[i] for i in k)
        if P.exact:
            out[k] = c * GaussianRational(0, int(div))
        else:
            out[k] = c * 1j * float(div)
    return P._new(out)


# ----------------------------------------------------------------------------
# projections


def project_high_degree(P: SparsePolynomial, d: int):
    """Split into (degree <= d, degree > d)."""
    lo = {k: c for k, c in P.terms.items() if len(k) <= d}
    hi = {k: c for k, c in P.terms.items() if len(k) > d}
    return P._new(lo), P._new(hi)


def project_high_modes(P: SparsePolynomial, N: float, min_high_degree: int):
    """Split off monomials with at least ``min_high_degree`` modes of radius > N.

    Returns ``(kept, extracted)``.
    """
    if min_high_degree < 1:
        raise ValueError("min_high_degree must be >= 1")
    r2 = P.table.radius2
    n2 = N * N
    kept, ext = {}, {}
    for k, c in P.terms.items():
        h = sum(1 for i in k if r2[i] > n2)
        (ext if h >= min_high_degree else kept)[k] = c
    return P._new(kept), P._new(ext)


# ----------------------------------------------------------------------------
# norm estimates


def _require_s0(w: WeightSpec):
    if w.s0 is not None and not w.s > w.s0:
        raise ValueError(f"estimate requires s > s0 (s={w.s}, s0={w.s0})")


def norm_upper_bound(P: SparsePolynomial, r: float, w: WeightSpec | None = None) -> float:
    """Coefficient bound ``sum_d C_P(slice_d) r^(d-2)`` of the field norm."""
    if w is not None:
        _require_s0(w)
    return float(sum(S.C_P() * r ** (d - 2) for d, S in P.slices().items()))


def field_norm_factor(d: int) -> float:
    """Combinatorial factor ``2 d (d-1) 3^(-(d-2)/2)`` of the rigorous field bound.

    For ``s`` at or above the reference scale and a homogeneous ``P`` of degree
    ``d``, ``||X_P(u)||_s <= factor * C_P ||u||_s^(d-1)`` (Young's inequality on
    the momentum convolution plus the subadditivity of the weight).
    """
    if d < 2:
        return 1.0
    return 2.0 * d * (d - 1) * 3.0 ** (-(d - 2) / 2.0)


def norm_factor_bound(P: SparsePolynomial, r: float, w: WeightSpec | None = None) -> float:
    """``sum_d field_norm_factor(d) C_P(slice_d) r^(d-2)``: rigorous bound on ``|P|_{r,s}``."""
    if w is not None:
        _require_s0(w)
    return float(sum(field_norm_factor(d) * S.C_P() * r ** (d - 2) for d, S in P.slices().items()))


def norm_mc_estimate(P: SparsePolynomial, r: float, w: WeightSpec, samples: int, seed: int,
                     support=None, real: bool = False) -> float:
    """Monte Carlo lower estimate of ``sup_{||u||_s = r} ||X_P(u)||_s / r``."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if P.is_zero():
        return 0.0
    rng = np.random.default_rng(seed)
    wf = weight_factors(w, P.table)
    best = 0.0
    for _ in range(samples):
        u = sample_sphere(w, r, P.table, support, rng, real)
        X = vector_field(P, u)
        best = max(best, float(np.linalg.norm(X * wf)) / r)
    return best


def cutting_bound(P: SparsePolynomial, r: float, N: float, w: WeightSpec) -> float:
    """``sum_d C_P 2^d r^(d-2) / exp((s - s0) f(N))`` for polynomials with >= 3 high modes per monomial.

    Raises
    ------
    ValueError
        If some monomial has fewer than three modes of radius > N, or ``s0`` is unset.
    """
    if w.s0 is None:
        raise ValueError("weight needs a reference scale s0")
    r2 = P.table.radius2
    for k in P.terms:
        if sum(1 for i in k if r2[i] > N * N) < 3:
            raise ValueError(f"monomial {P.table.multi_index(k)} has fewer than 3 high modes")
    damp = math.exp(-(w.s - w.s0) * float(w.f(N)))
    return float(sum(S.C_P() * 2.0 ** d * r ** (d - 2) for d, S in P.slices().items())) * damp


# ----------------------------------------------------------------------------
# generators of random test polynomials


@functools.lru_cache(maxsize=64)
def _closed_rows(table: ModeTable, ids: tuple, d: int) -> tuple:
    rows = enumerate_momentum_zero(table, np.asarray(ids, dtype=np.int64), d)
    return tuple(tuple(int(i) for i in row) for row in rows)


def random_polynomial(table: ModeTable, degrees: Iterable[int], rng: np.random.Generator,
                      ids=None, density: float = 1.0, scale: float = 1.0, exact: bool = False,
                      real: bool = False, denominator: int = 16) -> SparsePolynomial:
    """Random momentum-conserving polynomial on the modes ``ids``.

    Each admissible monomial is kept with probability ``density``. Float
    coefficients are complex Gaussian times ``scale``; exact ones are Gaussian
    rationals with numerators in ``[-denominator, denominator]`` over
    ``denominator``. With ``real=True`` the reality symmetry is imposed.
    """
    ids = tuple(range(len(table))) if ids is None else tuple(int(i) for i in np.sort(np.asarray(ids)))
    terms = {}
    for d in degrees:
        rows = _closed_rows(table, ids, int(d))
        keep = rng.random(len(rows)) < density
        picked = [row for row, k in zip(rows, keep) if k]
        if exact:
            num = rng.integers(-denominator, denominator + 1, size=(len(picked), 2)).tolist()
            for key, (a, b) in zip(picked, num):
                terms[key] = GaussianRational._raw(_Q(a, denominator), _Q(b, denominator))
        else:
            z = rng.standard_normal((len(picked), 2))
            for key, (a, b) in zip(picked, z):
                terms[key] = scale * complex(a, b)
    P = SparsePolynomial(table, terms, exact, check=False)
    return realify(P) if real else P


def realify(P: SparsePolynomial) -> SparsePolynomial:
    """Impose ``coeff(conj key) = conj(coeff(key))`` by averaging each conjugate pair."""
    half = GaussianRational(Fraction(1, 2)) if P.exact else 0.5
    out = {}
    for k, c in P.terms.items():
        ck = P.conj_key(k)
        other = P.terms.get(ck, ZERO_EXACT if P.exact else 0j)
        out[k] = (c + _conj(other, P.exact)) * half
        out[ck] = _conj(out[k], P.exact)
    return P._new(out)


class HamiltonianSpec:
    """``H = H0 + P`` with diagonal ``H0 = sum_j omega_j |u_j|^2`` given by a frequency model.

    Parameters
    ----------
    model : FrequencyModel
    perturbation : SparsePolynomial
        Momentum-conserving, all degrees >= 3.
    """

    def __init__(self, model, perturbation: SparsePolynomial):
        lo, _ = perturbation.degree_range()
        if perturbation and lo < 3:
            raise ValueError("perturbation must start at degree 3")
        self.model = model
        self.perturbation = perturbation
        self.table = perturbation.table
        self.omega = model.omega_table(self.table)

    def H0(self, exact: bool | None = None) -> SparsePolynomial:
        exact = self.perturbation.exact if exact is None else exact
        return quadratic_polynomial(self.table, self.omega, exact=exact)

    def field(self, u) -> np.ndarray:
        return diagonal_field(self.omega, self.table, u) + vector_field(self.perturbation, u)

    def energy(self, u) -> complex:
        v = _values(u)
        t = self.table
        plus = t.sigma > 0
        h0 = np.sum(self.omega[plus] * v[plus] * v[t.conj[plus]])
        return complex(h0) + self.perturbation.evaluate(v)
