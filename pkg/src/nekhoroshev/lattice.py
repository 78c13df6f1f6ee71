"""Index lattice of signed Fourier modes.

A mode is a pair ``(j, sigma)`` with ``j`` an integer vector and ``sigma`` in
``{-1, +1}``; ``sigma = +1`` labels the field and ``sigma = -1`` its complex
conjugate. Monomials are indexed by multisets of modes kept in a canonical
order, so that each unordered product has exactly one key.

Everything here is truncated to a finite box radius ``K_max``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, NamedTuple, Sequence

import numpy as np

DEFAULT_C = 2.0


class ModeIndex(NamedTuple):
    """A point ``(j, sigma)`` of the signed index lattice."""

    j: tuple[int, ...]
    sigma: int

    @property
    def radius2(self) -> int:
        return sum(x * x for x in self.j)

    @property
    def radius(self) -> float:
        return math.sqrt(self.radius2)

    def conjugate(self) -> "ModeIndex":
        return ModeIndex(self.j, -self.sigma)

    def bracket(self, c: float = DEFAULT_C) -> float:
        """Return ``max(|j|, c)``."""
        return max(self.radius, c)


def mode(j, sigma: int) -> ModeIndex:
    """Build a ``ModeIndex`` from an int or a sequence of ints."""
    if sigma not in (-1, 1):
        raise ValueError(f"sigma must be +1 or -1, got {sigma!r}")
    if isinstance(j, (int, np.integer)):
        jt = (int(j),)
    else:
        jt = tuple(int(x) for x in j)
    return ModeIndex(jt, int(sigma))


def mode_key(J: ModeIndex):
    """Sort key of the canonical order: radius, then lexicographic j, then sign."""
    return (J.radius2, J.j, J.sigma)


class MultiIndex(tuple):
    """Canonically ordered multiset of modes (a monomial support).

    Equality and hashing are those of the underlying ordered tuple.
    """

    def __new__(cls, entries: Iterable = ()):
        items = []
        for e in entries:
            if not isinstance(e, ModeIndex):
                e = mode(*e)
            items.append(e)
        items.sort(key=mode_key)
        return super().__new__(cls, items)

    @property
    def degree(self) -> int:
        return len(self)

    @property
    def dim(self) -> int:
        return len(self[0].j) if self else 0

    def momentum(self) -> tuple[int, ...]:
        return momentum(self)

    def high_count(self, N: float) -> int:
        n2 = N * N
        return sum(1 for J in self if J.radius2 > n2)

    def conjugate(self) -> "MultiIndex":
        return MultiIndex(J.conjugate() for J in self)

    def __repr__(self) -> str:
        body = ", ".join(
            f"({J.j[0] if len(J.j) == 1 else J.j},{'+' if J.sigma > 0 else '-'})" for J in self
        )
        return f"MultiIndex({body})"


def momentum(m: Sequence[ModeIndex]) -> tuple[int, ...]:
    """Return ``sum sigma_l j_l`` componentwise."""
    if not m:
        return ()
    dim = len(m[0].j)
    acc = [0] * dim
    for J in m:
        for i, x in enumerate(J.j):
            acc[i] += J.sigma * x
    return tuple(acc)


def is_paired(m: Sequence[ModeIndex]) -> bool:
    """True iff, for every site ``j``, the +1 and -1 multiplicities agree."""
    if len(m) % 2:
        return False
    net: dict[tuple[int, ...], int] = {}
    for J in m:
        net[J.j] = net.get(J.j, 0) + J.sigma
    return all(v == 0 for v in net.values())


def split_modes(m: Sequence[ModeIndex], N: float):
    """Split entries into low (``|J| <= N``) and high parts.

    Returns
    -------
    low, high : tuple of ModeIndex
    s_count : int
        Number of high entries.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    n2 = N * N
    low = tuple(J for J in m if J.radius2 <= n2)
    high = tuple(J for J in m if J.radius2 > n2)
    return low, high, len(high)


@dataclass(frozen=True)
class BlockPartition:
    """Spherical shells: block 0 is ``|J| <= C0_block``; block ``a >= 1`` is the
    half-open shell ``(C0_block + (a-1) C1, C0_block + a C1]``.

    ``cutoffs`` optionally replaces the uniform shells by explicit increasing
    radii ``C0_block < r_1 < r_2 < ...`` (block ``a`` is ``(r_{a-1}, r_a]``,
    uniform shells resume past the last cutoff).
    """

    C0_block: float = 2.0
    C1: float = 1.0
    cutoffs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.C0_block < 0 or self.C1 <= 0:
            raise ValueError("need C0_block >= 0 and C1 > 0")
        prev = self.C0_block
        for c in self.cutoffs:
            if c <= prev:
                raise ValueError("cutoffs must be increasing and exceed C0_block")
            prev = c

    def block_of_radius2(self, r2: int) -> int:
        """Block id of an integer squared radius (comparisons done on squares)."""
        if r2 <= self.C0_block ** 2:
            return 0
        edges = (self.C0_block,) + tuple(self.cutoffs)
        for a in range(1, len(edges)):
            if r2 <= edges[a] ** 2:
                return a
        base = edges[-1]
        a0 = len(edges) - 1
        k = max(1, math.ceil((math.sqrt(r2) - base) / self.C1))
        # repair possible rounding at shell edges using squared radii
        while k > 1 and r2 <= (base + (k - 1) * self.C1) ** 2:
            k -= 1
        while r2 > (base + k * self.C1) ** 2:
            k += 1
        return a0 + k


def block_of(J: ModeIndex, part: BlockPartition) -> int:
    """Block id of a mode; depends on ``|j|`` only."""
    return part.block_of_radius2(J.radius2)


class ModeTable:
    """All modes with ``|j| <= K_max`` (Euclidean ball), canonically numbered.

    Integer ids follow the canonical order, so a sorted tuple of ids is the
    canonical key of a multi-index. The table is immutable after construction.

    Parameters
    ----------
    dim : int
        Lattice dimension.
    K_max : int
        Hard radius cutoff.
    c : float
        Constant in ``<j> = max(|j|, c)``.
    """

    def __init__(self, dim: int, K_max: int, c: float = DEFAULT_C):
        if dim < 1 or K_max < 0:
            raise ValueError("need dim >= 1 and K_max >= 0")
        self.dim = int(dim)
        self.K_max = int(K_max)
        self.c = float(c)
        sites = [
            s for s in product(range(-self.K_max, self.K_max + 1), repeat=self.dim)
            if sum(x * x for x in s) <= self.K_max ** 2
        ]
        modes = sorted((ModeIndex(s, sg) for s in sites for sg in (-1, 1)), key=mode_key)
        self.modes: tuple[ModeIndex, ...] = tuple(modes)
        self.index = {J: i for i, J in enumerate(modes)}
        n = len(modes)
        self.jvec = np.array([J.j for J in modes], dtype=np.int64).reshape(n, self.dim)
        self.sigma = np.array([J.sigma for J in modes], dtype=np.int64)
        self.radius2 = np.array([J.radius2 for J in modes], dtype=np.int64)
        self.bracket_radius = np.maximum(np.sqrt(self.radius2.astype(float)), self.c)
        self.conj = np.array([self.index[J.conjugate()] for J in modes], dtype=np.int64)
        for arr in (self.jvec, self.sigma, self.radius2, self.bracket_radius, self.conj):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.modes)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ModeTable)
            and (self.dim, self.K_max, self.c) == (other.dim, other.K_max, other.c)
        )

    def __hash__(self) -> int:
        return hash((self.dim, self.K_max, self.c))

    def __repr__(self) -> str:
        return f"ModeTable(dim={self.dim}, K_max={self.K_max}, c={self.c})"

    def id_of(self, J: ModeIndex) -> int:
        try:
            return self.index[J]
        except KeyError:
            raise KeyError(f"mode {J} outside |j| <= {self.K_max}") from None

    def key_of(self, m: Iterable) -> tuple[int, ...]:
        """Canonical id tuple of a multi-index (any iterable of modes)."""
        return tuple(sorted(self.id_of(J if isinstance(J, ModeIndex) else mode(*J)) for J in m))

    def multi_index(self, key: Sequence[int]) -> MultiIndex:
        return MultiIndex(self.modes[i] for i in key)

    def ids_within(self, N: float) -> np.ndarray:
        """Ids of modes with ``|j| <= N``."""
        return np.nonzero(self.radius2 <= N * N)[0]

    def high_mask(self, N: float) -> np.ndarray:
        return self.radius2 > N * N

    def box_lookup(self, ids: Sequence[int]):
        """Dense lookup for the enumeration kernel restricted to ``ids``.

        Returns ``(jvec, sigma, lookup, radius)`` with local indices.
        """
        ids = np.asarray(ids, dtype=np.int64)
        jv = np.ascontiguousarray(self.jvec[ids])
        sg = np.ascontiguousarray(self.sigma[ids])
        R = int(np.abs(jv).max()) if ids.size else 0
        side = 2 * R + 1
        lookup = np.full(side ** self.dim * 2, -1, dtype=np.int64)
        flat = np.zeros(ids.size, dtype=np.int64)
        for i in range(self.dim):
            flat = flat * side + (jv[:, i] + R)
        lookup[flat * 2 + (sg > 0)] = np.arange(ids.size)
        return jv, sg, lookup, R


def enumerate_momentum_zero(table: ModeTable, ids: Sequence[int], d: int) -> np.ndarray:
    """All canonical momentum-zero multisets of size ``d`` drawn from ``ids``.

    Returns global table ids, shape ``(count, d)``, rows sorted ascending.
    """
    from .kernels import enumerate_closed

    ids = np.sort(np.asarray(ids, dtype=np.int64))
    if ids.size == 0:
        return np.zeros((0, d), dtype=np.int64)
    jv, sg, lookup, R = table.box_lookup(ids)
    local = enumerate_closed(jv, sg, lookup, R, int(d))
    return ids[local.astype(np.int64)]
