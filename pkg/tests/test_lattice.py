import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nekhoroshev.lattice import (
    BlockPartition,
    ModeIndex,
    ModeTable,
    MultiIndex,
    block_of,
    enumerate_momentum_zero,
    is_paired,
    mode,
    momentum,
    split_modes,
)


def mi(*entries):
    return MultiIndex(mode(j, s) for j, s in entries)


def test_momentum_examples():
    assert momentum(mi((1, 1), (1, -1))) == (0,)
    assert momentum(mi((1, 1), (1, 1), (2, -1))) == (0,)
    # 3 - 1 - 1
    assert momentum(mi((3, 1), (1, -1), (1, -1))) == (1,)


def test_pairing_examples():
    assert is_paired(mi((2, 1), (2, -1)))
    assert is_paired(mi((1, 1), (1, 1), (1, -1), (1, -1)))
    assert not is_paired(mi((1, 1), (2, 1), (3, -1)))
    assert not is_paired(mi((1, 1), (-1, -1)))


def test_split_examples():
    low, high, n = split_modes(mi((1, 1), (5, -1)), 3)
    assert low == (mode(1, 1),) and high == (mode(5, -1),) and n == 1
    assert split_modes(mi((1, 1), (2, -1), (3, 1)), 3)[2] == 0
    assert split_modes(mi((4, 1), (4, -1), (1, 1), (1, -1)), 3)[2] == 2
    with pytest.raises(ValueError):
        split_modes(mi((1, 1)), 0.5)


def test_blocks():
    part = BlockPartition(C0_block=2, C1=1)
    assert block_of(mode(1, 1), part) == 0
    assert block_of(mode(2, -1), part) == 0
    # shells (2,3], (3,4], (4,5]
    assert block_of(mode(5, 1), part) == 3
    assert block_of(mode((3, 4), 1), part) == block_of(mode((5, 0), -1), part)
    # explicit cutoffs then uniform shells
    cut = BlockPartition(C0_block=1, C1=2, cutoffs=(3,))
    assert [cut.block_of_radius2(r * r) for r in (1, 2, 3, 4, 5, 6)] == [0, 1, 1, 2, 2, 3]
    with pytest.raises(ValueError):
        BlockPartition(C0_block=2, cutoffs=(1,))


def test_mode_validation():
    with pytest.raises(ValueError):
        mode(1, 0)
    assert mode((1, -2), 1) == ModeIndex((1, -2), 1)
    assert mode(3, -1).conjugate() == mode(3, 1)
    assert mode(0, 1).bracket(2.0) == 2.0


def test_table_canonical_order():
    t = ModeTable(2, 2)
    keys = [(J.radius2, J.j, J.sigma) for J in t.modes]
    assert keys == sorted(keys)
    assert len(t) == 2 * 13
    for i, J in enumerate(t.modes):
        assert t.modes[t.conj[i]] == J.conjugate()
    with pytest.raises(KeyError):
        t.id_of(mode((3, 0), 1))
    assert t.key_of([mode((1, 0), 1), mode((0, 0), -1)]) == tuple(sorted(
        (t.id_of(mode((1, 0), 1)), t.id_of(mode((0, 0), -1)))))


def brute_force(table, ids, d):
    out = set()
    for combo in itertools.combinations_with_replacement(sorted(ids), d):
        if not np.any(np.sum(table.jvec[list(combo)] * table.sigma[list(combo), None], axis=0)):
            out.add(combo)
    return out


@pytest.mark.parametrize("dim,K,d", [(1, 3, 3), (1, 3, 4), (2, 1, 3), (2, 1, 4), (1, 2, 5)])
def test_enumeration_matches_brute_force(dim, K, d):
    t = ModeTable(dim, K)
    ids = np.arange(len(t))
    rows = enumerate_momentum_zero(t, ids, d)
    got = {tuple(int(x) for x in r) for r in rows}
    assert len(got) == rows.shape[0]
    assert got == brute_force(t, ids, d)


def test_enumeration_subset():
    t = ModeTable(1, 4)
    ids = t.ids_within(2)
    rows = enumerate_momentum_zero(t, ids, 3)
    assert set(np.unique(rows)) <= set(ids.tolist())
    assert {tuple(r) for r in rows.tolist()} == brute_force(t, ids, 3)


entries = st.lists(st.tuples(st.integers(-4, 4), st.sampled_from([-1, 1])), min_size=1, max_size=6)


@given(entries)
def test_multiindex_canonical(e):
    m = MultiIndex(mode(j, s) for j, s in e)
    assert m == MultiIndex(mode(j, s) for j, s in reversed(e))
    assert m.conjugate().conjugate() == m
    assert momentum(m.conjugate()) == tuple(-x for x in momentum(m))


@given(entries, st.integers(1, 5))
@settings(max_examples=50)
def test_split_counts(e, N):
    m = MultiIndex(mode(j, s) for j, s in e)
    low, high, n = split_modes(m, N)
    assert len(low) + len(high) == len(m)
    assert n == m.high_count(N)


@given(entries)
def test_paired_implies_zero_momentum(e):
    m = MultiIndex(mode(j, s) for j, s in e)
    if is_paired(m):
        assert momentum(m) == (0,)
    doubled = MultiIndex(list(m) + list(m.conjugate()))
    assert is_paired(doubled)
