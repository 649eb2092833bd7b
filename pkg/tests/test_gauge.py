from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaugeprot.core import SpinBasis
from gaugeprot.gauge import (
    PAPER_COMPLIANT_L6,
    PAPER_NONCOMPLIANT_L6,
    ProtectionSequence,
    ResourceError,
    build_superlattice_sequence,
    check_compliance,
    degeneracy_split_check,
    find_compliant_sequence,
    has_forbidden_neighbors,
    minimal_degenerate_sectors,
    sector_energies,
    sector_map,
    staggered_unit,
    uniform_unit,
)
from gaugeprot.model import build_h1

import oracles


@pytest.fixture(scope="module")
def table6():
    return sector_map(SpinBasis(6))


@pytest.fixture(scope="module")
def table4():
    return sector_map(SpinBasis(4))


@pytest.mark.parametrize("L", [2, 4])
def test_sector_table_matches_enumeration(L):
    t = sector_map(SpinBasis(L))
    assert {tuple(int(x) for x in g) for g in t.sectors} == oracles.brute_sectors(L)
    assert sum(len(m) for m in t.sector_members) == 4**L


def test_sector_counts(table6):
    # computed once by brute-force enumeration and frozen
    assert table6.n_sectors == 1582
    assert len(table6.sector_members[table6.zero_sector]) == 18
    assert not has_forbidden_neighbors(table6)


def test_sector_map_refuses_large_L():
    with pytest.raises(ResourceError):
        sector_map(SpinBasis(10))


def test_sequence_normalization():
    with pytest.raises(ValueError):
        ProtectionSequence((1, 2), 3)
    s = ProtectionSequence.from_integers((-2, 4))
    assert s.denominator == 4 and np.allclose(s.coefficients, [-0.5, 1])
    r = ProtectionSequence.from_reals([-0.3, 1.2])
    assert r.numerators == (-1, 4) and r.denominator == 4 and r.scale == pytest.approx(1.2)


def test_paper_sequences(table6):
    rep = check_compliance(PAPER_COMPLIANT_L6, table6)
    assert rep.compliant and rep.gap_numerator == 1 and rep.denominator == 146
    assert Fraction(rep.gap_numerator, rep.denominator) == Fraction(1, 146)
    assert round(rep.gap_D, 4) == 0.0068
    bad = check_compliance(PAPER_NONCOMPLIANT_L6, table6)
    assert not bad.compliant
    w = np.array(bad.witness)
    assert np.any(w) and w @ np.array(PAPER_NONCOMPLIANT_L6.numerators) == 0


def test_unit_sequences_not_compliant(table6):
    for seq in (staggered_unit(6), uniform_unit(6)):
        rep = check_compliance(seq, table6)
        assert not rep.compliant and rep.witness is not None


@pytest.mark.parametrize("L", [2, 4])
def test_search_result_is_compliant_by_brute_force(L):
    seq = find_compliant_sequence(L, 20)
    assert seq is not None
    assert oracles.brute_compliant(seq.numerators, L)
    assert check_compliance(seq, sector_map(SpinBasis(L))).compliant


def test_search_frozen_results(table4):
    assert find_compliant_sequence(4, 20, table4).numerators == (-1, 5, -4, 7)
    assert find_compliant_sequence(4, 6, table4) is None


@settings(max_examples=40, deadline=None)
@given(nums=st.lists(st.integers(-9, 9), min_size=4, max_size=4).filter(lambda v: any(v)))
def test_compliance_agrees_with_brute_force(nums):
    seq = ProtectionSequence.from_integers(nums)
    t = sector_map(SpinBasis(4))
    assert check_compliance(seq, t).compliant == oracles.brute_compliant(seq.numerators, 4)


@settings(max_examples=30, deadline=None)
@given(nums=st.lists(st.integers(-9, 9), min_size=4, max_size=4).filter(lambda v: any(v)))
def test_compliance_invariant_under_sign_flip(nums):
    t = sector_map(SpinBasis(4))
    a = check_compliance(ProtectionSequence.from_integers(nums), t)
    b = check_compliance(ProtectionSequence.from_integers([-x for x in nums]), t)
    assert a.compliant == b.compliant and a.gap_D == b.gap_D


def test_gap_is_min_over_sectors(table4):
    seq = ProtectionSequence((-1, 5, -4, 7), 7)
    vals = sector_energies(seq, table4)
    nonzero = np.any(table4.sectors, axis=1)
    assert check_compliance(seq, table4).gap_numerator == np.min(np.abs(vals[nonzero]))


def _contiguous_four(g):
    nz = np.flatnonzero(g)
    return len(nz) == 4 and np.all(np.diff(nz) == 1) and set(np.abs(g[nz])) == {1} and g.sum() == 0


def test_superlattice_minimal_degenerate_sectors(table6):
    seq = build_superlattice_sequence(6, 1.0, 3.1, 0.7)
    mins = minimal_degenerate_sectors(seq, table6)
    assert len(mins) > 0
    assert all(np.sum(g**2) == 4 for g in mins)
    assert any(_contiguous_four(g) for g in mins)


def test_superlattice_alternating_pattern_is_not_degenerate(table6):
    # c.g for (.., 1, -1, 1, -1, ..) is +-(4K + Delta(4m+6)) with K = U - delta + Delta/2
    seq = build_superlattice_sequence(6, 1.0, 3.1, 0.7)
    c = seq.coefficients
    for start in range(3):
        g = np.zeros(6)
        g[start:start + 4] = [1, -1, 1, -1]
        assert abs(c @ g) > 1e-9


def test_degeneracy_split(table6):
    h1 = build_h1("local", SpinBasis(6))
    assert degeneracy_split_check(staggered_unit(6), h1, table6)
    assert not degeneracy_split_check(uniform_unit(6), h1, table6)
