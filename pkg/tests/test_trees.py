from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from bushycalc.errors import TreeError
from bushycalc.trees import (
    ROOT,
    CylinderSet,
    FiniteTree,
    LevelFn,
    SchnorrTest,
    all_bits,
    cond_measure,
    close_prefixes,
    frac,
    full_tree,
    measure,
    validate_tree,
)

SCAN_LEN = 8


def measure_by_scan(strings) -> Fraction:
    """Independent oracle: count covered length-8 strings, one by one."""
    covered = 0
    for x in all_bits(SCAN_LEN):
        if any(x.startswith(s) for s in strings):
            covered += 1
    return Fraction(covered, 2**SCAN_LEN)


def cond_measure_by_scan(strings, rho: str) -> Fraction:
    hits = 0
    total = 0
    for x in all_bits(SCAN_LEN):
        if not x.startswith(rho):
            continue
        total += 1
        if any(x.startswith(s) for s in strings):
            hits += 1
    return Fraction(hits, total)


bitstrings = st.text(alphabet="01", min_size=0, max_size=6)
string_sets = st.frozensets(bitstrings, max_size=8)


class TestLevelFn:
    def test_table_and_tail(self):
        fn = LevelFn.of([3, Fraction(5, 2)], tail=1)
        assert fn(0) == 3
        assert fn(1) == Fraction(5, 2)
        assert fn(7) == 1

    def test_arithmetic_is_pointwise(self):
        p = LevelFn.of([4, 3], tail=2)
        q = LevelFn.const(1)
        assert (p - q)(0) == 3
        assert (p + q)(5) == 3
        assert (p * LevelFn.const(Fraction(1, 2)))(1) == Fraction(3, 2)

    def test_frac_coercions(self):
        assert frac("3/4") == Fraction(3, 4)
        assert frac(("3", "4")) == Fraction(3, 4)
        assert frac(2) == 2
        with pytest.raises(TreeError):
            frac(0.5)


class TestValidateTree:
    def test_small_binary_tree_ok(self):
        report = validate_tree([(), (0,), (1,)], LevelFn.const(2), 3)
        assert report.ok
        assert report.stem == ROOT
        assert report.leaves == frozenset({(0,), (1,)})

    def test_missing_parent_is_prefix_violation(self):
        report = validate_tree([(0, 1)], LevelFn.const(2), 3)
        assert not report.ok
        assert report.violation.kind == "prefix"
        assert report.violation.node == (0, 1)

    def test_bound_violation_reports_node(self):
        report = validate_tree([(), (2,)], LevelFn.const(2), 3)
        assert not report.ok
        assert report.violation.kind == "bound"

    def test_stem_of_path_with_bush(self):
        nodes = close_prefixes([(2, 1, 0), (2, 1, 1)])
        report = validate_tree(nodes, LevelFn.const(3), 4)
        assert report.ok
        assert report.stem == (2, 1)


class TestFiniteTree:
    def test_constructor_rejects_violations(self):
        with pytest.raises(TreeError):
            FiniteTree(frozenset([(0, 1)]), LevelFn.const(2), 3)

    def test_children_and_leaves(self):
        t = full_tree(2, 2)
        assert t.children(()) == ((0,), (1,))
        assert t.leaves == frozenset({(0, 0), (0, 1), (1, 0), (1, 1)})
        assert t.depth == 2

    def test_cone_and_restrict(self):
        t = full_tree(2, 3)
        cone = t.cone((1,))
        assert all(n[:1] == (1,) for n in cone)
        sub = t.restrict([(0, 0, 0), (1,)])
        assert (0, 0, 0) in sub and (0, 0) in sub and (1, 1) not in sub

    def test_full_tree_over_stem(self):
        t = full_tree(2, 3, stem=(0,))
        assert t.stem == (0,)
        assert (1,) not in t


class TestCylinderMeasure:
    def test_whole_space(self):
        assert measure(CylinderSet.of([""])) == 1

    def test_normalization_absorbs_extension(self):
        v = CylinderSet.of(["0", "01"])
        assert v.strings == frozenset(["0"])
        assert v.measure == Fraction(1, 2)

    def test_three_quarters(self):
        assert measure(CylinderSet.of(["00", "01", "10"])) == Fraction(3, 4)

    def test_matches_scan_on_examples(self):
        for strings in [[""], ["0", "01"], ["00", "01", "10"], [], ["111"], ["0", "10", "110"]]:
            assert measure(CylinderSet.of(strings)) == measure_by_scan(strings)

    @given(string_sets)
    def test_measure_agrees_with_length8_scan(self, strings):
        v = CylinderSet.of(strings)
        assert v.measure == measure_by_scan(strings)

    @given(string_sets, string_sets)
    def test_monotone_under_union(self, a, b):
        va = CylinderSet.of(a)
        vu = va.union(CylinderSet.of(b))
        assert vu.measure >= va.measure
        assert vu.measure <= va.measure + CylinderSet.of(b).measure

    @given(string_sets)
    def test_canonical_form_is_prefix_free(self, strings):
        v = CylinderSet.of(strings)
        members = sorted(v.strings, key=len)
        for i, s in enumerate(members):
            for t in members[i + 1 :]:
                assert not t.startswith(s) or s == t

    @given(string_sets)
    def test_complement_partitions_level(self, strings):
        v = CylinderSet.of(strings)
        comp = v.complement_in(6)
        assert v.extensions(6) | comp.extensions(6) == frozenset(all_bits(6))
        assert not (v.extensions(6) & comp.extensions(6))


class TestCondMeasure:
    def test_halved_inside_branch(self):
        assert cond_measure(CylinderSet.of(["00"]), "0") == Fraction(1, 2)

    def test_disjoint_branch_is_zero(self):
        assert cond_measure(CylinderSet.of(["1"]), "0") == 0

    def test_full_coverage_of_branch(self):
        assert cond_measure(CylinderSet.of(["010", "011", "00"]), "01") == 1

    @given(string_sets, st.text(alphabet="01", max_size=4))
    def test_agrees_with_scan(self, strings, rho):
        assert cond_measure(CylinderSet.of(strings), rho) == cond_measure_by_scan(strings, rho)


class TestSchnorrTest:
    def test_accepts_shrinking_components(self):
        t = SchnorrTest((CylinderSet.of(["0"]), CylinderSet.of(["01"]), CylinderSet.of(["010"])))
        assert len(t) == 3
        assert t[1].measure == Fraction(1, 4)

    def test_rejects_overweight_component(self):
        with pytest.raises(TreeError):
            SchnorrTest((CylinderSet.of([""]), CylinderSet.of(["0", "1"])))
