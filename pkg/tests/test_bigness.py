from __future__ import annotations

from fractions import Fraction

import pytest

from bushycalc.bigness import (
    BigWitness,
    SmallTable,
    decide_big,
    is_big,
    markov_select,
    split_big,
    verify_big_witness,
    verify_small_table,
)
from bushycalc.errors import InternalError, PreconditionError, VerificationError
from bushycalc.generators import gen_bigness, gen_split
from bushycalc.trees import ROOT, FiniteTree, LevelFn, close_prefixes, full_tree

from oracles import big_by_enumeration, big_by_subtree_listing

ONE = LevelFn.const(1)
TWO = LevelFn.const(2)


def binary_depth2() -> FiniteTree:
    return full_tree(2, 2)


class TestDecideBig:
    def test_root_in_targets_gives_single_node_witness(self):
        t = binary_depth2()
        out = decide_big({ROOT}, TWO, ROOT, t)
        assert isinstance(out, BigWitness)
        assert out.tree.leaves == frozenset({ROOT})

    def test_all_leaves_big_at_branching(self):
        t = binary_depth2()
        out = decide_big(t.leaves, TWO, ROOT, t)
        assert isinstance(out, BigWitness)
        verify_big_witness(out, t.leaves, TWO, ROOT, t)
        assert out.tree.nodes == t.nodes

    def test_single_leaf_small_at_two(self):
        t = binary_depth2()
        out = decide_big({(0, 0)}, TWO, ROOT, t)
        assert isinstance(out, SmallTable)
        verify_small_table(out, {(0, 0)}, TWO, ROOT, t)

    def test_single_leaf_big_at_one(self):
        t = binary_depth2()
        out = decide_big({(0, 0)}, ONE, ROOT, t)
        assert isinstance(out, BigWitness)
        assert out.tree.leaves == frozenset({(0, 0)})

    def test_zero_threshold_needs_reachable_target(self):
        t = binary_depth2()
        zero = LevelFn.const(0)
        assert isinstance(decide_big(set(), zero, ROOT, t), SmallTable)
        assert isinstance(decide_big({(1, 1)}, zero, ROOT, t), BigWitness)

    def test_fractional_threshold_rounds_up(self):
        # 3/2 children required means 2 actual children.
        t = binary_depth2()
        out = decide_big({(0, 0), (0, 1)}, LevelFn.const(Fraction(3, 2)), ROOT, t)
        assert isinstance(out, SmallTable)
        out = decide_big({(0, 0), (0, 1)}, LevelFn.const(Fraction(3, 2)), (0,), t)
        assert isinstance(out, BigWitness)

    def test_root_not_in_ambient_raises(self):
        with pytest.raises(PreconditionError):
            decide_big(set(), ONE, (5,), binary_depth2())

    def test_canonical_witness_is_lexicographically_least(self):
        t = full_tree(3, 1)
        out = decide_big(t.leaves, ONE, ROOT, t)
        assert out.tree.nodes == close_prefixes([(0,)])

    def test_agrees_with_enumeration_oracle(self):
        disagreements = 0
        for seed in range(150):
            inst = gen_bigness(seed, branching=3, depth=3)
            got = is_big(inst.targets, inst.p, inst.root, inst.ambient)
            want = big_by_enumeration(inst.targets, inst.p, inst.root, inst.ambient)
            disagreements += got != want
        assert disagreements == 0

    def test_agrees_with_literal_subtree_listing_on_tiny_trees(self):
        for seed in range(40):
            inst = gen_bigness(seed, branching=2, depth=2)
            got = is_big(inst.targets, inst.p, inst.root, inst.ambient)
            want = big_by_subtree_listing(inst.targets, inst.p, inst.root, inst.ambient)
            assert got == want

    def test_monotone_in_threshold(self):
        for seed in range(60):
            inst = gen_bigness(seed)
            if is_big(inst.targets, inst.p, inst.root, inst.ambient):
                weaker = inst.p - LevelFn.const(Fraction(1, 2))
                assert is_big(inst.targets, weaker, inst.root, inst.ambient)

    def test_certificates_always_verify(self):
        for seed in range(80):
            inst = gen_bigness(seed)
            out = decide_big(inst.targets, inst.p, inst.root, inst.ambient)
            if isinstance(out, BigWitness):
                verify_big_witness(out, inst.targets, inst.p, inst.root, inst.ambient)
            else:
                verify_small_table(out, inst.targets, inst.p, inst.root, inst.ambient)

    def test_tampered_witness_fails_verification(self):
        t = binary_depth2()
        out = decide_big(t.leaves, TWO, ROOT, t)
        pruned = out.tree.restrict([(0,), (1, 0), (1, 1)])
        bad = BigWitness(ROOT, pruned, TWO, out.targets)
        with pytest.raises(VerificationError):
            verify_big_witness(bad, t.leaves, TWO, ROOT, t)

    def test_tampered_table_fails_verification(self):
        t = binary_depth2()
        out = decide_big({(0, 0)}, TWO, ROOT, t)
        flipped = tuple((n, not b if n == ROOT else b) for n, b in out.labels)
        with pytest.raises(VerificationError):
            verify_small_table(SmallTable(ROOT, TWO, flipped), {(0, 0)}, TWO, ROOT, t)


class TestSplitBig:
    def test_left_preferred_when_both_qualify(self):
        t = full_tree(2, 1)
        union_witness = decide_big(t.leaves, TWO, ROOT, t)
        res = split_big({(0,), (1,)}, {(0,), (1,)}, ONE, ONE, ROOT, union_witness)
        assert res.side == "left"
        verify_big_witness(res.witness, {(0,), (1,)}, ONE, ROOT, res.witness.tree)

    def test_right_side_when_left_is_thin(self):
        t = full_tree(3, 1)
        witness = decide_big(t.leaves, LevelFn.const(3), ROOT, t)
        res = split_big({(0,)}, {(1,), (2,)}, TWO, ONE, ROOT, witness)
        assert res.side == "right"

    def test_rejects_bad_input_witness(self):
        t = full_tree(2, 1)
        bad = BigWitness(ROOT, t.restrict([(0,)]), TWO, frozenset(t.leaves))
        with pytest.raises(VerificationError):
            split_big({(0,)}, {(1,)}, ONE, ONE, ROOT, bad)

    def test_returned_side_always_verifies(self):
        for seed in range(120):
            inst = gen_split(seed)
            union = inst.B | inst.C
            witness = decide_big(union, inst.p + inst.q, inst.root, inst.ambient)
            if not isinstance(witness, BigWitness):
                continue
            res = split_big(inst.B, inst.C, inst.p, inst.q, inst.root, witness)
            side_set = inst.B if res.side == "left" else inst.C
            side_p = inst.p if res.side == "left" else inst.q
            verify_big_witness(res.witness, side_set, side_p, inst.root, inst.ambient)


class TestMarkovSelect:
    def test_basic_selection(self):
        items = list(range(10))
        f = {i: Fraction(i, 20) for i in items}
        # mean = 9/40 < 1/4; threshold 1/2 keeps i with i/20 < 1/2.
        kept = markov_select(items, f, Fraction(1, 4), Fraction(1, 2))
        assert kept == list(range(10))

    def test_ratio_guarantee_holds_on_random_instances(self):
        import random

        rng = random.Random(7)
        for _ in range(200):
            items = list(range(rng.randint(1, 30)))
            f = {i: Fraction(rng.randint(0, 50), 100) for i in items}
            lam = sum(f.values(), Fraction(0)) / len(items) + Fraction(1, 100)
            lam_hat = lam * rng.randint(2, 5)
            kept = markov_select(items, f, lam, lam_hat)
            assert Fraction(len(kept), len(items)) > 1 - lam / lam_hat
            assert all(f[i] < lam_hat for i in kept)

    def test_mean_violation_is_reported(self):
        items = [0, 1]
        f = {0: Fraction(1, 2), 1: Fraction(1, 2)}
        with pytest.raises(PreconditionError):
            markov_select(items, f, Fraction(1, 2), Fraction(3, 4))
