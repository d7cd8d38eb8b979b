from __future__ import annotations

import random
from fractions import Fraction

import pytest

from bushycalc import splitcalc
from bushycalc.bigness import BigWitness, SmallTable, verify_big_witness, verify_small_table
from bushycalc.errors import PreconditionError
from bushycalc.functionals import ValueFunctional
from bushycalc.hashfam import HashFamily
from bushycalc.splitcalc import (
    CalcInstance,
    ComputableCert,
    Condition,
    DisjointCert,
    Inconclusive,
    JSplitInstance,
    NonTotalCert,
    calculus_check,
    capture_small_measure,
    in_tilde_V,
    in_V,
    j_split,
    least_power_index,
    partition_by_measures,
    preimage,
    pruned_core,
    split_step,
    verify_split_certificate,
)
from bushycalc.trees import CylinderSet, FiniteTree, LevelFn, all_bits, close_prefixes, full_tree

from oracles import big_by_enumeration

F = Fraction


def make_psi(tree: FiniteTree, out) -> ValueFunctional:
    return ValueFunctional(tuple((n, out(n), 0) for n in sorted(tree.nodes)))


def three_child() -> tuple[FiniteTree, ValueFunctional]:
    """One root with three children; two compute "0", one computes "1"."""
    tree = full_tree(3, 1)
    psi = make_psi(tree, lambda n: {(): "", (0,): "0", (1,): "0", (2,): "1"}[n])
    return tree, psi


class TestMembership:
    def test_easy_forcing_under_generous_budget(self):
        tree, psi = three_child()
        cert = in_tilde_V(psi, tree, (), 1, LevelFn.const(2), ["0"])
        assert cert.member and cert.kind == "tilde"
        assert isinstance(cert.evidence, SmallTable)
        # the escape set is the single "1" child
        verify_small_table(cert.evidence, {(2,)}, LevelFn.const(2), (), tree)

    def test_tight_budget_lets_the_escape_through(self):
        tree, psi = three_child()
        cert = in_tilde_V(psi, tree, (), 1, LevelFn.const(1), ["0"])
        assert not cert.member
        assert isinstance(cert.evidence, BigWitness)
        assert sorted(cert.evidence.tree.nodes) == [(), (2,)]

    def test_bigly_landed_with_witness(self):
        tree, psi = three_child()
        cert = in_V(psi, tree, (), 1, LevelFn.const(2), ["0"])
        assert cert.member and cert.kind == "plain"
        assert isinstance(cert.evidence, BigWitness)
        assert sorted(cert.evidence.targets) == [(0,), (1,)]

    def test_empty_set_is_never_landed(self):
        tree, psi = three_child()
        assert not in_V(psi, tree, (), 1, LevelFn.const(2), []).member

    def test_full_set_is_always_landed(self):
        tree, psi = three_child()
        assert in_V(psi, tree, (), 1, LevelFn.const(2), ["0", "1"]).member

    def test_rejects_strings_at_the_wrong_length(self):
        tree, psi = three_child()
        with pytest.raises(PreconditionError):
            in_V(psi, tree, (), 1, LevelFn.const(1), ["01"])

    def test_landing_agrees_with_subtree_enumeration(self):
        """Plain membership must equal exhaustive bigness of the preimage."""
        rng = random.Random(11)
        for _ in range(25):
            tree = full_tree(3, 2)
            suffix = {n: rng.choice("01") for n in tree.level(2)}
            psi = make_psi(
                tree,
                lambda n: "" if not n else ("0" if n[0] < 2 else "1")
                + ("" if len(n) == 1 else suffix[n]),
            )
            q = LevelFn.const(rng.choice([F(1, 2), 1, 2]))
            n_bits = rng.choice([1, 2])
            V = CylinderSet.of(
                [x for x in all_bits(n_bits) if rng.random() < 0.5]
            )
            cert = in_V(psi, tree, (), n_bits, q, V)
            landed = preimage(psi, tree, n_bits, V)
            assert cert.member == big_by_enumeration(landed, q, (), tree)


class TestCalculus:
    def test_duality_on_the_three_child_tree(self):
        tree, psi = three_child()
        inst = CalcInstance(
            psi, tree, (), 1, CylinderSet.of(["0"]), CylinderSet.of([]),
            LevelFn.const(2), LevelFn.const(2),
        )
        out = calculus_check(1, inst)
        assert out.holds and out.item == 1

    def test_budgets_add_under_meets(self):
        tree, psi = three_child()
        full = CylinderSet.of(["0", "1"])
        inst = CalcInstance(psi, tree, (), 1, full, full, LevelFn.const(1), LevelFn.const(1))
        assert calculus_check(2, inst).holds

    def test_easy_forcing_cuts_a_landing_down(self):
        # 2^1 is easily forced at budget 1; {"0"} is landed at budget 2;
        # the meet must stay landed at the difference budget 1.
        tree, psi = three_child()
        inst = CalcInstance(
            psi, tree, (), 1, CylinderSet.of(["0", "1"]), CylinderSet.of(["0"]),
            LevelFn.const(1), LevelFn.const(2),
        )
        out = calculus_check(3, inst)
        assert out.holds
        assert out.conclusion[0].member

    def test_uncertified_hypotheses_are_refused(self):
        tree, psi = three_child()
        inst = CalcInstance(
            psi, tree, (), 1, CylinderSet.of(["1"]), CylinderSet.of(["0"]),
            LevelFn.const(1), LevelFn.const(2),
        )
        with pytest.raises(PreconditionError, match="item 2"):
            calculus_check(2, inst)

    def test_unknown_item_is_refused(self):
        tree, psi = three_child()
        inst = CalcInstance(
            psi, tree, (), 1, CylinderSet.whole(), CylinderSet.whole(),
            LevelFn.const(1), LevelFn.const(1),
        )
        with pytest.raises(PreconditionError):
            calculus_check(7, inst)

    def test_every_item_holds_across_an_exhaustive_sweep(self):
        """All six items on every set pair at the one-bit level, plus a
        seeded sample at two bits.  A certified hypothesis with a False
        outcome would refute exact additivity, so none may appear."""
        rng = random.Random(5)
        scenarios = []
        tree, psi = three_child()
        scenarios.append((tree, psi, 1))
        wide = full_tree(4, 2)
        suffix = {n: rng.choice(["00", "01", "10", "11"]) for n in wide.level(2)}
        psi2 = make_psi(wide, lambda n: "" if len(n) < 2 else suffix[n])
        scenarios.append((wide, psi2, 2))

        budgets = [F(1, 2), 1, 2, 3]
        counts = {item: 0 for item in range(1, 7)}
        for tree, psi, n_bits in scenarios:
            space = all_bits(n_bits)
            pairs = [
                (frozenset(a), frozenset(b))
                for a in _subsets(space, rng, n_bits)
                for b in _subsets(space, rng, n_bits)
            ]
            for A, B in pairs:
                q, q2 = rng.choice(budgets), rng.choice(budgets)
                inst = CalcInstance(
                    psi, tree, (), n_bits, CylinderSet.of(A), CylinderSet.of(B),
                    LevelFn.const(q), LevelFn.const(q2),
                )
                for item in range(1, 7):
                    try:
                        out = calculus_check(item, inst)
                    except PreconditionError:
                        continue
                    assert out.holds, (item, sorted(A), sorted(B), q, q2)
                    counts[item] += 1
        assert all(counts[item] >= 5 for item in counts), counts


def _subsets(space, rng, n_bits):
    if n_bits == 1:
        # all 4 subsets of the two one-bit strings
        return [(), ("0",), ("1",), ("0", "1")]
    picked = [tuple(x for x in space if rng.random() < 0.5) for _ in range(6)]
    return picked + [space, ()]


class TestPartition:
    def test_uniform_split_between_two_measures(self):
        uniform = {x: F(1, 4) for x in "abcd"}
        part = partition_by_measures([uniform, dict(uniform)])
        assert part.achieved == F(1, 2)
        assert len(part.parts[0]) == 2 and len(part.parts[1]) == 2

    def test_single_measure_takes_everything(self):
        part = partition_by_measures([{"a": F(1, 2), "b": F(1, 2)}])
        assert part.achieved == 1
        assert part.parts == (frozenset("ab"),)

    def test_concentrated_measures_split_their_own_atoms(self):
        m0 = {"a": F(9, 10), "b": F(1, 10), "c": 0}
        m1 = {"a": 0, "b": F(1, 10), "c": F(9, 10)}
        part = partition_by_measures([m0, m1])
        assert part.achieved == F(9, 10)
        assert "a" in part.parts[0] and "c" in part.parts[1]

    def test_agrees_with_brute_force(self):
        rng = random.Random(23)
        items = list("abcdef")
        for _ in range(8):
            measures = []
            for _ in range(2):
                cuts = sorted(rng.randint(0, 12) for _ in range(5))
                weights = [a - b for a, b in zip(cuts + [12], [0] + cuts)]
                measures.append({x: F(w, 12) for x, w in zip(items, weights)})
            part = partition_by_measures(measures)
            best = max(
                min(
                    sum((m[x] for i, x in zip(assign, items) if i == side), F(0))
                    for side, m in enumerate(measures)
                )
                for assign in _all_assignments(len(items))
            )
            assert part.achieved == best

    def test_support_cap(self):
        big = {str(i): F(1, 15) for i in range(15)}
        with pytest.raises(PreconditionError, match="cap"):
            partition_by_measures([big, dict(big)])

    def test_rejects_non_probability_vectors(self):
        with pytest.raises(PreconditionError, match="probability"):
            partition_by_measures([{"a": F(1, 2), "b": F(1, 3)}])

    def test_rejects_mismatched_supports(self):
        with pytest.raises(PreconditionError, match="support"):
            partition_by_measures([{"a": 1}, {"b": 1}])


def _all_assignments(n):
    if n == 0:
        yield ()
        return
    for rest in _all_assignments(n - 1):
        yield rest + (0,)
        yield rest + (1,)


def spread_image_tree():
    """16 subtrees of 13 leaves.  Twelve leaves per subtree share a thick
    4-bit prefix (7 prefixes overall, suffixes distinct within a node); the
    thirteenth sprays onto a prefix outside the thick core.  No singleton
    preimage is 6/5-big, the attained image has measure exactly 1/2, and
    per-node escapes from any set containing the core are single leaves."""
    nodes = [()] + [(a,) for a in range(16)] + [(a, b) for a in range(16) for b in range(13)]
    tree = FiniteTree(frozenset(nodes), LevelFn((16, 13), 13), 2)
    thick = [format(i, "04b") for i in range(7)]
    spray = [format(i, "04b") for i in range(7, 16)]

    def out(n):
        if len(n) < 2:
            return ""
        a, b = n
        if b < 12:
            return thick[a % 7] + format(((a // 7) * 11 + b) % 16, "04b")
        return spray[a % 9] + format(a // 9, "04b")

    return tree, make_psi(tree, out), thick


class TestCapture:
    def test_least_power_index(self):
        assert least_power_index(F(1, 2)) == 2
        assert least_power_index(F(1, 4)) == 5
        assert least_power_index(F(9, 10)) == 1
        assert least_power_index(F(1, 10)) == 22

    def test_band_thresholds(self):
        bands = splitcalc._capture_bands(
            LevelFn.const(13), LevelFn.const(F(1, 2)), LevelFn.const(F(6, 5)),
            k=2, level=1, depth=2,
        )
        assert bands(0) == F(113, 10)  # p - p_hat - q below the alignment level
        assert bands(1) == F(17, 5)    # p - 4 k p_hat from it on
        assert bands(5) == F(17, 5)

    def test_constant_functional_is_captured_directly(self):
        tree = full_tree(8, 2)
        psi = make_psi(tree, lambda n: "00"[: len(n)])
        r = capture_small_measure(
            tree, tree, psi, (), F(1, 2), LevelFn.const(7),
            LevelFn.const(F(1, 4)), LevelFn.const(1),
        )
        assert r.direct
        assert sorted(r.v_star.strings) == ["00"]
        assert r.v_star.measure < F(1, 2)
        self._check_postconditions(r, psi, LevelFn.const(1))

    def test_wide_image_is_captured_through_a_sampled_complement(self):
        tree = full_tree(21, 2)
        psi = make_psi(tree, lambda n: "" if not n else format(n[0], "05b"))
        r = capture_small_measure(
            tree, tree, psi, (), F(1, 2), LevelFn.const(21),
            LevelFn.const(F(1, 4)), LevelFn.const(2), seed=7,
        )
        assert r.direct
        assert r.v_star.measure < F(1, 2)
        self._check_postconditions(r, psi, LevelFn.const(2))

    def test_aligned_shapes_intersect_to_a_small_set(self, monkeypatch):
        """The pigeonhole branch: every sampled set swallows the thick core,
        so escapes stay small, shapes coincide, and the intersection of two
        same-shape sets captures on the banded tree."""
        tree, psi, thick = spread_image_tree()
        pads = [("0111", "1000"), ("1001", "1010"), ("1011", "1100"), ("1101", "1110")]

        def swallow(eps, delta, k, count, seed, max_bits=16):
            sets = tuple(
                CylinderSet.of(frozenset(thick) | set(pads[i % 4]))
                for i in range(count + 1)
            )
            return HashFamily(
                ground_bits=4, sets=sets, k=k, delta=delta, epsilon=eps,
                hat_epsilon=eps, seed=seed,
            )

        monkeypatch.setattr(splitcalc, "generate_hash_family", swallow)
        p_hat = LevelFn.const(F(6, 5))
        r = capture_small_measure(
            tree, tree, psi, (), F(1, 2), LevelFn.const(13),
            LevelFn.const(F(1, 2)), p_hat, seed=3,
        )
        assert not r.direct
        assert sorted(r.v_star.strings) == thick
        assert r.v_star.measure == F(7, 16) < F(1, 2)
        assert r.ground_bits == 4 and r.k == 2 and r.level == 1
        bands = splitcalc._capture_bands(
            LevelFn.const(13), LevelFn.const(F(1, 2)), p_hat, 2, r.level, 2,
        )
        self._check_postconditions(r, psi, bands)

    @staticmethod
    def _check_postconditions(r, psi, need):
        """Independent scan: childless nodes sit at full depth and compute
        into the captured set; every inner node meets the bushiness bound."""
        depth = max(len(x) for x in r.tree.nodes)
        for node in r.tree.nodes:
            kids = r.tree.children(node)
            if kids:
                assert len(kids) >= need(len(node))
            else:
                assert len(node) == depth
                bits = psi.restrict(node, r.ground_bits)
                assert bits is not None and r.v_star.covers(bits)

    def test_threshold_chain_must_be_strict(self):
        tree = full_tree(8, 2)
        psi = make_psi(tree, lambda n: "00"[: len(n)])
        with pytest.raises(PreconditionError, match="6q < 3p_hat < p"):
            capture_small_measure(
                tree, tree, psi, (), F(1, 2), LevelFn.const(7),
                LevelFn.const(F(1, 2)), LevelFn.const(1),
            )

    def test_no_alignment_level_is_reported(self):
        tree, psi, _ = spread_image_tree()
        with pytest.raises(PreconditionError, match="5k"):
            capture_small_measure(
                tree, tree, psi, (), F(1, 2), LevelFn.const(13),
                LevelFn.const(F(1, 2)), LevelFn.const(3),
            )

    def test_stem_must_sit_in_the_core(self):
        tree = full_tree(8, 2)
        psi = make_psi(tree, lambda n: "00"[: len(n)])
        with pytest.raises(PreconditionError):
            capture_small_measure(
                tree, tree, psi, (9, 9), F(1, 2), LevelFn.const(7),
                LevelFn.const(F(1, 4)), LevelFn.const(1),
            )


def halves_instances():
    """Two copies over one 4-ary tree, landing in complementary halves of
    the output space; the second bit splits each node's children evenly."""
    tree = full_tree(4, 2)

    def half(prefix):
        def out(n):
            if len(n) == 0:
                return ""
            if len(n) == 1:
                return prefix
            return prefix + ("0" if n[1] < 2 else "1")
        return out

    return [
        JSplitInstance(make_psi(tree, half("0")), tree, tree, ()),
        JSplitInstance(make_psi(tree, half("1")), tree, tree, ()),
    ]


SPLIT_ARGS = (
    LevelFn.const(3), LevelFn.const(F(1, 4)), LevelFn.const(0),
    LevelFn.const(F(1, 8)), LevelFn.const(F(1, 8)), CylinderSet.whole(), 0,
)


def escape_spread_instances():
    """Two copies over a 23-ary tree.  The second lands "000" everywhere.
    The first mostly lands "000" too, but subtrees 0-4 each hold three
    leaves stopping at "1" and three stopping at "01": per level the escape
    weight stays under q = 4, while the union over both levels is big."""
    tree = full_tree(23, 2)

    def out(n):
        if len(n) < 2:
            return ""
        a, b = n
        if a < 5 and b < 3:
            return "1"
        if a < 5 and 3 <= b < 6:
            return "01"
        return "000"

    return [
        JSplitInstance(make_psi(tree, out), tree, tree, ()),
        JSplitInstance(make_psi(tree, lambda n: "" if len(n) < 2 else "000"), tree, tree, ()),
    ]


ESCAPE_ARGS = (
    LevelFn.const(19), LevelFn.const(4), LevelFn.const(0),
    LevelFn.const(F(1, 2)), LevelFn.const(F(1, 2)), CylinderSet.whole(), 0,
)


class TestJSplit:
    def test_single_instance_takes_the_whole_set(self):
        tree = full_tree(4, 2)
        inst = [JSplitInstance(make_psi(tree, lambda n: "00"[: len(n)]), tree, tree, ())]
        args = SPLIT_ARGS[:5] + (CylinderSet.of(["0", "1"]), 1)
        out = j_split(inst, *args)
        assert isinstance(out, DisjointCert)
        (a,) = out.assignments
        assert a.index == 0 and sorted(a.V.strings) == ["0", "1"] and a.n == 1
        assert verify_split_certificate(out, inst, *args) is None

    def test_complementary_halves_split_at_the_first_bit(self):
        inst = halves_instances()
        out = j_split(inst, *SPLIT_ARGS)
        assert isinstance(out, DisjointCert)
        got = sorted((a.index, sorted(a.V.strings), a.n) for a in out.assignments)
        assert got == [(0, ["0"], 1), (1, ["1"], 1)]
        assert verify_split_certificate(out, inst, *SPLIT_ARGS) is None

    def test_two_constants_confine_to_a_level_tree(self):
        tree = full_tree(4, 2)
        inst = [
            JSplitInstance(make_psi(tree, lambda n: "00"[: len(n)]), tree, tree, ()),
            JSplitInstance(make_psi(tree, lambda n: "11"[: len(n)]), tree, tree, ()),
        ]
        out = j_split(inst, *SPLIT_ARGS)
        assert isinstance(out, ComputableCert)
        assert out.u == 2 and out.n_bar == 0
        assert dict(out.w_levels)[2] == frozenset({"00", "11"})
        assert verify_split_certificate(out, inst, *SPLIT_ARGS) is None

    def test_cross_level_escapes_force_divergence(self):
        inst = escape_spread_instances()
        out = j_split(inst, *ESCAPE_ARGS)
        assert isinstance(out, NonTotalCert)
        assert out.index == 0 and out.n_hat == 3
        assert dict(out.w_levels) == {
            1: frozenset({"0"}), 2: frozenset({"00"}), 3: frozenset({"000"})
        }
        # every escape node halts before three output bits
        for s in out.s_nodes:
            assert inst[0].psi.restrict(s, 3) is None
        assert verify_split_certificate(out, inst, *ESCAPE_ARGS) is None

    def test_one_bit_horizon_is_inconclusive(self):
        tree = full_tree(4, 2)
        inst = [
            JSplitInstance(make_psi(tree, lambda n: "0"[: len(n)]), tree, tree, ()),
            JSplitInstance(make_psi(tree, lambda n: "1"[: len(n)]), tree, tree, ()),
        ]
        out = j_split(inst, *SPLIT_ARGS)
        assert isinstance(out, Inconclusive)
        assert "two output levels" in out.reason
        assert verify_split_certificate(out, inst, *SPLIT_ARGS) is None

    def test_budget_domination_is_validated(self):
        inst = halves_instances()
        weak = (LevelFn.const(1),) + SPLIT_ARGS[1:]
        with pytest.raises(PreconditionError, match="does not dominate"):
            j_split(inst, *weak)

    def test_starving_an_output_length_is_refused(self):
        tree = full_tree(5, 2)
        # a single leaf computes two bits: the empty set is easily forced at 2
        sparse = make_psi(
            tree, lambda n: "" if not n else ("00" if n == (0, 0) else "0")
        )
        full = make_psi(
            tree, lambda n: "" if not n else "1" + ("" if len(n) == 1 else str(n[1] % 2))
        )
        inst = [
            JSplitInstance(sparse, tree, tree, ()),
            JSplitInstance(full, tree, tree, ()),
        ]
        args = (
            LevelFn.const(4), LevelFn.const(F(1, 2)), LevelFn.const(0),
            LevelFn.const(F(1, 4)), LevelFn.const(F(1, 4)), CylinderSet.whole(), 0,
        )
        with pytest.raises(PreconditionError, match="too few nodes compute 2"):
            j_split(inst, *args)

    def test_unforced_starting_set_is_refused(self):
        tree = full_tree(4, 2)
        inst = [JSplitInstance(make_psi(tree, lambda n: "11"[: len(n)]), tree, tree, ())]
        args = SPLIT_ARGS[:5] + (CylinderSet.of(["0"]), 1)
        with pytest.raises(PreconditionError, match="not easily forced"):
            j_split(inst, *args)


class TestVerifySplitCertificate:
    def test_swapped_assignments_fail(self):
        inst = halves_instances()
        out = j_split(inst, *SPLIT_ARGS)
        a, b = sorted(out.assignments, key=lambda x: x.index)
        forged = DisjointCert((
            splitcalc.Assignment(0, b.V, b.n, a.witness),
            splitcalc.Assignment(1, a.V, a.n, b.witness),
        ))
        reason = verify_split_certificate(forged, inst, *SPLIT_ARGS)
        assert reason is not None and "witness fails" in reason

    def test_shared_cylinder_fails(self):
        inst = halves_instances()
        out = j_split(inst, *SPLIT_ARGS)
        a, b = sorted(out.assignments, key=lambda x: x.index)
        forged = DisjointCert((a, splitcalc.Assignment(1, a.V, a.n, a.witness)))
        reason = verify_split_certificate(forged, inst, *SPLIT_ARGS)
        assert reason is not None

    def test_missing_instance_fails(self):
        inst = halves_instances()
        out = j_split(inst, *SPLIT_ARGS)
        forged = DisjointCert(out.assignments[:1])
        reason = verify_split_certificate(forged, inst, *SPLIT_ARGS)
        assert reason == "assignments do not cover every instance exactly once"

    def test_tampered_forcing_length_fails(self):
        inst = escape_spread_instances()
        out = j_split(inst, *ESCAPE_ARGS)
        forged = NonTotalCert(
            out.index, out.s_nodes, out.s_witness, out.tree, out.small_tables,
            2, out.w_levels, out.q_prime,
        )
        reason = verify_split_certificate(forged, inst, *ESCAPE_ARGS)
        assert reason is not None

    def test_tampered_plateau_width_fails(self):
        tree = full_tree(4, 2)
        inst = [
            JSplitInstance(make_psi(tree, lambda n: "00"[: len(n)]), tree, tree, ()),
            JSplitInstance(make_psi(tree, lambda n: "11"[: len(n)]), tree, tree, ()),
        ]
        out = j_split(inst, *SPLIT_ARGS)
        forged = ComputableCert(
            out.index, out.tree, out.small_tables, 1, out.n_bar,
            out.w_levels, out.q_prime,
        )
        reason = verify_split_certificate(forged, inst, *SPLIT_ARGS)
        assert reason == "plateau widths differ from 1"

    def test_unknown_certificate_kind_fails(self):
        reason = verify_split_certificate(object(), [], *SPLIT_ARGS)
        assert "unknown certificate" in reason


def narrow_stem_condition():
    """A unary stem () -> (0,) branching into two 9-ary frontier nodes.

    Narrow upper levels keep the level widths w(1) = 1 and w(2) = 2, so the
    chain p > 4 p_hat w > 16 q w is satisfiable with honest bushiness at the
    leaf level."""
    leaves = [(0, a, b) for a in range(2) for b in range(9)]
    nodes = close_prefixes(leaves)
    tree = FiniteTree(frozenset(nodes), LevelFn((1, 2, 9), 9), 3)
    cond = Condition(
        eta=(0,), ambient=tree, core=tree,
        p=LevelFn((64, 5, 9), 9), q=LevelFn.const(F(1, 5)),
    )
    return tree, cond


def frontier_psi(tree, diverge_right=False):
    def out(n):
        if len(n) < 3:
            return ""
        if n[1] == 1 and diverge_right:
            return ""
        return str(n[1]) + str(n[2] % 2)
    return make_psi(tree, out)


class TestSplitStep:
    def test_frontier_splits_into_disjoint_parts(self):
        tree, cond = narrow_stem_condition()
        psi = frontier_psi(tree)
        out = split_step(cond, psi, [(0, 0), (0, 1)], LevelFn.const(1))
        assert out.kind == "split"
        got = sorted((p.index, p.eta, sorted(p.V.strings), p.n) for p in out.parts)
        assert got == [(0, (0, 0), ["0"], 1), (1, (0, 1), ["1"], 1)]
        # the part trees are bushy at p_hat/2 and land inside their cylinders
        for part in out.parts:
            for node in part.tree.nodes:
                kids = part.tree.children(node)
                if kids:
                    assert len(kids) >= F(1, 2)
                else:
                    assert part.V.covers(psi.restrict(node, part.n))
        images = [frozenset(p.V.strings) for p in out.parts]
        assert not images[0] & images[1]

    def test_thin_convergence_forces_divergence_first(self):
        tree, cond = narrow_stem_condition()
        psi = frontier_psi(tree, diverge_right=True)
        out = split_step(cond, psi, [(0, 0), (0, 1)], LevelFn.const(1))
        assert out.kind == "divergence"
        assert out.index == 1
        assert out.eta_prime == (0, 1)
        assert out.detail == "1 output bits computed on a thin set"
        # the kept subtree never computes a first bit
        for node in out.certificate.tree.nodes:
            assert psi.restrict(node, 1) is None

    def test_width_inequality_names_the_level(self):
        tree, cond = narrow_stem_condition()
        bad = Condition(
            eta=(0,), ambient=tree, core=tree,
            p=LevelFn((64, 4, 9), 9), q=LevelFn.const(F(1, 5)),
        )
        with pytest.raises(PreconditionError, match="p > 4 p_hat w at level 1"):
            split_step(bad, frontier_psi(tree), [(0, 0), (0, 1)], LevelFn.const(1))

    def test_budget_inequality_names_the_level(self):
        tree, cond = narrow_stem_condition()
        bad = Condition(
            eta=(0,), ambient=tree, core=tree,
            p=LevelFn((64, 5, 9), 9), q=LevelFn.const(F(1, 4)),
        )
        with pytest.raises(PreconditionError, match="4 p_hat w > 16 q w at level 1"):
            split_step(bad, frontier_psi(tree), [(0, 0), (0, 1)], LevelFn.const(1))

    def test_frontier_validation(self):
        tree, cond = narrow_stem_condition()
        psi = frontier_psi(tree)
        with pytest.raises(PreconditionError, match="empty"):
            split_step(cond, psi, [], LevelFn.const(1))
        with pytest.raises(PreconditionError, match="distinct"):
            split_step(cond, psi, [(0, 0), (0, 0)], LevelFn.const(1))
        with pytest.raises(PreconditionError, match="outside the core"):
            split_step(cond, psi, [(1, 0)], LevelFn.const(1))

    def test_big_non_core_over_a_frontier_node_is_refused(self):
        tree, _ = narrow_stem_condition()
        kept = frozenset(n for n in tree.nodes if n != (0, 0, 8))
        core = FiniteTree(kept, tree.bound, tree.max_depth)
        cond = Condition(
            eta=(0,), ambient=tree, core=core,
            p=LevelFn((64, 5, 9), 9), q=LevelFn.const(F(1, 5)),
            expulsions=(((0, 0, 8), 0),),
        )
        with pytest.raises(PreconditionError, match="non-core"):
            split_step(cond, frontier_psi(tree), [(0, 0)], LevelFn.const(1))


class TestCondition:
    def test_expulsion_stages_replay_the_core(self):
        tree = full_tree(2, 2)
        kept = frozenset(
            n for n in tree.nodes if not (n[:1] == (0,) or n[:2] == (1, 0))
        )
        core = FiniteTree(kept, tree.bound, tree.max_depth)
        cond = Condition(
            eta=(), ambient=tree, core=core, p=LevelFn.const(2), q=LevelFn.const(1),
            expulsions=(((1, 0), 0), ((0,), 1)),
        )
        assert (0, 1) in cond.core_at(0) and (1, 0) not in cond.core_at(0)
        assert (0, 1) not in cond.core_at(1)
        assert cond.core_at(None).nodes == core.nodes

    def test_core_must_match_the_expulsions(self):
        tree = full_tree(2, 2)
        with pytest.raises(PreconditionError, match="minus all expulsions"):
            Condition(
                eta=(), ambient=tree, core=tree, p=LevelFn.const(2),
                q=LevelFn.const(1), expulsions=(((0,), 0),),
            )

    def test_expelled_nodes_must_exist(self):
        tree = full_tree(2, 2)
        with pytest.raises(PreconditionError, match="not in the ambient"):
            Condition(
                eta=(), ambient=tree, core=tree, p=LevelFn.const(2),
                q=LevelFn.const(1), expulsions=(((7,), 0),),
            )

    def test_pruned_core_drops_dead_ends(self):
        nodes = close_prefixes([(0, 0), (1,)])
        tree = FiniteTree(frozenset(nodes), LevelFn.const(2), 2)
        pruned = pruned_core(tree)
        assert (1,) not in pruned and (0, 0) in pruned
