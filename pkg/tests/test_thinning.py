from __future__ import annotations

from fractions import Fraction

import pytest

from bushycalc.bigness import decide_big, is_big, verify_small_table
from bushycalc.errors import PreconditionError, TreeError
from bushycalc.functionals import ValueFunctional
from bushycalc.generators import gen_thin
from bushycalc.thinning import (
    ExactViolation,
    avoid_prune,
    check_exact_bushy,
    exact_thin,
    force_divergence,
    stage_totality,
)
from bushycalc.trees import ROOT, FiniteTree, LevelFn, close_prefixes, full_tree, is_prefix


class TestValueFunctional:
    def test_output_inheritance_and_restrict(self):
        psi = ValueFunctional((((0,), "01", 1), ((0, 1), "0110", 3)))
        assert psi.output((0, 1, 2)) == "0110"
        assert psi.output((0, 0)) == "01"
        assert psi.output(()) == ""
        assert psi.restrict((0, 1), 3) == "011"
        assert psi.restrict((0,), 3) is None

    def test_stage_visibility(self):
        psi = ValueFunctional((((0,), "01", 1), ((0, 1), "0110", 3)))
        assert psi.output((0, 1), t=2) == "01"
        assert psi.output((0, 1), t=3) == "0110"
        assert psi.restrict((0, 1), 4, t=2) is None

    def test_rejects_non_extending_outputs(self):
        with pytest.raises(TreeError):
            ValueFunctional((((0,), "01", 0), ((0, 1), "10", 0)))

    def test_rejects_longer_output_at_earlier_stage(self):
        with pytest.raises(TreeError):
            ValueFunctional((((0,), "01", 5), ((0, 1), "0110", 2)))


class TestCheckExactBushy:
    def test_full_tree_is_exact(self):
        t = full_tree(2, 3)
        assert check_exact_bushy(t, LevelFn.const(2), 0, 2) is None

    def test_reports_first_offender(self):
        nodes = close_prefixes([(0, 0), (0, 1), (1, 0)])
        t = FiniteTree(frozenset(nodes), LevelFn.const(2), 2)
        violation = check_exact_bushy(t, LevelFn.const(2), 0, 1)
        assert isinstance(violation, ExactViolation)
        assert violation.node == (1,)
        assert violation.count == 1 and violation.required == 2

    def test_ceiling_of_fractional_threshold(self):
        t = full_tree(2, 2)
        assert check_exact_bushy(t, LevelFn.const(Fraction(3, 2)), 0, 1) is None
        assert check_exact_bushy(t, LevelFn.const(Fraction(5, 2)), 0, 1) is not None


class TestExactThin:
    def test_pinned_binary_example(self):
        # Frozen by hand: keep the child with both leaves surviving, drop the
        # half-dense child, then keep both grandchildren.
        t = full_tree(2, 2)
        S = {(0, 0), (0, 1), (1, 0)}
        out = exact_thin(t, S, Fraction(7, 10), LevelFn.const(Fraction(1, 4)))
        assert out.nodes == close_prefixes([(0, 0), (0, 1)])

    def test_output_is_scaled_bushy_with_leaves_in_targets(self):
        for seed in range(100):
            inst = gen_thin(seed)
            out = exact_thin(inst.tree, inst.targets, inst.lam, inst.eps)
            assert out.leaves <= inst.targets
            stem = inst.tree.stem
            for node in out.nodes:
                kids = out.children(node)
                if kids and is_prefix(stem, node):
                    level = len(node)
                    branching = len(inst.tree.children(node))
                    assert Fraction(len(kids)) > inst.eps(level) * branching

    def test_rejects_sparse_targets(self):
        t = full_tree(2, 2)
        with pytest.raises(PreconditionError):
            exact_thin(t, {(0, 0)}, Fraction(7, 10), LevelFn.const(Fraction(1, 4)))

    def test_rejects_eps_budget_at_least_lambda(self):
        t = full_tree(2, 2)
        with pytest.raises(PreconditionError):
            exact_thin(t, set(t.leaves), Fraction(1, 4), LevelFn.const(Fraction(1, 4)))


class TestAvoidPrune:
    def test_drops_exactly_the_obstacle_cone(self):
        t = full_tree(5, 2)
        res = avoid_prune(t, t, {(0,)}, LevelFn.const(5), LevelFn.const(1), LevelFn.const(2))
        assert (0,) not in res.tree
        assert (0, 3) not in res.tree
        assert all((i,) in res.tree for i in range(1, 5))
        for node, table in res.small_tables:
            verify_small_table(
                table, frozenset(t.nodes - res.tree.nodes), LevelFn.const(3), node, t
            )

    def test_stem_exclusion_is_reported(self):
        t = full_tree(2, 2)
        with pytest.raises(PreconditionError, match="avoidance impossible"):
            avoid_prune(t, t, {ROOT}, LevelFn.const(2), LevelFn.const(0), LevelFn.const(1))

    def test_result_never_meets_obstacle_closure(self):
        t = full_tree(4, 3)
        S = {(0,), (1, 2), (2, 0, 0)}
        res = avoid_prune(t, t, S, LevelFn.const(4), LevelFn.const(0), LevelFn.const(2))
        for node in res.tree.nodes:
            assert not any(is_prefix(tuple(s), node) for s in S)
        residual = LevelFn.const(2)
        for node in res.tree.nodes:
            kids = res.tree.children(node)
            if len(node) < t.max_depth:
                assert Fraction(len(kids)) >= residual(len(node))


class TestForceDivergence:
    def test_prunes_converging_cone(self):
        t = full_tree(4, 2)
        psi = ValueFunctional((((0,), "11", 0), ((1,), "1", 0)))
        res = force_divergence(t, t, psi, 2, LevelFn.const(4), LevelFn.const(0), LevelFn.const(2))
        assert (0,) not in res.tree
        assert (1,) in res.tree  # only one bit converged there
        for node in res.tree.nodes:
            assert psi.restrict(node, 2) is None

    def test_reports_when_convergence_is_big(self):
        t = full_tree(2, 2)
        psi = ValueFunctional((((), "11", 0),))
        with pytest.raises(PreconditionError):
            force_divergence(t, t, psi, 2, LevelFn.const(2), LevelFn.const(0), LevelFn.const(1))


class TestStageTotality:
    def test_full_skeleton_with_unit_use(self):
        t = full_tree(2, 3)
        entries = tuple(
            (node, "1" * len(node), len(node)) for node in sorted(t.nodes) if node != ROOT
        )
        psi = ValueFunctional(entries)
        staged = stage_totality(t, t, psi, LevelFn.const(2), LevelFn.const(0), M=2)
        assert staged.tree.nodes == t.nodes
        assert all(len(n) == 3 for n in staged.frontier)
        assert len(staged.stages) == 3

    def test_zero_stage_attaches_one_layer(self):
        t = full_tree(3, 2)
        entries = tuple((node, "1", 0) for node in t.level(1))
        psi = ValueFunctional(entries)
        staged = stage_totality(t, t, psi, LevelFn.const(2), LevelFn.const(0), M=0)
        assert staged.frontier == tuple(sorted((i,) for i in range(2)))
        assert staged.tree.depth == 1

    def test_routes_around_divergent_branch(self):
        t = full_tree(3, 2)
        # Output bits appear everywhere except under child 0.
        entries = [((i,), "1", 0) for i in (1, 2)]
        entries += [((i, j), "11", 1) for i in (1, 2) for j in range(3)]
        psi = ValueFunctional(tuple(entries))
        staged = stage_totality(t, t, psi, LevelFn.const(2), LevelFn.const(0), M=1)
        assert (0,) not in staged.tree
        assert all(psi.restrict(n, 2) is not None for n in staged.frontier)

    def test_hypothesis_failure_names_stage_and_node(self):
        t = full_tree(2, 2)
        psi = ValueFunctional((((0,), "1", 0),))
        with pytest.raises(PreconditionError, match="stage 0"):
            stage_totality(t, t, psi, LevelFn.const(2), LevelFn.const(0), M=0)
