"""Exact thinning, avoidance pruning, forced divergence, and staged totality.

exact_thin shrinks an exactly bushy tree onto a dense leaf set while keeping
a per-level fraction of every branching; the selection threshold at level m
keeps a child when its surviving-leaf fraction exceeds (lam - eps)/(1 - eps),
and the kept-children count then always exceeds eps(m) times the branching.

avoid_prune removes every node over which an obstacle set is big, leaving a
still-bushy tree that provably never meets the obstacle, together with
smallness certificates for everything that was cut away.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .bigness import SmallTable, _big_labels, decide_big, BigWitness, meets_threshold
from .errors import InternalError, PreconditionError
from .functionals import ValueFunctional
from .trees import FiniteTree, LevelFn, Node, close_prefixes, is_prefix, node_key


@dataclass(frozen=True)
class ExactViolation:
    node: Node
    count: int
    required: int


def check_exact_bushy(tree: FiniteTree, p: LevelFn, lo: int, hi: int) -> ExactViolation | None:
    """First non-leaf in the level band whose child count differs from ceil(p)."""
    for node in sorted(tree.nodes, key=node_key):
        kids = tree.children(node)
        if not kids:
            continue
        if lo <= len(node) <= hi:
            required = p.ceil_at(len(node))
            if len(kids) != required:
                return ExactViolation(node, len(kids), required)
    return None


def exact_thin(tree: FiniteTree, S: Iterable[Node], lam: Fraction, eps: LevelFn) -> FiniteTree:
    """Thin an exactly bushy tree onto leaves from S, level by level."""
    targets = frozenset(tuple(s) for s in S)
    stem = tree.stem
    lo = len(stem)
    leaf_levels = {len(leaf) for leaf in tree.leaves}
    if len(leaf_levels) != 1:
        raise PreconditionError("exact_thin needs all leaves on one level")
    hi = leaf_levels.pop()
    if hi <= lo:
        raise PreconditionError("tree has no band to thin")
    if not targets <= tree.leaves:
        raise PreconditionError("target set must consist of leaves")
    # Uniform branching per level is what makes per-child leaf counts equal.
    counts = {}
    for level in range(lo, hi):
        widths = {len(tree.children(n)) for n in tree.level(level) if is_prefix(stem, n)}
        if len(widths) != 1:
            raise PreconditionError(f"level {level} does not branch uniformly")
        counts[level] = widths.pop()
    eps_sum = Fraction(0)
    for level in range(lo, hi):
        e = eps(level)
        if not 0 < e < 1:
            raise PreconditionError(f"eps({level}) = {e} is outside (0, 1)")
        eps_sum += e
    if lam <= eps_sum:
        raise PreconditionError(f"survival bound {lam} does not exceed the eps total {eps_sum}")

    surviving: dict = {}
    total: dict = {}
    for node in sorted(tree.nodes, key=node_key, reverse=True):
        if not is_prefix(stem, node):
            continue
        kids = tree.children(node)
        if not kids:
            surviving[node] = 1 if node in targets else 0
            total[node] = 1
        else:
            surviving[node] = sum(surviving[c] for c in kids)
            total[node] = sum(total[c] for c in kids)
    if Fraction(surviving[stem], total[stem]) <= lam:
        raise PreconditionError(
            f"surviving fraction {Fraction(surviving[stem], total[stem])} is not above {lam}"
        )

    kept_nodes = set(close_prefixes([stem]))

    def thin(node: Node, lam_cur: Fraction) -> None:
        level = len(node)
        if level == hi:
            return
        e = eps(level)
        threshold = (lam_cur - e) / (1 - e)
        kept = [
            c
            for c in tree.children(node)
            if Fraction(surviving[c], total[c]) > threshold
        ]
        if not Fraction(len(kept)) > e * counts[level]:
            raise InternalError(f"kept too few children under {node}")
        for c in kept:
            kept_nodes.add(c)
            thin(c, lam_cur - e)

    thin(stem, lam)
    out = FiniteTree(frozenset(kept_nodes), tree.bound, tree.max_depth)
    if not out.leaves <= targets:
        raise InternalError("thinned tree has a leaf outside the target set")
    return out


@dataclass(frozen=True)
class PruneResult:
    """A pruned subtree plus per-node smallness certificates for the cut."""

    tree: FiniteTree
    stem: Node
    small_tables: tuple  # tuple[tuple[Node, SmallTable], ...]
    p: LevelFn
    q: LevelFn
    q2: LevelFn


def _upward_closure(S: frozenset, ambient: FiniteTree) -> frozenset:
    """All ambient nodes having a prefix in S."""
    marked = set()
    for node in sorted(ambient.nodes, key=node_key):
        if node in S or (node and node[:-1] in marked):
            marked.add(node)
    return frozenset(marked)


def avoid_prune(
    ambient: FiniteTree,
    core: FiniteTree,
    S: Iterable[Node],
    p: LevelFn,
    q: LevelFn,
    q2: LevelFn,
) -> PruneResult:
    """Drop every core node over which [S] is q2-big; certify what remains.

    The result tree never meets [S], keeps at least (p - q - q2)(level)
    children at every non-maximal node, and carries a SmallTable per node
    showing the discarded part of the ambient tree is (q + q2)-small there.
    """
    targets = frozenset(tuple(s) for s in S)
    stem = core.stem
    if stem not in ambient:
        raise PreconditionError("core stem is missing from the ambient tree")
    if not core.nodes <= ambient.nodes:
        raise PreconditionError("core is not a subtree of the ambient tree")
    residual = p - q - q2
    for level in range(len(stem), ambient.max_depth):
        if residual(level) <= 0:
            raise PreconditionError(f"p - q - q2 is not positive at level {level}")
    obstacle = _upward_closure(targets, ambient)
    labels = _big_labels(obstacle, q2, stem, ambient)
    if labels[stem]:
        raise PreconditionError("avoidance impossible: the obstacle set is big over the stem")
    keep = set()
    stack = [stem]
    while stack:
        node = stack.pop()
        keep.add(node)
        stack.extend(c for c in core.children(node) if not labels[c])
    pruned = FiniteTree(close_prefixes(keep), ambient.bound, ambient.max_depth)
    for node in keep:
        if node in obstacle:
            raise InternalError(f"pruned tree retains obstacle node {node}")
        kids = pruned.children(node)
        if len(node) < ambient.max_depth and not meets_threshold(len(kids), residual(len(node))):
            raise InternalError(f"pruned tree is too thin at {node}")
    discarded = frozenset(ambient.nodes - pruned.nodes)
    cut_labels = _big_labels(discarded, q + q2, stem, ambient)
    tables = []
    for node in sorted(keep, key=node_key):
        if cut_labels[node]:
            raise PreconditionError(
                f"the discarded part is (q + q2)-big over {node}; smallness premise fails"
            )
        domain = ambient.cone(node)
        tables.append((node, SmallTable(node, q + q2, tuple((d, cut_labels[d]) for d in domain))))
    return PruneResult(pruned, stem, tuple(tables), p, q, q2)


def force_divergence(
    ambient: FiniteTree,
    core: FiniteTree,
    psi: ValueFunctional,
    n: int,
    p: LevelFn,
    q: LevelFn,
    q2: LevelFn,
) -> PruneResult:
    """Prune so that no surviving node carries n converged output bits."""
    S = frozenset(node for node in ambient.nodes if psi.converges(node, n))
    result = avoid_prune(ambient, core, S, p, q, q2)
    for node in result.tree.nodes:
        if psi.converges(node, n):
            raise InternalError(f"surviving node {node} still computes {n} bits")
    return result


@dataclass(frozen=True)
class StageRecord:
    stage: int
    frontier: tuple
    attached: tuple


@dataclass(frozen=True)
class StagedTotality:
    tree: FiniteTree
    frontier: tuple
    stages: tuple  # tuple[StageRecord, ...]


def stage_totality(
    ambient: FiniteTree,
    core: FiniteTree,
    psi: ValueFunctional,
    p_hat: LevelFn,
    q: LevelFn,
    M: int,
) -> StagedTotality:
    """Grow a p_hat-bushy tree whose frontier computes M + 1 output bits.

    Stage s attaches, to every surviving frontier node, a canonical witness
    tree for the set of nodes with s + 1 converged bits; frontier nodes that
    fell out of the core stay behind as dead leaves.
    """
    stem = core.stem
    dead = frozenset(ambient.nodes - core.nodes)
    if isinstance(decide_big(dead, q, stem, ambient), BigWitness):
        raise PreconditionError("the discarded part of the ambient tree is q-big over the stem")
    nodes = set(close_prefixes([stem]))
    frontier = [stem]
    records = []
    for s in range(M + 1):
        next_frontier = []
        attached = []
        for sigma in sorted(frontier, key=node_key):
            if sigma not in core:
                continue
            converged = frozenset(n for n in ambient.cone(sigma) if psi.converges(n, s + 1))
            out = decide_big(converged, p_hat, sigma, ambient)
            if not isinstance(out, BigWitness):
                raise PreconditionError(f"totality hypothesis fails at stage {s} over {sigma}")
            grown = [n for n in out.tree.nodes if is_prefix(sigma, n)]
            nodes.update(grown)
            attached.extend(grown)
            next_frontier.extend(sorted(out.tree.leaves, key=node_key))
        if not next_frontier:
            raise PreconditionError(f"no surviving frontier at stage {s}")
        records.append(StageRecord(s, tuple(sorted(frontier, key=node_key)), tuple(sorted(attached, key=node_key))))
        frontier = next_frontier
    tree = FiniteTree(frozenset(nodes), ambient.bound, ambient.max_depth)
    for node in sorted(frontier, key=node_key):
        if not psi.converges(node, M + 1):
            raise InternalError(f"frontier node {node} lacks {M + 1} bits")
    return StagedTotality(tree, tuple(sorted(frontier, key=node_key)), tuple(records))
