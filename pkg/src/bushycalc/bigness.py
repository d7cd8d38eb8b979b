"""Deciding bigness of node sets over a root inside an explicit ambient tree.

A target set S is big over a root at threshold p when some finite subtree of
the ambient cone, rooted there, gives every non-leaf at least p(level) many
children and lands every leaf inside S.  Thresholds are exact rationals; an
integer child count meets a threshold exactly when count >= threshold, and a
node outside S additionally needs at least one qualifying child, so a zero
or negative threshold never makes outsiders big for free.

Positive answers come back as a BigWitness (a checkable subtree); negative
answers as a SmallTable (a labeling whose local consistency plus a small
root refutes any witness: the true big-set is the least fixed point of the
labeling rule, hence contained in any consistent labeling).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import InternalError, PreconditionError, VerificationError
from .trees import FiniteTree, LevelFn, Node, close_prefixes, is_prefix, node_key


def meets_threshold(count: int, threshold: Fraction) -> bool:
    """Integer count against rational threshold, plus the at-least-one rule."""
    return count >= 1 and Fraction(count) >= threshold


def required_children(threshold: Fraction) -> int:
    return max(math.ceil(threshold), 1)


@dataclass(frozen=True)
class BigWitness:
    """A bushy subtree whose leaves all sit in the target set."""

    root: Node
    tree: FiniteTree
    p: LevelFn
    targets: frozenset

    def __post_init__(self):
        object.__setattr__(self, "root", tuple(self.root))
        object.__setattr__(self, "targets", frozenset(tuple(t) for t in self.targets))


@dataclass(frozen=True)
class SmallTable:
    """Big/small labels over an ambient cone, refuting bigness at the root.

    labels maps every cone node to True (big) or False (small).
    """

    root: Node
    p: LevelFn
    labels: tuple  # tuple[tuple[Node, bool], ...] sorted by node

    def __post_init__(self):
        object.__setattr__(self, "root", tuple(self.root))
        object.__setattr__(
            self,
            "labels",
            tuple(sorted(((tuple(n), bool(b)) for n, b in self.labels), key=lambda e: node_key(e[0]))),
        )

    def label_map(self) -> dict:
        return dict(self.labels)


def _big_labels(targets: frozenset, p: LevelFn, root: Node, ambient: FiniteTree) -> dict:
    """Bottom-up big/small labels for every node of the ambient cone above root."""
    cone = ambient.cone(root)
    labels: dict = {}
    for node in sorted(cone, key=node_key, reverse=True):
        if node in targets:
            labels[node] = True
            continue
        count = sum(1 for c in ambient.children(node) if labels.get(c, False))
        labels[node] = meets_threshold(count, p(len(node)))
    return labels


def _build_witness(
    targets: frozenset, p: LevelFn, root: Node, ambient: FiniteTree, labels: dict
) -> BigWitness:
    """Canonical witness: stop at the first target on each branch, take the
    lexicographically least big children, exactly as many as required."""
    nodes = set()
    stack = [root]
    while stack:
        node = stack.pop()
        nodes.add(node)
        if node in targets:
            continue
        need = required_children(p(len(node)))
        big_kids = [c for c in ambient.children(node) if labels[c]]
        if len(big_kids) < need:
            raise InternalError(f"witness construction lost children at {node}")
        stack.extend(big_kids[:need])
    tree = FiniteTree(close_prefixes(nodes), ambient.bound, ambient.max_depth)
    return BigWitness(root=root, tree=tree, p=p, targets=targets)


def decide_big(
    S: Iterable[Node], p: LevelFn, root: Node, ambient: FiniteTree
) -> BigWitness | SmallTable:
    """Decide whether S is p-big over root inside the ambient tree."""
    root = tuple(root)
    if root not in ambient:
        raise PreconditionError(f"root {root} is not an ambient node")
    targets = frozenset(tuple(s) for s in S) & ambient.nodes
    labels = _big_labels(targets, p, root, ambient)
    if labels[root]:
        return _build_witness(targets, p, root, ambient, labels)
    return SmallTable(root=root, p=p, labels=tuple(labels.items()))


def is_big(S: Iterable[Node], p: LevelFn, root: Node, ambient: FiniteTree) -> bool:
    return isinstance(decide_big(S, p, root, ambient), BigWitness)


def verify_big_witness(
    witness: BigWitness, S: Iterable[Node], p: LevelFn, root: Node, ambient: FiniteTree
) -> None:
    """Re-check a witness from scratch; raises VerificationError on failure."""
    root = tuple(root)
    targets = frozenset(tuple(s) for s in S)
    if witness.root != root:
        raise VerificationError(f"witness root {witness.root} differs from {root}")
    tree = witness.tree
    if root not in tree:
        raise VerificationError("witness tree does not contain its root")
    for node in tree.nodes:
        if node not in ambient:
            raise VerificationError(f"witness node {node} is outside the ambient tree")
        if not (is_prefix(node, root) or is_prefix(root, node)):
            raise VerificationError(f"witness node {node} is not comparable with the root")
    for node in tree.nodes:
        kids = tree.children(node)
        if kids:
            if is_prefix(root, node) and Fraction(len(kids)) < p(len(node)):
                raise VerificationError(
                    f"non-leaf {node} has {len(kids)} children, below threshold {p(len(node))}"
                )
        else:
            if node not in targets:
                raise VerificationError(f"leaf {node} is not in the target set")


def verify_small_table(
    table: SmallTable, S: Iterable[Node], p: LevelFn, root: Node, ambient: FiniteTree
) -> None:
    """Check local consistency of the labeling and that the root is small."""
    root = tuple(root)
    targets = frozenset(tuple(s) for s in S)
    labels = table.label_map()
    cone = ambient.cone(root)
    if table.root != root:
        raise VerificationError("table root mismatch")
    if frozenset(labels) != frozenset(cone):
        raise VerificationError("table domain differs from the ambient cone")
    for node in cone:
        count = sum(1 for c in ambient.children(node) if labels[c])
        expected = (node in targets) or meets_threshold(count, p(len(node)))
        if labels[node] != expected:
            raise VerificationError(f"label at {node} is not locally consistent")
    if labels[root]:
        raise VerificationError("root is labeled big; table refutes nothing")


@dataclass(frozen=True)
class SplitResult:
    side: str  # "left" or "right"
    witness: BigWitness


def split_big(
    B: Iterable[Node],
    C: Iterable[Node],
    p: LevelFn,
    q: LevelFn,
    root: Node,
    witness: BigWitness,
) -> SplitResult:
    """Split a (p+q)-big union: B is p-big or C is q-big over the root.

    Works inside the witness tree itself: mark the nodes over which B is
    already p-big; if the root is marked we answer left, otherwise the
    unmarked part reachable from the root is a q-bushy tree whose leaves
    land in C.  Left wins ties.  The returned side's certificate is re-run
    through the independent checker before being handed back.
    """
    root = tuple(root)
    B = frozenset(tuple(b) for b in B)
    C = frozenset(tuple(c) for c in C)
    verify_big_witness(witness, B | C, p + q, root, witness.tree)
    T = witness.tree
    labels = _big_labels(B & T.nodes, p, root, T)
    if labels[root]:
        out = decide_big(B, p, root, T)
        if not isinstance(out, BigWitness):
            raise InternalError("marked root lost bigness on re-decision")
        verify_big_witness(out, B, p, root, T)
        return SplitResult("left", out)
    # Grow the unmarked component above the root; the splitting argument
    # guarantees it is q-bushy with leaves in C.
    keep = set()
    stack = [root]
    while stack:
        node = stack.pop()
        keep.add(node)
        stack.extend(c for c in T.children(node) if not labels[c])
    remainder = FiniteTree(close_prefixes(keep), T.bound, T.max_depth)
    out = decide_big(C, q, root, remainder)
    if not isinstance(out, BigWitness):
        raise InternalError("splitting failed to certify the right side")
    verify_big_witness(out, C, q, root, remainder)
    return SplitResult("right", out)


def markov_select(
    items: Sequence, f: Mapping, lam: Fraction, lam_hat: Fraction
) -> list:
    """Keep the items whose f-value is below lam_hat.

    Requires the average of f over items to be below lam; the kept fraction
    then exceeds 1 - lam/lam_hat, which is re-checked here exactly.
    """
    items = list(items)
    if not items:
        raise PreconditionError("markov_select needs a nonempty ground set")
    values = [f[x] for x in items]
    if any(v < 0 for v in values):
        raise PreconditionError("markov_select needs nonnegative values")
    mean = sum(values, Fraction(0)) / len(items)
    if mean >= lam:
        raise PreconditionError(f"average {mean} is not below the bound {lam}")
    if lam_hat <= 0:
        raise PreconditionError("selection threshold must be positive")
    selected = [x for x in items if f[x] < lam_hat]
    if Fraction(len(selected), len(items)) <= 1 - lam / lam_hat:
        raise InternalError("selection ratio fell below the guaranteed bound")
    return selected
