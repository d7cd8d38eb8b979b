"""Finite trees over the natural numbers, level functions, and cylinder sets.

Nodes are tuples of naturals; the empty tuple is the root.  A finite tree is
a prefix-closed node set with a per-level alphabet bound.  Bushiness
thresholds and measures are exact rationals throughout; no floats appear
anywhere in this package.

Cylinder sets are finite sets of binary strings, kept in canonical
prefix-free form, with Lebesgue measure computed exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence, Union

from .errors import TreeError

Node = tuple  # tuple[int, ...]; kept un-parametrized for 3.10 friendliness
ROOT: Node = ()

RationalLike = Union[int, str, Fraction, Sequence]


def frac(value: RationalLike) -> Fraction:
    """Coerce ints, strings, (num, den) pairs, and Fractions to Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TreeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, (tuple, list)) and len(value) == 2:
        return Fraction(int(value[0]), int(value[1]))
    raise TreeError(f"cannot interpret {value!r} as an exact rational")


def is_prefix(a: Node, b: Node) -> bool:
    """True when a is an initial segment of b (allowing a == b)."""
    return len(a) <= len(b) and b[: len(a)] == a


def node_key(node: Node) -> tuple:
    """Sort key ordering nodes by level first, then lexicographically."""
    return (len(node), node)


def make_node(entries: Iterable[int]) -> Node:
    node = tuple(int(e) for e in entries)
    if any(e < 0 for e in node):
        raise TreeError(f"node entries must be naturals, got {node}")
    return node


@dataclass(frozen=True)
class LevelFn:
    """An exact rational assigned to each tree level.

    Levels 0..len(values)-1 read from the table; every deeper level takes
    the tail value.  Arithmetic is pointwise so threshold expressions like
    p - q or p * eps stay exact.
    """

    values: tuple = ()
    tail: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(frac(v) for v in self.values))
        object.__setattr__(self, "tail", frac(self.tail))

    @classmethod
    def const(cls, value: RationalLike) -> "LevelFn":
        return cls((), frac(value))

    @classmethod
    def of(cls, values: Iterable[RationalLike], tail: RationalLike | None = None) -> "LevelFn":
        vals = tuple(frac(v) for v in values)
        if tail is None:
            if not vals:
                raise TreeError("LevelFn.of needs at least one value or a tail")
            tail = vals[-1]
        return cls(vals, frac(tail))

    def __call__(self, level: int) -> Fraction:
        if 0 <= level < len(self.values):
            return self.values[level]
        return self.tail

    def ceil_at(self, level: int) -> int:
        return math.ceil(self(level))

    def _combine(self, other, op) -> "LevelFn":
        if not isinstance(other, LevelFn):
            other = LevelFn.const(frac(other))
        width = max(len(self.values), len(other.values))
        vals = tuple(op(self(i), other(i)) for i in range(width))
        return LevelFn(vals, op(self.tail, other.tail))

    def __add__(self, other) -> "LevelFn":
        return self._combine(other, lambda a, b: a + b)

    def __sub__(self, other) -> "LevelFn":
        return self._combine(other, lambda a, b: a - b)

    def __mul__(self, other) -> "LevelFn":
        return self._combine(other, lambda a, b: a * b)

    def scale(self, factor: RationalLike) -> "LevelFn":
        f = frac(factor)
        return LevelFn(tuple(v * f for v in self.values), self.tail * f)

    def dominates(self, other: "LevelFn", lo: int, hi: int) -> bool:
        """True when self(level) > other(level) for every level in [lo, hi]."""
        return all(self(m) > other(m) for m in range(lo, hi + 1))

    def sum_over(self, lo: int, hi: int) -> Fraction:
        return sum((self(m) for m in range(lo, hi + 1)), Fraction(0))


@dataclass(frozen=True)
class TreeViolation:
    kind: str
    node: Node
    detail: str


@dataclass(frozen=True)
class TreeReport:
    ok: bool
    stem: Node | None = None
    leaves: frozenset = frozenset()
    violation: TreeViolation | None = None


def validate_tree(nodes: Iterable[Node], bound: LevelFn, max_depth: int) -> TreeReport:
    """Check prefix closure, alphabet bounds, and depth; report stem and leaves.

    Returns the first violated invariant together with the offending node
    instead of raising, so callers can surface structured diagnostics.
    """
    node_set = frozenset(tuple(n) for n in nodes)
    if not node_set:
        return TreeReport(False, violation=TreeViolation("empty", ROOT, "tree has no nodes"))
    for node in sorted(node_set, key=node_key):
        if len(node) > max_depth:
            return TreeReport(
                False, violation=TreeViolation("depth", node, f"|node| exceeds maxDepth {max_depth}")
            )
        for i, entry in enumerate(node):
            if not isinstance(entry, int) or entry < 0:
                return TreeReport(
                    False, violation=TreeViolation("entry", node, f"entry {entry!r} is not a natural")
                )
            if Fraction(entry) >= bound(i):
                return TreeReport(
                    False,
                    violation=TreeViolation("bound", node, f"entry {entry} not below bound {bound(i)} at level {i}"),
                )
        if node != ROOT and node[:-1] not in node_set:
            return TreeReport(
                False, violation=TreeViolation("prefix", node, "parent missing: tree is not prefix-closed")
            )
    children: dict = {}
    for node in node_set:
        if node != ROOT:
            children.setdefault(node[:-1], []).append(node)
    leaves = frozenset(n for n in node_set if n not in children)
    stem = ROOT
    while len(children.get(stem, ())) == 1:
        stem = children[stem][0]
    return TreeReport(True, stem=stem, leaves=leaves)


@dataclass(frozen=True)
class FiniteTree:
    """A finite prefix-closed tree with exact alphabet bounds.

    The stem is the deepest node comparable with every node of the tree;
    below it the tree is a simple path, and bushiness statements only ever
    quantify over the cone above a given root.
    """

    nodes: frozenset
    bound: LevelFn
    max_depth: int

    def __post_init__(self):
        object.__setattr__(self, "nodes", frozenset(tuple(n) for n in self.nodes))
        report = validate_tree(self.nodes, self.bound, self.max_depth)
        if not report.ok:
            v = report.violation
            raise TreeError(f"invalid tree ({v.kind} at {v.node}): {v.detail}")

    @cached_property
    def _children(self) -> dict:
        table: dict = {node: [] for node in self.nodes}
        for node in self.nodes:
            if node != ROOT:
                table[node[:-1]].append(node)
        return {node: tuple(sorted(kids)) for node, kids in table.items()}

    def children(self, node: Node) -> tuple:
        return self._children.get(tuple(node), ())

    @cached_property
    def leaves(self) -> frozenset:
        return frozenset(n for n in self.nodes if not self._children[n])

    @cached_property
    def stem(self) -> Node:
        stem = ROOT
        while len(self._children.get(stem, ())) == 1:
            stem = self._children[stem][0]
        return stem

    @cached_property
    def levels(self) -> dict:
        table: dict = {}
        for node in sorted(self.nodes, key=node_key):
            table.setdefault(len(node), []).append(node)
        return {lvl: tuple(ns) for lvl, ns in table.items()}

    def level(self, depth: int) -> tuple:
        return self.levels.get(depth, ())

    def level_width(self, depth: int) -> int:
        return len(self.level(depth))

    @cached_property
    def depth(self) -> int:
        return max(len(n) for n in self.nodes)

    def __contains__(self, node) -> bool:
        return tuple(node) in self.nodes

    def cone(self, root: Node) -> tuple:
        """All nodes extending root (including root), level order."""
        root = tuple(root)
        return tuple(n for n in sorted(self.nodes, key=node_key) if is_prefix(root, n))

    def restrict(self, keep: Iterable[Node]) -> "FiniteTree":
        """Subtree on a subset of nodes, closing under prefixes."""
        kept = set()
        for node in keep:
            node = tuple(node)
            for i in range(len(node) + 1):
                kept.add(node[:i])
        return FiniteTree(frozenset(kept), self.bound, self.max_depth)

    def truncate(self, depth: int) -> "FiniteTree":
        return FiniteTree(
            frozenset(n for n in self.nodes if len(n) <= depth), self.bound, self.max_depth
        )


def close_prefixes(nodes: Iterable[Node]) -> frozenset:
    closed = set()
    for node in nodes:
        node = tuple(node)
        for i in range(len(node) + 1):
            closed.add(node[:i])
    return frozenset(closed)


def full_tree(branching, depth: int, stem: Node = ROOT) -> FiniteTree:
    """The complete tree of the given branching above a stem path."""
    if isinstance(branching, int):
        branching = LevelFn.const(branching)
    nodes = set(close_prefixes([tuple(stem)]))
    frontier = [tuple(stem)]
    while frontier:
        node = frontier.pop()
        if len(node) >= depth:
            continue
        width = math.ceil(branching(len(node)))
        for i in range(width):
            child = node + (i,)
            nodes.add(child)
            frontier.append(child)
    bound_vals = [max(branching.ceil_at(i), (stem[i] + 1) if i < len(stem) else 1) for i in range(depth)]
    bound = LevelFn.of([Fraction(v) for v in bound_vals], Fraction(max(bound_vals + [1])))
    return FiniteTree(frozenset(nodes), bound, depth)


# ---------------------------------------------------------------------------
# Cylinder sets over binary strings


def _check_bits(s: str) -> str:
    if not isinstance(s, str) or any(c not in "01" for c in s):
        raise TreeError(f"not a binary string: {s!r}")
    return s


def all_bits(n: int) -> tuple:
    """All binary strings of length n in lexicographic order."""
    if n == 0:
        return ("",)
    return tuple(format(i, f"0{n}b") for i in range(2**n))


@dataclass(frozen=True)
class CylinderSet:
    """A finite union of basic clopen sets of Cantor space.

    Stored in canonical prefix-free form: any string extending another
    member is absorbed on construction.  The empty string denotes the whole
    space.
    """

    strings: frozenset = frozenset()

    def __post_init__(self):
        members = {_check_bits(s) for s in self.strings}
        # a string survives iff no proper prefix of it is also a member
        canonical = [
            s for s in members if not any(s[:i] in members for i in range(len(s)))
        ]
        object.__setattr__(self, "strings", frozenset(canonical))

    @classmethod
    def of(cls, strings: Iterable[str]) -> "CylinderSet":
        return cls(frozenset(strings))

    @classmethod
    def whole(cls) -> "CylinderSet":
        return cls(frozenset([""]))

    def __bool__(self) -> bool:
        return bool(self.strings)

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.strings, key=lambda s: (len(s), s)))

    @cached_property
    def measure(self) -> Fraction:
        return sum((Fraction(1, 2 ** len(s)) for s in self.strings), Fraction(0))

    def covers(self, x: str) -> bool:
        """True when [x] lies inside the union, i.e. some member prefixes x."""
        return any(x.startswith(s) for s in self.strings)

    def meets(self, x: str) -> bool:
        """True when [x] intersects the union."""
        return any(x.startswith(s) or s.startswith(x) for s in self.strings)

    def measure_within(self, rho: str) -> Fraction:
        """Exact measure of the intersection with the cylinder [rho]."""
        _check_bits(rho)
        total = Fraction(0)
        for s in self.strings:
            if s.startswith(rho) or rho.startswith(s):
                total += Fraction(1, 2 ** max(len(s), len(rho)))
        return total

    def union(self, other: "CylinderSet") -> "CylinderSet":
        return CylinderSet(self.strings | other.strings)

    def extensions(self, n: int) -> frozenset:
        """The union's trace on 2^n: all length-n strings it covers."""
        out = set()
        for s in self.strings:
            if len(s) <= n:
                for suffix in all_bits(n - len(s)):
                    out.add(s + suffix)
        return frozenset(out)

    def complement_in(self, n: int) -> "CylinderSet":
        covered = self.extensions(n)
        return CylinderSet(frozenset(b for b in all_bits(n) if b not in covered))


def measure(V: CylinderSet | Iterable[str]) -> Fraction:
    if not isinstance(V, CylinderSet):
        V = CylinderSet.of(V)
    return V.measure


def cond_measure(V: CylinderSet | Iterable[str], rho: str) -> Fraction:
    """Measure of [V] relative to the cylinder [rho]."""
    if not isinstance(V, CylinderSet):
        V = CylinderSet.of(V)
    return V.measure_within(rho) * (2 ** len(rho))


@dataclass(frozen=True)
class SchnorrTest:
    """A finite test: components V_0..V_k with m(V_n) bounded by 2^-n."""

    components: tuple = ()

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, CylinderSet) else CylinderSet.of(c) for c in self.components
        )
        object.__setattr__(self, "components", comps)
        for n, comp in enumerate(comps):
            if comp.measure > Fraction(1, 2**n):
                raise TreeError(
                    f"test component {n} has measure {comp.measure}, exceeding 2^-{n}"
                )

    def __len__(self) -> int:
        return len(self.components)

    def __getitem__(self, n: int) -> CylinderSet:
        return self.components[n]
