"""Monotone value functionals on tree nodes.

A functional assigns some nodes an output bitstring together with the stage
at which that output became visible.  Outputs extend along branches, and a
node inherits the output of its deepest annotated ancestor, so partiality
and use-bounds fall out naturally.  Restriction to n bits is the prefix of
length n when enough bits exist, and undefined otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from .errors import TreeError
from .trees import Node, is_prefix, node_key


@dataclass(frozen=True)
class ValueFunctional:
    entries: tuple = ()  # tuple[tuple[Node, str, int], ...]

    def __post_init__(self):
        canon = []
        for node, bits, stage in self.entries:
            node = tuple(node)
            if any(c not in "01" for c in bits):
                raise TreeError(f"output at {node} is not a bitstring: {bits!r}")
            if stage < 0:
                raise TreeError(f"negative stage at {node}")
            canon.append((node, bits, int(stage)))
        canon.sort(key=lambda e: node_key(e[0]))
        object.__setattr__(self, "entries", tuple(canon))
        table = {}
        for node, bits, stage in canon:
            if node in table:
                raise TreeError(f"duplicate entry at {node}")
            table[node] = (bits, stage)
        for node, (bits, stage) in table.items():
            anc = self._deepest_entry_ancestor(table, node)
            if anc is None:
                continue
            abits, astage = table[anc]
            if not bits.startswith(abits):
                raise TreeError(f"output at {node} does not extend its ancestor {anc}")
            if len(bits) > len(abits) and stage < astage:
                raise TreeError(f"longer output at {node} appears before its ancestor's stage")

    @staticmethod
    def _deepest_entry_ancestor(table: dict, node: Node):
        for i in range(len(node) - 1, -1, -1):
            if node[:i] in table:
                return node[:i]
        return None

    @cached_property
    def _table(self) -> dict:
        return {node: (bits, stage) for node, bits, stage in self.entries}

    def output(self, node: Node, t: int | None = None) -> str:
        """The bits visible at a node, optionally only those of stage <= t."""
        node = tuple(node)
        for i in range(len(node), -1, -1):
            hit = self._table.get(node[:i])
            if hit is not None and (t is None or hit[1] <= t):
                return hit[0]
        return ""

    def restrict(self, node: Node, n: int, t: int | None = None) -> str | None:
        """First n bits of the output, or None when fewer bits converged."""
        out = self.output(node, t)
        return out[:n] if len(out) >= n else None

    def converges(self, node: Node, n: int, t: int | None = None) -> bool:
        return self.restrict(node, n, t) is not None

    @cached_property
    def max_output_len(self) -> int:
        return max((len(bits) for _, bits, _ in self.entries), default=0)

    @cached_property
    def stages(self) -> tuple:
        return tuple(sorted({stage for _, _, stage in self.entries}))


def constant_functional(tree_nodes, bits: str, stage: int = 0) -> ValueFunctional:
    """Every node of the given set shows the same output from one stage on."""
    roots = sorted(tree_nodes, key=node_key)
    if not roots:
        return ValueFunctional(())
    return ValueFunctional(((roots[0], bits, stage),))
