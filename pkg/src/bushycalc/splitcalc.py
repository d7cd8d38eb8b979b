"""Measure-like classes of output sets, and the splitting machinery over them.

For a functional on an ambient tree, a set V of length-n strings is "easily
forced into" (tilde membership) when the nodes computing n bits outside V
form a small set over the stem, and "bigly landed in" (plain membership)
when some big set of nodes computes into V.  The two classes are dual
through complementation, support an exact calculus (intersections, unions
and differences move the smallness budgets additively), and drive three
constructions:

* capture: confine a total functional's outputs to a set of measure below a
  given budget on a bushy subtree, using a dense hash family to align the
  low-level traces of the candidate preimages;
* j-fold splitting: either route j functionals into mutually disjoint
  cylinder families, or certify a subtree forcing one of them non-total or
  computable;
* the frontier step: apply the splitting recursion at every node of a
  frontier inside a validated condition.

Negative answers are certificates, not errors; "inconclusive" is a distinct
outcome that is never silently mapped to a certificate.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .bigness import (
    BigWitness,
    SmallTable,
    decide_big,
    meets_threshold,
    verify_big_witness,
    verify_small_table,
)
from .errors import GenerationError, InternalError, PreconditionError, VerificationError
from .functionals import ValueFunctional
from .hashfam import generate_hash_family
from .seeding import derive_seed
from .thinning import avoid_prune, force_divergence
from .trees import (
    CylinderSet,
    FiniteTree,
    LevelFn,
    Node,
    close_prefixes,
    frac,
    is_prefix,
    node_key,
)

MAX_PARTITION_ITEMS = 14
MAX_WIDTH_BITS = 6  # deepest output length the splitting scan examines


# ---------------------------------------------------------------------------
# Membership certificates for the two measure-like classes


@dataclass(frozen=True)
class VCert:
    """Verdict on one membership question, with bigness evidence.

    kind "tilde": member means the nodes escaping V form a q-small set over
    the stem (evidence SmallTable); a refusal carries the BigWitness of the
    escape set.  kind "plain": member means some q-big set of nodes computes
    into V (evidence BigWitness); a refusal carries the SmallTable.
    """

    kind: str
    member: bool
    V: CylinderSet
    n: int
    q: LevelFn
    evidence: SmallTable | BigWitness


def length_n_set(V, n: int) -> CylinderSet:
    if not isinstance(V, CylinderSet):
        V = CylinderSet.of(V)
    if any(len(s) != n for s in V.strings):
        raise PreconditionError(f"expected a subset of the length-{n} strings, got {V}")
    return V


def preimage(psi: ValueFunctional, ambient: FiniteTree, n: int, V: CylinderSet) -> frozenset:
    """Nodes computing n bits that land inside V."""
    return frozenset(
        node
        for node in ambient.nodes
        if (bits := psi.restrict(node, n)) is not None and V.covers(bits)
    )


def in_tilde_V(
    psi: ValueFunctional,
    ambient: FiniteTree,
    eta: Node,
    n: int,
    q: LevelFn,
    V,
) -> VCert:
    """Is the set of nodes computing n bits outside V q-small over eta?"""
    V = length_n_set(V, n)
    escape = preimage(psi, ambient, n, V.complement_in(n))
    verdict = decide_big(escape, q, eta, ambient)
    member = isinstance(verdict, SmallTable)
    return VCert("tilde", member, V, n, q, verdict)


def in_V(
    psi: ValueFunctional,
    ambient: FiniteTree,
    eta: Node,
    n: int,
    q: LevelFn,
    V,
) -> VCert:
    """Does some q-big over eta set of nodes compute into V?

    Decided through the duality with the tilde class: V is bigly landed in
    exactly when its complement is not easily forced into.
    """
    V = length_n_set(V, n)
    dual = in_tilde_V(psi, ambient, eta, n, q, V.complement_in(n))
    return VCert("plain", not dual.member, V, n, q, dual.evidence)


# ---------------------------------------------------------------------------
# The calculus over the two classes


@dataclass(frozen=True)
class CalcInstance:
    """One fully explicit evaluation instance for a calculus item."""

    psi: ValueFunctional
    ambient: FiniteTree
    eta: Node
    n: int
    V: CylinderSet
    V2: CylinderSet
    q: LevelFn
    q2: LevelFn


@dataclass(frozen=True)
class CalcOutcome:
    item: int
    holds: bool
    hypothesis: tuple  # tuple[VCert, ...]
    conclusion: tuple  # tuple[VCert, ...]


def _strings(V: CylinderSet, n: int) -> frozenset:
    return frozenset(length_n_set(V, n).strings)


def calculus_check(item: int, inst: CalcInstance) -> CalcOutcome:
    """Evaluate one calculus item on certified hypotheses.

    Items: 1 duality (exclusive-or of the two memberships on complementary
    sets); 2 tilde meets under budget addition; 3 tilde cuts a plain witness
    down to the budget difference; 4 removing a non-landed set keeps tilde
    membership; 5 removing a non-tilde set leaves a plain member; 6 unions
    of non-landed sets stay non-landed.  A False outcome is a counterexample
    to exact combinatorics and indicates an implementation bug.
    """
    psi, T, eta, n = inst.psi, inst.ambient, inst.eta, inst.n
    A, B = _strings(inst.V, n), _strings(inst.V2, n)
    q, q2 = inst.q, inst.q2
    if item in (3, 5) and any(
        (q2 - q)(lvl) < 0 for lvl in range(len(eta), T.depth + 1)
    ):
        # the subtraction items cut a q2 witness by a q-small set, so the
        # budget difference must stay a meaningful threshold
        raise PreconditionError(f"item {item} needs q2 to dominate q over the cone")

    def tilde(V, qq):
        return in_tilde_V(psi, T, eta, n, qq, CylinderSet.of(V))

    def plain(V, qq):
        return in_V(psi, T, eta, n, qq, CylinderSet.of(V))

    if item == 1:
        a = plain(A, q)
        b = tilde(frozenset(inst.V.complement_in(n).strings), q)
        return CalcOutcome(1, a.member != b.member, (), (a, b))

    if item == 2:
        hyp = (tilde(A, q), tilde(B, q2))
        wanted = (True, True)
        concl = tilde(A & B, q + q2)
    elif item == 3:
        hyp = (tilde(A, q), plain(B, q2))
        wanted = (True, True)
        concl = plain(A & B, q2 - q)
    elif item == 4:
        hyp = (tilde(A, q), plain(B, q2))
        wanted = (True, False)
        concl = tilde(A - B, q + q2)
    elif item == 5:
        hyp = (tilde(A, q), tilde(B, q2))
        wanted = (True, False)
        concl = plain(A - B, q2 - q)
    elif item == 6:
        hyp = (plain(A, q), plain(B, q2))
        wanted = (False, False)
        concl = plain(A | B, q + q2)
    else:
        raise PreconditionError(f"no calculus item {item}")

    if tuple(c.member for c in hyp) != wanted:
        raise PreconditionError(f"hypotheses of item {item} are not certified")
    holds = concl.member if item != 6 else not concl.member
    return CalcOutcome(item, holds, hyp, (concl,))


# ---------------------------------------------------------------------------
# Exhaustive measure partitioning


@dataclass(frozen=True)
class Partition:
    parts: tuple  # tuple[frozenset, ...] indexed like the input measures
    achieved: Fraction


def partition_by_measures(measures) -> Partition:
    """Split the common support into one piece per measure, maximizing the
    smallest own-measure share.  Exhaustive search with pruning; exact."""
    measures = [dict(m) for m in measures]
    if not measures:
        raise PreconditionError("need at least one measure")
    support = sorted(measures[0])
    if any(sorted(m) != support for m in measures):
        raise PreconditionError("measures must share one support")
    if len(support) > MAX_PARTITION_ITEMS:
        raise PreconditionError(f"support exceeds the exhaustive cap {MAX_PARTITION_ITEMS}")
    for m in measures:
        total = sum((frac(v) for v in m.values()), Fraction(0))
        if total != 1 or any(frac(v) < 0 for v in m.values()):
            raise PreconditionError("each measure must be a probability vector on the support")
    j = len(measures)
    # heavy items first so the bound bites early
    items = sorted(support, key=lambda x: (-max(frac(m[x]) for m in measures), repr(x)))
    weights = [[frac(m[x]) for x in items] for m in measures]
    suffix = [[Fraction(0)] * (len(items) + 1) for _ in range(j)]
    for i in range(j):
        for pos in range(len(items) - 1, -1, -1):
            suffix[i][pos] = suffix[i][pos + 1] + weights[i][pos]
    # measures with identical weight rows: interchangeable while still empty
    twin = [next(a for a in range(j) if weights[a] == weights[i]) for i in range(j)]

    best = [Fraction(-1), None]
    assign = [0] * len(items)
    current = [Fraction(0)] * j
    used = [0] * j

    def walk(pos: int) -> None:
        if pos == len(items):
            low = min(current)
            if low > best[0]:
                best[0], best[1] = low, tuple(assign)
            return
        if min(current[i] + suffix[i][pos] for i in range(j)) <= best[0]:
            return
        seen_empty_twin = set()
        for part in range(j):
            if not used[part]:
                if twin[part] in seen_empty_twin:
                    continue
                seen_empty_twin.add(twin[part])
            assign[pos] = part
            current[part] += weights[part][pos]
            used[part] += 1
            walk(pos + 1)
            used[part] -= 1
            current[part] -= weights[part][pos]
        assign[pos] = 0

    walk(0)
    chosen = best[1]
    parts = [set() for _ in range(j)]
    for pos, part in enumerate(chosen):
        parts[part].add(items[pos])
    return Partition(tuple(frozenset(p) for p in parts), best[0])


# ---------------------------------------------------------------------------
# Capturing a total functional inside a small-measure set


@dataclass(frozen=True)
class CaptureResult:
    v_star: CylinderSet
    tree: FiniteTree
    ground_bits: int
    k: int
    level: int | None  # alignment level; None when the direct branch fired
    direct: bool
    family_size: int
    stem: Node


def least_power_index(lam: Fraction) -> int:
    """Least k with (1 - lam)^k < lam."""
    lam = frac(lam)
    if not 0 < lam < 1:
        raise PreconditionError(f"budget must be in (0, 1), got {lam}")
    k, power = 1, 1 - lam
    while power >= lam:
        k += 1
        power *= 1 - lam
    return k


def _capture_bands(p: LevelFn, q: LevelFn, p_hat: LevelFn, k: int, level: int, depth: int) -> LevelFn:
    """Bushiness thresholds for the aligned capture tree: p - p_hat - q below
    the alignment level, p - 4k p_hat from it on.  Both dominate p_hat under
    the capture preconditions."""
    low = p - p_hat - q
    high = p - p_hat.scale(4 * k)
    return LevelFn(
        tuple(low(n) if n < level else high(n) for n in range(depth)), high(depth)
    )


def _verify_capture(
    result: CaptureResult,
    psi: ValueFunctional,
    rho: Node,
    lam: Fraction,
    p: LevelFn,
    q: LevelFn,
    p_hat: LevelFn,
    depth: int,
) -> None:
    if not result.v_star.measure < lam:
        raise InternalError(f"captured set has measure {result.v_star.measure} >= {lam}")
    if result.direct:
        need = p_hat
    else:
        need = _capture_bands(p, q, p_hat, result.k, result.level, depth)
    tree = result.tree
    for node in tree.cone(rho):
        kids = tree.children(node)
        if kids:
            if not meets_threshold(len(kids), need(len(node))):
                raise InternalError(f"capture tree is too thin at {node}")
            continue
        if len(node) != depth:
            raise InternalError(f"capture tree has a dead end at {node}")
        bits = psi.restrict(node, result.ground_bits)
        if bits is None or not result.v_star.covers(bits):
            raise InternalError(f"leaf {node} does not compute into the captured set")


def capture_small_measure(
    ambient: FiniteTree,
    core: FiniteTree,
    psi: ValueFunctional,
    rho: Node,
    lam,
    p: LevelFn,
    q: LevelFn,
    p_hat: LevelFn,
    seed: int = 0,
    max_bits: int = 16,
) -> CaptureResult:
    """Confine the functional's outputs to a set of measure below lam.

    Tries candidate small sets directly (the attained-image set, then its
    singletons, then complements of sampled dense sets); otherwise takes k
    dense sets from a hash family whose deep preimages share one trace below
    the alignment level, and intersects them.  Every returned triple is
    re-verified: measure strictly below lam, returned tree bushy at p_hat
    over rho, all leaves computing into the captured set.
    """
    rho = tuple(rho)
    lam = frac(lam)
    if rho not in core or rho not in ambient:
        raise PreconditionError("rho must lie in the core tree")
    depth = ambient.depth
    for n in range(len(rho), depth):
        if not 6 * q(n) < 3 * p_hat(n) < p(n):
            raise PreconditionError(f"need 6q < 3p_hat < p at level {n}")
    k = least_power_index(lam)

    dead = decide_big(ambient.nodes - core.nodes, q, rho, ambient)
    if isinstance(dead, BigWitness):
        raise PreconditionError("the non-extendable part of the ambient tree is big over rho")
    base = [
        node
        for node in ambient.level(depth)
        if is_prefix(rho, node) and node in core
    ]
    if not base:
        raise PreconditionError("no deep nodes above rho")
    bits_avail = min(len(psi.output(node)) for node in base)
    if bits_avail < 1:
        raise PreconditionError("functional is not total to any depth on the deep nodes")
    full = decide_big(base, p - q, rho, ambient)
    if isinstance(full, SmallTable):
        raise PreconditionError("deep converging nodes are not (p - q)-big over rho")

    def attempt(V: CylinderSet, ground: int, level, size) -> CaptureResult | None:
        if not V.measure < lam:
            return None
        hit = decide_big(
            frozenset(t for t in base if V.covers(psi.restrict(t, ground))),
            p_hat,
            rho,
            ambient,
        )
        if isinstance(hit, SmallTable):
            return None
        result = CaptureResult(V, hit.tree, ground, k, level, True, size, rho)
        _verify_capture(result, psi, rho, lam, p, q, p_hat, depth)
        return result

    images = sorted({psi.restrict(node, bits_avail) for node in base})
    direct = attempt(CylinderSet.of(images), bits_avail, None, 0)
    if direct is None:
        for x in images:
            direct = attempt(CylinderSet.of([x]), bits_avail, None, 0)
            if direct is not None:
                break
    if direct is not None:
        return direct

    level = next(
        (
            l
            for l in range(len(rho) + 1, depth)
            if all(5 * k * p_hat(n) < p(n) for n in range(l, depth))
        ),
        None,
    )
    if level is None:
        raise PreconditionError("no level grants the k-fold bushiness margin 5k*p_hat < p")
    band = [s for s in ambient.cone(rho) if len(s) <= level]

    bands = _capture_bands(p, q, p_hat, k, level, depth)
    shapes_seen = 1
    rounds = 0
    while True:
        M = k * shapes_seen + 1
        if M > 64 or rounds >= 16:
            raise GenerationError(
                "pigeonhole frontier too large",
                stats={
                    "family_size": M, "shapes": shapes_seen,
                    "band": len(band), "rounds": rounds,
                },
            )
        family = generate_hash_family(
            1 - lam, lam, k, M - 1, derive_seed(seed, "capture", rounds),
            max_bits=min(max_bits, bits_avail),
        )
        rounds += 1
        N = family.ground_bits
        groups: dict = {}
        landed = []
        for j_idx, V in enumerate(family.sets):
            escape = frozenset(t for t in base if not V.covers(psi.restrict(t, N)))
            verdict = decide_big(escape, p_hat, rho, ambient)
            if isinstance(verdict, BigWitness):
                # a sampled dense set is escaped bigly: its complement is the
                # small capture, directly
                result = CaptureResult(
                    V.complement_in(N), verdict.tree, N, k, level, True, len(family.sets), rho
                )
                _verify_capture(result, psi, rho, lam, p, q, p_hat, depth)
                return result
            inside = frozenset(t for t in base if t not in escape)
            shape = frozenset(s for s in band if any(is_prefix(s, t) for t in inside))
            groups.setdefault(shape, []).append(j_idx)
            landed.append(inside)
        winner = next(
            (idxs for idxs in sorted(groups.values(), key=lambda g: g[0]) if len(idxs) >= k),
            None,
        )
        if winner is not None:
            picked = winner[:k]
            joint = frozenset.intersection(*(landed[j_idx] for j_idx in picked))
            aligned = decide_big(joint, bands, rho, ambient) if joint else None
            if isinstance(aligned, BigWitness):
                v_star = CylinderSet.of(
                    frozenset.intersection(*(family.sets[j_idx].strings for j_idx in picked))
                )
                result = CaptureResult(
                    v_star, aligned.tree, N, k, level, False, len(family.sets), rho
                )
                _verify_capture(result, psi, rho, lam, p, q, p_hat, depth)
                return result
        shapes_seen = max(shapes_seen + 1, len(groups))


# ---------------------------------------------------------------------------
# j-fold splitting


@dataclass(frozen=True)
class JSplitInstance:
    """One functional routed through the splitting recursion."""

    psi: ValueFunctional
    ambient: FiniteTree
    core: FiniteTree
    eta: Node

    def __post_init__(self):
        object.__setattr__(self, "eta", tuple(self.eta))


@dataclass(frozen=True)
class Assignment:
    index: int
    V: CylinderSet
    n: int
    witness: BigWitness


@dataclass(frozen=True)
class DisjointCert:
    """Mutually disjoint cylinder families, one q-landed set per instance."""

    assignments: tuple  # tuple[Assignment, ...] ascending by index


@dataclass(frozen=True)
class NonTotalCert:
    """A pruned tree and a big node set jointly forcing non-totality.

    Every path through the tree and a member of s_nodes computes fewer than
    n_hat output bits: the member escaped the width-u tree below n_hat, the
    pruned tree forces n_hat-bit outputs back inside it.
    """

    index: int
    s_nodes: frozenset
    s_witness: BigWitness
    tree: FiniteTree
    small_tables: tuple
    n_hat: int
    w_levels: tuple  # ((n, frozenset[str]), ...) ascending by n
    q_prime: LevelFn


@dataclass(frozen=True)
class ComputableCert:
    """A pruned tree confining all outputs to a fixed width-u level tree."""

    index: int
    tree: FiniteTree
    small_tables: tuple
    u: int
    n_bar: int
    w_levels: tuple
    q_prime: LevelFn


@dataclass(frozen=True)
class Inconclusive:
    reason: str


def _comparable_part(tree: FiniteTree, eta: Node) -> FiniteTree:
    nodes = frozenset(
        s for s in tree.nodes if is_prefix(s, eta) or is_prefix(eta, s)
    )
    return FiniteTree(nodes, tree.bound, tree.max_depth)


class _Splitter:
    """State shared across the splitting recursion: the instance list, the
    output horizon and a cache of singleton landings."""

    def __init__(self, instances, p, q, q_prime, q_dprime, q_i, v_star, n_star):
        self.instances = list(instances)
        self.p, self.q, self.qpp, self.q_i = p, q, q_dprime, q_i
        self.n_star = n_star
        self.v_star = v_star
        self.j = len(self.instances)
        self.n_cap = min(
            MAX_WIDTH_BITS, min(inst.psi.max_output_len for inst in self.instances)
        )
        self._single: dict = {}

    def validate(self, q_prime) -> None:
        if self.j < 1:
            raise PreconditionError("need at least one instance")
        if self.n_star > self.n_cap:
            raise PreconditionError(
                f"starting cylinder depth {self.n_star} exceeds the output horizon {self.n_cap}"
            )
        budget = self.q.scale(2 * self.j) + q_prime + self.qpp
        for pos, inst in enumerate(self.instances):
            if inst.eta not in inst.ambient or inst.eta not in inst.core:
                raise PreconditionError(f"instance {pos}: eta is not a shared node")
            if not inst.core.nodes <= inst.ambient.nodes:
                raise PreconditionError(f"instance {pos}: core leaves the ambient tree")
            slack = self.p - budget - self.q_i
            for level in range(len(inst.eta), inst.ambient.depth):
                if slack(level) <= 0:
                    raise PreconditionError(
                        f"instance {pos}: p does not dominate 2jq + q' + q'' + q_i at level {level}"
                    )
            cert = in_tilde_V(
                inst.psi, inst.ambient, inst.eta, self.n_star, q_prime, self.v_star
            )
            if not cert.member:
                raise PreconditionError(
                    f"instance {pos}: the starting cylinder set is not easily forced"
                )
            empty = CylinderSet.of([])
            for n in range(1, self.n_cap + 1):
                cert = in_tilde_V(
                    inst.psi, inst.ambient, inst.eta, n, q_prime + self.q.scale(2 * self.j), empty
                )
                if cert.member:
                    raise PreconditionError(
                        f"instance {pos}: too few nodes compute {n} output bits"
                    )

    def landed(self, pos: int, x: str) -> VCert:
        """Singleton landing {x} at budget q, cached per instance."""
        key = (pos, x)
        if key not in self._single:
            inst = self.instances[pos]
            self._single[key] = in_V(
                inst.psi, inst.ambient, inst.eta, len(x), self.q, CylinderSet.of([x])
            )
        return self._single[key]

    def tilde(self, pos: int, n: int, qq: LevelFn, strings) -> VCert:
        inst = self.instances[pos]
        return in_tilde_V(inst.psi, inst.ambient, inst.eta, n, qq, CylinderSet.of(strings))

    def route(self, active, v_cur: CylinderSet, n_cur: int, q_cur: LevelFn):
        """One recursion level; returns a list of Assignments or a certificate."""
        if not v_cur.strings:
            raise InternalError("the running cylinder set emptied out")
        if len(active) == 1:
            pos = active[0]
            inst = self.instances[pos]
            final = in_V(inst.psi, inst.ambient, inst.eta, n_cur, self.q, v_cur)
            if not final.member:
                raise InternalError(
                    f"instance {pos}: the surviving cylinder set is not q-landed"
                )
            return [Assignment(pos, v_cur, n_cur, final.evidence)]

        levels = range(n_cur + 1, self.n_cap + 1)
        if len(levels) < 2:
            return Inconclusive(
                f"fewer than two output levels between depth {n_cur} and the horizon {self.n_cap}"
            )
        ext = {n: sorted(v_cur.extensions(n)) for n in levels}
        W = {
            (pos, n): frozenset(x for x in ext[n] if self.landed(pos, x).member)
            for pos in active
            for n in levels
        }
        for pos in active:
            for n in levels:
                prev = W[pos, n - 1] if n - 1 in levels else v_cur.strings
                for x in W[pos, n]:
                    if x[: n - 1] not in prev:
                        raise InternalError(
                            f"instance {pos}: landed strings at {n} do not extend level {n - 1}"
                        )

        # Case 1: at some level, escaping the landed singletons is not easy
        # for one of the functionals.
        for n in levels:
            union_n = frozenset().union(*(W[pos, n] for pos in active))
            certs = {pos: self.tilde(pos, n, self.q + q_cur, union_n) for pos in active}
            if all(c.member for c in certs.values()):
                continue
            start = frozenset(ext[n]) - union_n

            def first_landing(strings):
                for pos in active:
                    inst = self.instances[pos]
                    cert = in_V(
                        inst.psi, inst.ambient, inst.eta, n, self.q, CylinderSet.of(strings)
                    )
                    if cert.member:
                        return pos, cert
                return None

            hit = first_landing(start)
            if hit is None:
                raise InternalError(
                    f"level {n}: the un-landed remainder should be q-landed for some instance"
                )
            v_hat = set(start)
            for x in sorted(start):
                if first_landing(v_hat - {x}) is not None:
                    v_hat.discard(x)
            landing = first_landing(v_hat)
            if landing is None:
                raise InternalError("greedy deletion lost the landing it preserved")
            pos_hat, cert_hat = landing
            v_next = CylinderSet.of(frozenset(ext[n]) - v_hat)
            q_next = q_cur + self.q.scale(2)
            for pos in active:
                if not self.tilde(pos, n, q_next, v_next.strings).member:
                    raise InternalError(
                        f"instance {pos}: removing the minimal landed set broke easy forcing"
                    )
            rest = self.route([a for a in active if a != pos_hat], v_next, n, q_next)
            if not isinstance(rest, list):
                return rest
            return rest + [Assignment(pos_hat, CylinderSet.of(v_hat), n, cert_hat.evidence)]

        # Case 2: landed widths still growing at the horizon.
        top, prev = self.n_cap, self.n_cap - 1
        growing = [pos for pos in active if len(W[pos, top]) > len(W[pos, prev])]
        if growing:
            others = [pos for pos in active if pos not in growing]
            for n in levels:
                blocked = frozenset().union(*(W[pos, n] for pos in others)) if others else frozenset()
                cands = {pos: sorted(W[pos, n] - blocked) for pos in growing}
                picks = self._distinct_reps(cands)
                if picks is None:
                    continue
                q_next = q_cur + self.q.scale(len(growing))
                v_next = CylinderSet.of(frozenset(ext[n]) - frozenset(picks.values()))
                for pos in others:
                    if not self.tilde(pos, n, q_next, v_next.strings).member:
                        raise InternalError(
                            f"instance {pos}: removing horizon singletons broke easy forcing"
                        )
                assigned = [
                    Assignment(pos, CylinderSet.of([x]), n, self.landed(pos, x).evidence)
                    for pos, x in sorted(picks.items())
                ]
                if not others:
                    return assigned
                rest = self.route(others, v_next, n, q_next)
                if not isinstance(rest, list):
                    return rest
                return rest + assigned
            return Inconclusive(
                "landed widths grow at the horizon but no level admits distinct representatives"
            )

        # Case 3: widths plateau; confine or force divergence.
        union = {n: frozenset().union(*(W[pos, n] for pos in active)) for n in levels}
        u = len(union[top])
        n_bar = next(
            m for m in range(n_cur, top) if all(len(union[n]) == u for n in levels if n > m)
        )
        plateau = [n for n in levels if n > n_bar]
        w_levels = tuple((n, union[n]) for n in levels)
        deep_budget = self.q + q_cur + self.qpp
        for pos in active:
            inst = self.instances[pos]
            hat_s = frozenset(
                s
                for s in inst.ambient.nodes
                if any(
                    (bits := inst.psi.restrict(s, n)) is not None and bits not in union[n]
                    for n in plateau
                )
            )
            verdict = decide_big(hat_s, deep_budget, inst.eta, inst.ambient)
            core_part = _comparable_part(inst.core, inst.eta)
            if isinstance(verdict, SmallTable):
                try:
                    pruned = avoid_prune(
                        inst.ambient, core_part, hat_s, self.p, self.q_i, deep_budget
                    )
                except PreconditionError:
                    continue  # escapes are big over the deeper core stem
                for s in pruned.tree.nodes:
                    for n in plateau:
                        bits = inst.psi.restrict(s, n)
                        if bits is not None and bits not in union[n]:
                            raise InternalError(
                                f"confined tree computes {bits} outside the level tree at {n}"
                            )
                return ComputableCert(
                    pos, pruned.tree, pruned.small_tables, u, n_bar, w_levels, q_cur
                )
            s_nodes = frozenset(verdict.tree.leaves)
            escapes = [
                n
                for n in plateau
                for s in s_nodes
                if (bits := inst.psi.restrict(s, n)) is not None and bits not in union[n]
            ]
            n_hat = max(escapes) + 1
            if n_hat > self.n_cap:
                continue  # the forcing level sits beyond the horizon
            witness = BigWitness(verdict.root, verdict.tree, verdict.p, s_nodes)
            escapers = frozenset(
                s
                for s in inst.ambient.nodes
                if (bits := inst.psi.restrict(s, n_hat)) is not None
                and bits not in union[n_hat]
            )
            try:
                pruned = avoid_prune(
                    inst.ambient, core_part, escapers, self.p, self.q_i, self.q + q_cur
                )
            except PreconditionError:
                continue  # the forcing level escapes are big over the core stem
            if not s_nodes & pruned.tree.nodes:
                continue  # the avoider misses the whole escape set
            for tau in pruned.tree.nodes:
                if any(is_prefix(s, tau) for s in s_nodes):
                    if inst.psi.restrict(tau, n_hat) is not None:
                        raise InternalError(
                            f"node {tau} extends an escaping node yet computes {n_hat} bits"
                        )
            return NonTotalCert(
                pos, s_nodes, witness, pruned.tree, pruned.small_tables, n_hat,
                w_levels, q_cur,
            )
        return Inconclusive("every plateau instance escapes only beyond the horizon")

    @staticmethod
    def _distinct_reps(cands: dict):
        """A system of distinct representatives, lexicographically least."""
        order = sorted(cands, key=lambda pos: (len(cands[pos]), pos))

        def assign(idx, taken):
            if idx == len(order):
                return {}
            pos = order[idx]
            for x in cands[pos]:
                if x in taken:
                    continue
                rest = assign(idx + 1, taken | {x})
                if rest is not None:
                    rest[pos] = x
                    return rest
            return None

        return assign(0, frozenset())


def j_split(
    instances,
    p: LevelFn,
    q: LevelFn,
    q_prime: LevelFn,
    q_dprime: LevelFn,
    q_i: LevelFn,
    v_star: CylinderSet,
    n_star: int,
):
    """Split j functionals into disjoint landed cylinder families, or else
    certify one of them non-total or computable on a pruned subtree.

    Preconditions (certified, PreconditionError otherwise): p dominates
    2jq + q' + q'' + q_i on each instance; the starting cylinder set is
    easily forced everywhere at q'; and every output length up to the
    horizon is computed by a (q' + 2jq)-big set of nodes.  Inconclusive is
    returned when the finite output horizon is too shallow for the case
    analysis, never silently.
    """
    v_star = length_n_set(v_star, n_star)
    splitter = _Splitter(instances, p, q, q_prime, q_dprime, q_i, v_star, n_star)
    splitter.validate(q_prime)
    routed = splitter.route(list(range(splitter.j)), v_star, n_star, q_prime)
    if isinstance(routed, list):
        return DisjointCert(tuple(sorted(routed, key=lambda a: a.index)))
    return routed


def _check_prune_tables(tree, tables, budget, ambient) -> str | None:
    discarded = frozenset(ambient.nodes - tree.nodes)
    covered = {node for node, _ in tables}
    if not tree.nodes <= ambient.nodes:
        return "pruned tree leaves the ambient tree"
    missing = {n for n in tree.nodes if is_prefix(tree.stem, n)} - covered
    if missing:
        return f"no smallness table for kept node {sorted(missing, key=node_key)[0]}"
    for node, table in tables:
        if node not in tree:
            return f"table anchored at {node}, which is not a kept node"
        try:
            verify_small_table(table, discarded, budget, node, ambient)
        except VerificationError as err:
            return f"cut table at {node}: {err}"
    return None


def _chain_ok(w_levels) -> str | None:
    for (n0, w0), (n1, w1) in zip(w_levels, w_levels[1:]):
        if n1 != n0 + 1:
            return "level tree skips an output length"
        if any(x[:n0] not in w0 for x in w1):
            return f"level tree at {n1} does not extend level {n0}"
    return None


def verify_split_certificate(
    cert,
    instances,
    p: LevelFn,
    q: LevelFn,
    q_prime: LevelFn,
    q_dprime: LevelFn,
    q_i: LevelFn,
    v_star: CylinderSet,
    n_star: int,
) -> str | None:
    """Re-check a splitting certificate from scratch.

    Uses only bigness decisions, exact measures and node scans; trusts no
    field that it can recompute.  Returns a failure reason, or None when the
    certificate is sound.  Inconclusive outcomes carry no claim and verify
    vacuously.
    """
    instances = list(instances)
    v_star = length_n_set(v_star, n_star)
    if isinstance(cert, Inconclusive):
        return None

    if isinstance(cert, DisjointCert):
        if sorted(a.index for a in cert.assignments) != list(range(len(instances))):
            return "assignments do not cover every instance exactly once"
        for a in cert.assignments:
            inst = instances[a.index]
            if any(len(x) != a.n for x in a.V.strings):
                return f"instance {a.index}: assigned strings are not at one length"
            if not a.V.strings:
                return f"instance {a.index}: assigned an empty set"
            if any(not v_star.covers(x) for x in a.V.strings):
                return f"instance {a.index}: assigned set leaves the starting cylinders"
            landed = preimage(inst.psi, inst.ambient, a.n, a.V)
            try:
                verify_big_witness(a.witness, landed, q, inst.eta, inst.ambient)
            except VerificationError as err:
                return f"instance {a.index}: landing witness fails: {err}"
        for a, b in itertools.combinations(cert.assignments, 2):
            if any(
                is_prefix(x, y) or is_prefix(y, x)
                for x in a.V.strings
                for y in b.V.strings
            ):
                return f"instances {a.index} and {b.index} share a cylinder"
        return None

    if isinstance(cert, NonTotalCert):
        inst = instances[cert.index]
        reason = _chain_ok(cert.w_levels)
        if reason:
            return reason
        w = dict(cert.w_levels)
        if cert.n_hat not in w:
            return f"no level tree recorded at the forcing length {cert.n_hat}"
        try:
            verify_big_witness(
                cert.s_witness, cert.s_nodes, q + cert.q_prime + q_dprime,
                inst.eta, inst.ambient,
            )
        except VerificationError as err:
            return f"escape set witness fails: {err}"
        for s in cert.s_nodes:
            if not any(
                n < cert.n_hat
                and (bits := inst.psi.restrict(s, n)) is not None
                and bits not in w_n
                for n, w_n in cert.w_levels
            ):
                return f"node {s} never escapes the level tree below {cert.n_hat}"
        reason = _check_prune_tables(
            cert.tree, cert.small_tables, q + cert.q_prime + q_i, inst.ambient
        )
        if reason:
            return reason
        if not cert.s_nodes & cert.tree.nodes:
            return "the pruned tree misses the escape set entirely"
        for tau in cert.tree.nodes:
            bits = inst.psi.restrict(tau, cert.n_hat)
            if bits is not None and bits not in w[cert.n_hat]:
                return f"kept node {tau} computes {bits} outside the level tree"
            if bits is not None and any(is_prefix(s, tau) for s in cert.s_nodes):
                return f"kept node {tau} extends an escape yet computes {cert.n_hat} bits"
        return None

    if isinstance(cert, ComputableCert):
        inst = instances[cert.index]
        reason = _chain_ok(cert.w_levels)
        if reason:
            return reason
        plateau = [(n, w_n) for n, w_n in cert.w_levels if n > cert.n_bar]
        if not plateau:
            return "no level lies beyond the plateau start"
        if any(len(w_n) != cert.u for _, w_n in plateau):
            return f"plateau widths differ from {cert.u}"
        reason = _check_prune_tables(
            cert.tree, cert.small_tables,
            q + cert.q_prime + q_dprime + q_i, inst.ambient,
        )
        if reason:
            return reason
        for tau in cert.tree.nodes:
            for n, w_n in plateau:
                bits = inst.psi.restrict(tau, n)
                if bits is not None and bits not in w_n:
                    return f"kept node {tau} computes {bits} outside the level tree"
        return None

    return f"unknown certificate type {type(cert).__name__}"


# ---------------------------------------------------------------------------
# The frontier step


@dataclass(frozen=True)
class Condition:
    """A forcing condition: a bushy ambient tree with a distinguished core
    subtree, rooted at eta, with bushiness p and core deficiency q.

    expulsions records when nodes left the core, as (node, stage) pairs
    expelling the node's whole cone; the core field holds the limit, with
    core_at(t) recovering earlier stages.
    """

    eta: Node
    ambient: FiniteTree
    core: FiniteTree
    p: LevelFn
    q: LevelFn
    expulsions: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "eta", tuple(self.eta))
        object.__setattr__(
            self, "expulsions", tuple((tuple(n), int(t)) for n, t in self.expulsions)
        )
        if self.eta not in self.ambient or self.eta not in self.core:
            raise PreconditionError("eta must be a node of both trees")
        if not self.core.nodes <= self.ambient.nodes:
            raise PreconditionError("core is not a subtree of the ambient tree")
        for node, stage in self.expulsions:
            if node not in self.ambient:
                raise PreconditionError(f"expelled node {node} is not in the ambient tree")
            if stage < 0:
                raise PreconditionError("expulsion stages must be naturals")
        if self.expulsions and self.core_at(None).nodes != self.core.nodes:
            raise PreconditionError("core must equal the ambient tree minus all expulsions")

    def core_at(self, t: int | None) -> FiniteTree:
        """The core as of stage t; nodes expelled later are still present."""
        gone = {
            node for node, stage in self.expulsions if t is None or stage <= t
        }
        kept = frozenset(
            s for s in self.ambient.nodes if not any(is_prefix(g, s) for g in gone)
        )
        return FiniteTree(kept, self.ambient.bound, self.ambient.max_depth)


def pruned_core(ambient: FiniteTree) -> FiniteTree:
    """The predecessor closure of the deepest level; drops dead ends."""
    return ambient.restrict(ambient.level(ambient.depth))


@dataclass(frozen=True)
class SplitPart:
    index: int
    eta: Node
    tree: FiniteTree
    V: CylinderSet
    n: int


@dataclass(frozen=True)
class SplitStepResult:
    """Outcome of one frontier split.

    kind "split": parts carries one bushy subtree per frontier node, with
    outputs landing in mutually disjoint cylinder families.  kinds
    "divergence", "nontotal", "computable": certificate holds the pruning
    evidence and index names the frontier node; eta_prime is the extension
    root.  kind "inconclusive": detail says what the horizon lacked.
    """

    kind: str
    parts: tuple = ()
    certificate: object = None
    index: int = -1
    eta_prime: Node = ()
    detail: str = ""


def split_step(
    cond: Condition, psi: ValueFunctional, frontier, p_hat: LevelFn
) -> SplitStepResult:
    """Apply the splitting recursion at every node of a frontier.

    Validates the width inequality p > 4 p_hat w > 16 q w levelwise, where w
    counts ambient nodes at the level.  A divergence extension is preferred
    when some output length is computed on too thin a set; otherwise the
    j-fold split routes the frontier copies of the functional into disjoint
    cylinder families, giving one bushy p_hat/2 subtree per frontier node.
    """
    frontier = [tuple(e) for e in frontier]
    if not frontier:
        raise PreconditionError("frontier is empty")
    if len(set(frontier)) != len(frontier):
        raise PreconditionError("frontier nodes must be distinct")
    j = len(frontier)
    ambient, core = cond.ambient, cond.core
    for eta in frontier:
        if eta not in core:
            raise PreconditionError(f"frontier node {eta} is outside the core")
    for n in range(len(cond.eta), ambient.depth):
        w = ambient.level_width(n)
        if not cond.p(n) > 4 * p_hat(n) * w:
            raise PreconditionError(f"need p > 4 p_hat w at level {n}")
        if not 4 * p_hat(n) * w > 16 * cond.q(n) * w:
            raise PreconditionError(f"need 4 p_hat w > 16 q w at level {n}")
    for pos, eta in enumerate(frontier):
        if isinstance(decide_big(ambient.nodes - core.nodes, cond.q, eta, ambient), BigWitness):
            raise PreconditionError(
                f"the non-core part of the ambient tree is big over frontier node {eta}"
            )

    # Divergence pre-branch: an output length computed on a thin set lets us
    # force divergence outright instead of splitting.
    horizon = min(MAX_WIDTH_BITS, psi.max_output_len)
    thin = p_hat.scale(2 * j)
    for pos, eta in enumerate(frontier):
        core_part = _comparable_part(core, eta)
        for n in range(1, horizon + 1):
            conv = frozenset(s for s in ambient.nodes if psi.converges(s, n))
            if isinstance(decide_big(conv, thin, eta, ambient), SmallTable):
                pruned = force_divergence(ambient, core_part, psi, n, cond.p, cond.q, thin)
                return SplitStepResult(
                    kind="divergence", certificate=pruned, index=pos,
                    eta_prime=pruned.stem, detail=f"{n} output bits computed on a thin set",
                )

    instances = [
        JSplitInstance(psi, ambient, _comparable_part(core, eta), eta)
        for eta in frontier
    ]
    zero = LevelFn.const(0)
    outcome = j_split(
        instances, cond.p, p_hat, zero, cond.q, cond.q, CylinderSet.whole(), 0
    )
    if isinstance(outcome, Inconclusive):
        return SplitStepResult(kind="inconclusive", detail=outcome.reason)

    if isinstance(outcome, DisjointCert):
        half = p_hat.scale(Fraction(1, 2))
        parts = []
        for a in outcome.assignments:
            eta = frontier[a.index]
            landed = preimage(psi, ambient, a.n, a.V)
            verdict = decide_big(landed & core.nodes, half, eta, ambient)
            if isinstance(verdict, SmallTable):
                raise InternalError(
                    f"frontier node {eta}: core landings are not p_hat/2-big"
                )
            parts.append(SplitPart(a.index, eta, verdict.tree, a.V, a.n))
        return SplitStepResult(kind="split", parts=tuple(parts), certificate=outcome)

    if isinstance(outcome, NonTotalCert):
        meet = sorted(outcome.s_nodes & outcome.tree.nodes, key=node_key)
        return SplitStepResult(
            kind="nontotal", certificate=outcome, index=outcome.index,
            eta_prime=meet[0], detail=f"no {outcome.n_hat}-bit output beyond {meet[0]}",
        )

    meet = outcome.tree.stem
    return SplitStepResult(
        kind="computable", certificate=outcome, index=outcome.index, eta_prime=meet,
        detail=f"outputs confined to a width-{outcome.u} level tree",
    )
