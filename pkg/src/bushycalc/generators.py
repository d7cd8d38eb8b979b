"""Seeded random instance generators for every scenario kind.

All generators are deterministic functions of (seed, size parameters) via
derive_seed, and all stay inside the desk-scale caps enforced by the CLI.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .errors import CalcError, GenerationError
from .functionals import ValueFunctional
from .hashfam import sampling_density
from .schnorr import (
    TestFunctional,
    avoidance_round,
    build_covering_test,
    classify_condition,
    initial_state,
)
from .seeding import rng_for
from .splitcalc import (
    MAX_WIDTH_BITS,
    CalcInstance,
    Condition,
    JSplitInstance,
    calculus_check,
    capture_small_measure,
    in_tilde_V,
    split_step,
)
from .trees import (
    ROOT,
    CylinderSet,
    FiniteTree,
    LevelFn,
    Node,
    all_bits,
    close_prefixes,
    full_tree,
    node_key,
)

MAX_BRANCHING = 16
MAX_DEPTH = 6
MAX_GROUND_BITS = 16
MAX_SPLIT_ARITY = 4


def _random_tree(rng: random.Random, branching: int, depth: int, min_kids: int = 0) -> FiniteTree:
    """A random prefix-closed tree inside the full (branching, depth) skeleton."""
    nodes = {ROOT}
    frontier = [ROOT]
    while frontier:
        node = frontier.pop()
        if len(node) >= depth:
            continue
        n_kids = rng.randint(min_kids, branching)
        for i in range(n_kids):
            child = node + (i,)
            nodes.add(child)
            frontier.append(child)
    return FiniteTree(frozenset(nodes), LevelFn.const(branching), depth)


@dataclass(frozen=True)
class BignessInstance:
    ambient: FiniteTree
    targets: frozenset
    p: LevelFn
    root: Node
    seed: int


def gen_bigness(seed: int, branching: int = 4, depth: int = 3) -> BignessInstance:
    if branching > MAX_BRANCHING or depth > MAX_DEPTH:
        raise ValueError("size parameters exceed desk-scale caps")
    rng = rng_for(seed, "bigness", branching, depth)
    ambient = _random_tree(rng, branching, depth)
    nodes = sorted(ambient.nodes)
    density = rng.choice([Fraction(1, 8), Fraction(1, 4), Fraction(1, 2)])
    targets = frozenset(n for n in nodes if rng.random() < density)
    if rng.random() < 0.3:
        targets = frozenset(n for n in targets if n in ambient.leaves)
    p_choice = rng.randint(0, 3)
    if p_choice == 0:
        p = LevelFn.const(Fraction(rng.randint(1, 2), rng.choice([1, 2])))
    else:
        p = LevelFn.const(rng.randint(1, min(3, branching)))
    root = ROOT if rng.random() < 0.7 else rng.choice(nodes)
    return BignessInstance(ambient, targets, p, root, seed)


@dataclass(frozen=True)
class SplitInstance:
    ambient: FiniteTree
    B: frozenset
    C: frozenset
    p: LevelFn
    q: LevelFn
    root: Node
    seed: int


def gen_split(seed: int, depth: int = 3) -> SplitInstance:
    """A (p+q)-big union over the root, with leaves split at random."""
    rng = rng_for(seed, "split", depth)
    p = LevelFn.const(rng.randint(1, 2))
    q = LevelFn.const(rng.randint(1, 2))
    branching = (p + q).ceil_at(0) + rng.randint(0, 1)
    ambient = full_tree(branching, rng.randint(2, depth))
    B, C = set(), set()
    for leaf in sorted(ambient.leaves):
        roll = rng.random()
        if roll < 0.45:
            B.add(leaf)
        elif roll < 0.9:
            C.add(leaf)
        else:
            B.add(leaf)
            C.add(leaf)
    # A few interior members keep the stop-at-first-target path honest.
    for node in sorted(ambient.nodes):
        if node not in ambient.leaves and rng.random() < 0.05:
            (B if rng.random() < 0.5 else C).add(node)
    return SplitInstance(ambient, frozenset(B), frozenset(C), p, q, ROOT, seed)


@dataclass(frozen=True)
class ThinInstance:
    tree: FiniteTree
    targets: frozenset
    lam: Fraction
    eps: LevelFn
    seed: int


def gen_thin(seed: int, depth: int = 4) -> ThinInstance:
    """An exactly bushy tree with a leaf set dense enough to thin."""
    rng = rng_for(seed, "thin", depth)
    d = rng.randint(2, depth)
    counts = [rng.randint(2, 3) for _ in range(d)]
    tree = full_tree(LevelFn.of([Fraction(c) for c in counts], tail=1), d)
    eps_vals = [Fraction(1, rng.choice([8, 10, 12, 16])) for _ in range(d)]
    eps = LevelFn.of(eps_vals, tail=Fraction(1, 16))
    eps_sum = sum(eps_vals, Fraction(0))
    leaves = sorted(tree.leaves)
    lam = eps_sum + Fraction(1, 5)
    need = int(lam * len(leaves)) + 1
    extra = rng.randint(0, max(0, len(leaves) - need))
    chosen = rng.sample(leaves, min(len(leaves), need + extra))
    return ThinInstance(tree, frozenset(chosen), lam, eps, seed)


@dataclass(frozen=True)
class HashInstance:
    eps: Fraction
    delta: Fraction
    k: int
    n: int
    max_bits: int
    seed: int


def gen_hash(
    seed: int,
    eps=Fraction(2, 5),
    delta=Fraction(1, 4),
    k: int = 2,
    n: int = 3,
    max_bits: int = MAX_GROUND_BITS,
) -> HashInstance:
    """Validated parameters for one hash-family generation run."""
    eps, delta = Fraction(eps), Fraction(delta)
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError(f"eps and delta must lie in (0, 1), got {eps}, {delta}")
    if k < 1 or n < 1:
        raise ValueError("k and n must be positive")
    if max_bits > MAX_GROUND_BITS:
        raise ValueError("size parameters exceed desk-scale caps")
    if sampling_density(eps, delta, k) is None:
        raise ValueError(f"no admissible sampling density for ({eps}, {delta}, {k})")
    return HashInstance(eps, delta, k, n, max_bits, seed)


def _psi_from(tree: FiniteTree, out) -> ValueFunctional:
    entries = []
    for node in sorted(tree.nodes, key=node_key):
        bits = out(node)
        if bits:
            entries.append((node, bits, len(node)))
    return ValueFunctional(tuple(entries))


def _branchy_output(rng: random.Random, tree: FiniteTree, per_level: int = 1):
    """Total outputs, per_level fresh bits on each edge, distinct-ish branches."""
    grown = {ROOT: ""}
    for node in sorted(tree.nodes, key=node_key):
        if node == ROOT:
            continue
        step = "".join(rng.choice("01") for _ in range(per_level))
        grown[node] = grown[node[:-1]] + step
    return lambda node: grown[tuple(node)]


def _palette_output(rng: random.Random, tree: FiniteTree, width: int, length: int):
    """Total outputs drawn from a small fixed palette, one string per subtree."""
    palette = ["".join(rng.choice("01") for _ in range(length)) for _ in range(width)]
    assign = {}
    for node in sorted(tree.nodes, key=node_key):
        if len(node) == 1:
            assign[node] = rng.choice(palette)

    def out(node):
        node = tuple(node)
        if not node:
            return ""
        return assign[node[:1]]

    return out


@dataclass(frozen=True)
class CalcScenario:
    item: int
    inst: CalcInstance
    seed: int


def gen_vcalc(seed: int, item: int = 0) -> CalcScenario:
    """A calculus instance whose item hypotheses certify.

    item=0 draws the item at random; the instance is redrawn until the
    memberships the item assumes actually hold, so calculus_check never
    refuses it.
    """
    if item not in range(7):
        raise ValueError(f"no calculus item {item}")
    rng = rng_for(seed, "vcalc", item)
    for _ in range(400):
        want = item if item else rng.randint(1, 6)
        ambient = full_tree(rng.choice([2, 3]), rng.choice([2, 3]))
        n = rng.choice([1, 2])
        space = all_bits(n)
        width = rng.choice([2, len(space)])
        out = _palette_output(rng, ambient, width, n)
        # an occasional silent subtree exercises escape sets
        mute = rng.random() < 0.3
        gone = rng.choice(sorted(ambient.level(1))) if mute else None

        def speak(node, out=out, gone=gone):
            if gone is not None and tuple(node)[:1] == gone:
                return ""
            return out(node)

        psi = _psi_from(ambient, speak)
        if not psi.entries:
            continue
        qs = [Fraction(1, 2), Fraction(1), Fraction(3, 2), Fraction(2)]
        q, q2 = rng.choice(qs), rng.choice(qs)
        if want in (3, 5) and q2 < q:
            q, q2 = q2, q
        V = CylinderSet.of([s for s in space if rng.random() < 0.5])
        V2 = CylinderSet.of([s for s in space if rng.random() < 0.5])
        inst = CalcInstance(
            psi, ambient, ROOT, n, V, V2, LevelFn.const(q), LevelFn.const(q2)
        )
        try:
            calculus_check(want, inst)
        except CalcError:
            continue
        return CalcScenario(want, inst, seed)
    raise GenerationError(f"no certified item-{item} instance after 400 draws")


@dataclass(frozen=True)
class CaptureInstance:
    ambient: FiniteTree
    core: FiniteTree
    psi: ValueFunctional
    rho: Node
    lam: Fraction
    p: LevelFn
    q: LevelFn
    p_hat: LevelFn
    seed: int


def gen_capture(seed: int, lam=Fraction(1, 2)) -> CaptureInstance:
    """A total functional over a full tree on which the capture succeeds."""
    lam = Fraction(lam)
    rng = rng_for(seed, "capture", lam.numerator, lam.denominator)
    for _ in range(60):
        b = rng.choice([3, 4, 5])
        d = rng.choice([3, 4])
        ambient = full_tree(b, d)
        p = LevelFn.const(b)
        q = LevelFn.const(Fraction(1, 8))
        # 6q < 3 p_hat < p always; 3/8 keeps the hash route reachable at k=2
        hats = [Fraction(1, 2)] + ([Fraction(1), Fraction(3, 8)] if b >= 4 else [])
        p_hat = LevelFn.const(rng.choice(hats))
        mode = rng.choice(["constant", "palette", "spread"])
        if mode == "constant":
            bits = "".join(rng.choice("01") for _ in range(rng.choice([2, 3])))
            out = lambda node, w=bits: w if node else ""
        elif mode == "palette":
            out = _palette_output(rng, ambient, rng.choice([2, 3]), rng.choice([2, 3]))
        else:
            out = _branchy_output(rng, ambient)
        inst = CaptureInstance(
            ambient, ambient, _psi_from(ambient, out), ROOT, lam, p, q, p_hat, seed
        )
        try:
            capture_small_measure(
                inst.ambient, inst.core, inst.psi, inst.rho, inst.lam,
                inst.p, inst.q, inst.p_hat, seed=inst.seed,
            )
        except CalcError:
            continue
        return inst
    raise GenerationError("no capturable instance after 60 draws")


@dataclass(frozen=True)
class JSplitScenario:
    instances: tuple  # tuple[JSplitInstance, ...]
    p: LevelFn
    q: LevelFn
    q_prime: LevelFn
    q_dprime: LevelFn
    q_i: LevelFn
    n_star: int
    seed: int


def _jsplit_outputs(rng: random.Random, j: int, shape: str):
    """One output scheme per copy, emitted at depth 1 and inherited below.

    Separated blocks are prefix-disjoint across copies; the overlap shape
    reuses a block on two copies with opposite parity rules, so the copies
    only come apart one output bit later.
    """
    blocks = ["0", "1"] if j <= 2 else ["00", "01", "10", "11"]
    rng.shuffle(blocks)
    outs = []
    for i in range(j):
        if shape == "blocks":
            pre = blocks[i]
            outs.append(
                lambda node, pre=pre: pre + str(node[0] % 2) if len(node) == 1 else ""
            )
        elif shape == "constants":
            word = blocks[i] + rng.choice("01")
            outs.append(lambda node, w=word: w if len(node) == 1 else "")
        else:
            pre = blocks[i % max(1, j - 1)]
            flip = i // max(1, j - 1)
            outs.append(
                lambda node, pre=pre, flip=flip: pre + str((node[0] + flip) % 2)
                if len(node) == 1
                else ""
            )
    return outs


def gen_jsplit(seed: int, j: int = 2, depth: int = 3) -> JSplitScenario:
    """A j-tuple of functionals whose splitting preconditions certify.

    The generator replays the splitter's own entry checks (rate domination,
    the trivially forced starting set, and the per-length convergence
    bigness through in_tilde_V) and redraws until all of them pass.
    """
    if not 1 <= j <= MAX_SPLIT_ARITY or depth > MAX_DEPTH:
        raise ValueError("size parameters exceed desk-scale caps")
    rng = rng_for(seed, "jsplit", j, depth)
    for _ in range(60):
        b = rng.choice([3, 4])
        d = rng.randint(2, min(depth, 3))
        ambient = full_tree(b, d)
        q_val = rng.choice([Fraction(1, 4), Fraction(1, 2)])
        if b == 3 and j == 3:
            q_val = Fraction(1, 4)
        q = LevelFn.const(q_val)
        q_prime = LevelFn.const(0)
        q_dprime = LevelFn.const(Fraction(1, 8))
        q_i = LevelFn.const(Fraction(1, 8))
        p = LevelFn.const(b)
        shape = rng.choices(
            ["blocks", "constants", "overlap"], weights=[70, 15, 15]
        )[0]
        if j == 1:
            shape = rng.choice(["blocks", "constants"])
        outs = _jsplit_outputs(rng, j, shape)
        instances = tuple(
            JSplitInstance(_psi_from(ambient, out), ambient, ambient, ROOT)
            for out in outs
        )
        budget = q.scale(2 * j) + q_prime + q_dprime + q_i
        if any((p - budget)(lvl) <= 0 for lvl in range(ambient.depth)):
            continue
        n_cap = min(MAX_WIDTH_BITS, min(i.psi.max_output_len for i in instances))
        ok = True
        for inst in instances:
            if not in_tilde_V(
                inst.psi, inst.ambient, inst.eta, 0, q_prime, CylinderSet.whole()
            ).member:
                ok = False
                break
            for n in range(1, n_cap + 1):
                cert = in_tilde_V(
                    inst.psi, inst.ambient, inst.eta, n,
                    q_prime + q.scale(2 * j), CylinderSet.of([]),
                )
                if cert.member:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        return JSplitScenario(
            instances, p, q, q_prime, q_dprime, q_i, 0, seed
        )
    raise GenerationError(f"no certified {j}-split instance after 60 draws")


@dataclass(frozen=True)
class SplitStepScenario:
    cond: Condition
    psi: ValueFunctional
    frontier: tuple
    p_hat: LevelFn
    seed: int


def gen_split_step(seed: int) -> SplitStepScenario:
    """A narrow-stem condition and frontier satisfying the width chain.

    Narrow upper levels keep |T̃ ∩ ω^n| small enough that honest bushiness
    at the leaf level satisfies p > 4·p̂·w > 16·q·w everywhere.
    """
    rng = rng_for(seed, "split-step")
    for _ in range(40):
        f = rng.choice([2, 3])
        b = rng.randint(6, 10)
        leaves = [(0, a, c) for a in range(f) for c in range(b)]
        tree = FiniteTree(
            frozenset(close_prefixes(leaves)), LevelFn((1, f, b), b), 3
        )
        widths = [1, 1, f]
        p_hat = LevelFn.const(1)
        q = LevelFn.const(rng.choice([Fraction(1, 5), Fraction(1, 6)]))
        p_vals = [Fraction(4 * w + rng.randint(1, 3)) for w in widths]
        p_vals[2] = max(p_vals[2], Fraction(b))
        cond = Condition(
            eta=(0,), ambient=tree, core=tree, p=LevelFn.of(p_vals, p_vals[-1]), q=q
        )
        frontier = tuple((0, a) for a in range(f))
        diverge = rng.random() < 0.3
        gone = rng.randrange(f) if diverge else None

        def out(node, gone=gone):
            if len(node) < 3:
                return ""
            if gone is not None and node[1] == gone:
                return ""
            return format(node[1], "02b") + str(node[2] % 2)

        scenario = SplitStepScenario(cond, _psi_from(tree, out), frontier, p_hat, seed)
        try:
            split_step(scenario.cond, scenario.psi, scenario.frontier, scenario.p_hat)
        except CalcError:
            continue
        return scenario
    raise GenerationError("no split-step scenario after 40 draws")


@dataclass(frozen=True)
class RoundScenario:
    psi: TestFunctional
    ambient: FiniteTree
    core: FiniteTree
    p: LevelFn
    q: LevelFn
    eps: LevelFn
    rounds: int
    seed: int


def gen_schnorr_round(seed: int, rounds: int = 2, depth: int = 5) -> RoundScenario:
    """An avoidance scenario that completes the requested number of rounds.

    The rates are fixed from the schedule the round verifier enforces:
    eps = 1/(4·depth + 8) keeps the eps series under 1/4 through the whole
    tree, q is half the pε³/8 margin, and every authored cylinder is small
    enough that per-branch unseen mass settles under the round gaps by
    stage 2.  Empirically r rounds need depth ≥ r + 2 (the opening pins one
    level and each round consumes one more); the generator draws depth - 2
    as the round budget ceiling and re-authors on any verifier refusal.
    """
    if not 1 <= rounds <= 3 or depth > MAX_DEPTH:
        raise ValueError("size parameters exceed desk-scale caps")
    if depth < rounds + 2:
        raise ValueError(f"{rounds} rounds need depth at least {rounds + 2}")
    rng = rng_for(seed, "schnorr-round", rounds, depth)
    for _ in range(40):
        b = rng.choice([3, 4])
        ambient = full_tree(b, depth)
        p = LevelFn.const(b)
        eps = LevelFn.const(Fraction(1, 4 * depth + 8))
        q = LevelFn.const(p(0) * eps(0) ** 3 / 16)
        budget = rng.choice([Fraction(1, 8), Fraction(3, 32), Fraction(1, 16)])

        def word(length):
            return "".join(rng.choice("01") for _ in range(length))

        entries = []
        head = 1
        while Fraction(1, 2**head) > budget / 2:
            head += 1
        entries.append((ROOT, 0, (word(head),), 0))
        spent = Fraction(1, 2**head)
        child_len = head + rng.choice([1, 2])
        for c in range(b):
            entries.append(((c,), 1, (word(child_len),), 1))
        late = spent + Fraction(1, 2**child_len)
        sliver_len = 11
        for c in range(b):
            if rng.random() < 0.5 and late + Fraction(1, 2**sliver_len) <= budget:
                entries.append(((c,), 2, (word(sliver_len),), rng.choice([0, 1, 2])))
        psi = TestFunctional(entries=tuple(entries), budget=budget)
        scenario = RoundScenario(psi, ambient, ambient, p, q, eps, rounds, seed)
        try:
            state = initial_state(psi, ambient, ambient, p, q, eps)
            for _ in range(rounds):
                state = avoidance_round(state, psi, ambient, ambient, p, q)
        except CalcError:
            continue
        return scenario
    raise GenerationError(f"no {rounds}-round avoidance scenario after 40 draws")


@dataclass(frozen=True)
class CoveringInstance:
    ambient: FiniteTree
    core: FiniteTree
    psi: ValueFunctional
    p: LevelFn
    q: LevelFn
    p_hat: LevelFn
    rounds: int
    seed: int


def gen_covering(seed: int, rounds: int = 3) -> CoveringInstance:
    """A total functional whose covering test completes the given rounds."""
    if not 0 <= rounds <= 3:
        raise ValueError("rounds must stay within 0..3")
    rng = rng_for(seed, "covering", rounds)
    for _ in range(40):
        b = rng.choice([3, 4])
        d = rng.choice([3, 4])
        ambient = full_tree(b, d)
        p = LevelFn.const(b)
        q = LevelFn.const(Fraction(1, 8))
        p_hat = LevelFn.const(rng.choice([Fraction(1, 2)] + ([Fraction(5, 4)] if b == 4 else [])))
        mode = rng.choice(["palette", "spread", "constant"])
        if mode == "constant":
            word = "".join(rng.choice("01") for _ in range(3))
            out = lambda node, w=word: w if node else ""
        elif mode == "palette":
            out = _palette_output(rng, ambient, 2, rng.choice([2, 3]))
        else:
            out = _branchy_output(rng, ambient, per_level=2)
        inst = CoveringInstance(
            ambient, ambient, _psi_from(ambient, out), p, q, p_hat, rounds, seed
        )
        try:
            build_covering_test(
                inst.ambient, inst.core, inst.psi, inst.p, inst.q,
                inst.p_hat, inst.rounds, seed=inst.seed,
            )
        except CalcError:
            continue
        return inst
    raise GenerationError("no coverable instance after 40 draws")


@dataclass(frozen=True)
class ClassifyInstance:
    cond: Condition
    psi: ValueFunctional
    p_hat: LevelFn
    eps: LevelFn
    seed: int


def gen_classify(seed: int) -> ClassifyInstance:
    """A condition and functional on which classification reaches a verdict."""
    rng = rng_for(seed, "classify")
    for _ in range(40):
        b = rng.choice([5, 6])
        ambient = full_tree(b, 3)
        p = LevelFn.const(b)
        q = LevelFn.const(1)
        p_hat = LevelFn.const(2)
        eps = LevelFn.const(Fraction(9, 10))
        mode = rng.choice(["divergent", "total", "mixed", "stalled"])
        if mode == "divergent":
            psi = ValueFunctional(())
        elif mode == "total":
            out = _palette_output(rng, ambient, rng.choice([1, 2]), 2)
            psi = _psi_from(ambient, out)
        elif mode == "stalled":
            word = rng.choice("01")
            psi = _psi_from(ambient, lambda node, w=word: w if node else "")
        else:
            gone = rng.randrange(b)
            base = _palette_output(rng, ambient, 2, 2)
            psi = _psi_from(
                ambient,
                lambda node, g=gone, f=base: "" if node and node[0] == g else f(node),
            )
        inst = ClassifyInstance(
            Condition(ROOT, ambient, ambient, p, q), psi, p_hat, eps, seed
        )
        try:
            classify_condition(inst.cond, inst.psi, inst.p_hat, inst.eps)
        except CalcError:
            continue
        return inst
    raise GenerationError("no classifiable instance after 40 draws")
