"""Steering a branch away from an adaptive measure test, one round at a time.

The adversary here is a tree functional that gradually uncovers cylinder
sets of bounded total measure along every branch.  Each avoidance round
waits until the functional has shown almost everything it ever will on a
bushy spread of branches, fixes the next block of the ground string by
exact minimization of the conditional measure the spread still sees, and
thins the spread to the branches that verify the choice.  The surviving
bands settle from the bottom up, so a finite run assembles into one tree
together with a ground string that every emitted cylinder misses.

The same module hosts the two companion constructions: iterated measure
capture, which wraps the functional's outputs into a test with summable
component measures, and the forcing dichotomy, which decides whether a
condition can force some output bit to diverge or must instead carry a
totality tree.

All arithmetic is exact.  Every inequality that the constructions rely on
is re-checked and reported as a named record; a failed check names the
quantity that broke, which at this scale always points at a gap schedule
that was too loose for the instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

from .bigness import BigWitness, SmallTable, decide_big, meets_threshold, verify_small_table
from .errors import (
    CalcError,
    InsufficientDepthError,
    InternalError,
    PreconditionError,
    TreeError,
    VerificationError,
)
from .functionals import ValueFunctional
from .splitcalc import Condition
from .splitcalc import capture_small_measure
from .thinning import StagedTotality, exact_thin, stage_totality
from .trees import (
    CylinderSet,
    FiniteTree,
    LevelFn,
    Node,
    SchnorrTest,
    all_bits,
    close_prefixes,
    cond_measure,
    frac,
    is_prefix,
    node_key,
)

# Ground-string extensions are enumerated exhaustively, so the per-round
# window (new bits of the ground string) is capped like the other
# exhaustive searches in the package.
WINDOW_BITS = 14


@dataclass(frozen=True)
class TestFunctional:
    """A tree-indexed enumeration of one measure-budgeted cylinder test.

    Each entry ``(node, index, V, stage)`` attaches component ``index`` of
    the test to ``node``, appearing at the simulated ``stage``.  Along any
    branch the components accumulate by union.  The accumulated measure
    never exceeds ``budget``, an index appears at most once per branch, and
    wherever indices ``0..n`` are all present the accumulation already
    claims all but ``2^-(n+1)`` of the budget.
    """

    entries: tuple = ()
    budget: Fraction = Fraction(1, 2)

    def __post_init__(self):
        object.__setattr__(self, "budget", frac(self.budget))
        if not 0 < self.budget < 1:
            raise TreeError("the budget must lie strictly between 0 and 1")
        canon = []
        for node, index, V, stage in self.entries:
            node = tuple(int(b) for b in node)
            if any(b < 0 for b in node):
                raise TreeError(f"negative branch index in {node}")
            index, stage = int(index), int(stage)
            if index < 0 or stage < 0:
                raise TreeError("component indices and stages must be nonnegative")
            if not isinstance(V, CylinderSet):
                V = CylinderSet.of(V)
            canon.append((node, index, V, stage))
        canon.sort(key=lambda e: (node_key(e[0]), e[1], e[3]))
        for i, (nu, idx, _, _) in enumerate(canon):
            for mu, jdx, _, _ in canon[i + 1 :]:
                if idx == jdx and (is_prefix(nu, mu) or is_prefix(mu, nu)):
                    raise TreeError(f"component {idx} appears twice along one branch")
        object.__setattr__(self, "entries", tuple(canon))
        for node in {e[0] for e in canon}:
            chain = self.chain(node)
            total = CylinderSet()
            for _, V, _ in chain:
                total = total.union(V)
            if total.measure > self.budget:
                raise TreeError(f"accumulation above {node} exceeds the budget")
            table = {index: V for index, V, _ in chain}
            acc = CylinderSet()
            n = 0
            while n in table:
                acc = acc.union(table[n])
                if not acc.measure > self.budget - Fraction(1, 2 ** (n + 1)):
                    raise TreeError(
                        f"components 0..{n} above {node} leave more than "
                        f"2^-{n + 1} of the budget unclaimed"
                    )
                n += 1

    def chain(self, node: Node, t: int | None = None) -> tuple:
        """Entries contributing at node by stage t, ordered by index."""
        node = tuple(node)
        out = [
            (index, V, stage)
            for nu, index, V, stage in self.entries
            if is_prefix(nu, node) and (t is None or (index <= t and stage <= t))
        ]
        return tuple(sorted(out, key=lambda e: e[0]))

    def visible(self, node: Node, t: int | None = None) -> CylinderSet:
        """Union of the components enumerated along node by stage t."""
        out = CylinderSet()
        for _, V, _ in self.chain(node, t):
            out = out.union(V)
        return out

    def unseen(self, node: Node, t: int) -> Fraction:
        """Measure that branches through node can still gain after stage t.

        Bounds, from above, every later increment of the visible union on
        every extension of node; monotone under extension.
        """
        node = tuple(node)
        full = CylinderSet()
        for nu, _, V, _ in self.entries:
            if is_prefix(nu, node) or is_prefix(node, nu):
                full = full.union(V)
        return full.measure - self.visible(node, t).measure


@dataclass(frozen=True)
class CheckRecord:
    """One named inequality from a verification pass, with both sides."""

    name: str
    ok: bool
    lhs: Fraction | int
    rhs: Fraction | int


@dataclass(frozen=True)
class RoundTrace:
    """Everything one avoidance round committed to, with its checks."""

    round_index: int
    t: int
    level: int
    rho: str
    lam: Fraction
    checks: tuple = ()


@dataclass(frozen=True)
class RoundState:
    """Snapshot after finitely many avoidance rounds.

    trees[i] is the tree settled by round i (trees[0] by the opening
    search), levels[i + 1] its leaf level, times[i] its simulated stage,
    rhos[i] the ground string fixed going into round i (rhos[0] is empty),
    and lambdas[i] the share of the budget round i pinned down.  lam_bar
    is the share still unpinned and eps the thinning rates.  levels[0] is
    the stem level.
    """

    trees: tuple
    rhos: tuple
    lambdas: tuple
    lam_bar: Fraction
    levels: tuple
    times: tuple
    eps: LevelFn
    trace: RoundTrace | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        trees = tuple(self.trees)
        if not trees or not all(isinstance(T, FiniteTree) for T in trees):
            raise TreeError("a state needs at least one finite tree")
        rhos = tuple(str(r) for r in self.rhos)
        lambdas = tuple(frac(v) for v in self.lambdas)
        levels = tuple(int(l) for l in self.levels)
        times = tuple(int(t) for t in self.times)
        if not (len(rhos) == len(lambdas) == len(times) == len(trees) == len(levels) - 1):
            raise TreeError("state components disagree about the number of rounds")
        if rhos[0] != "":
            raise TreeError("the ground string starts empty")
        for r in rhos:
            if set(r) - {"0", "1"}:
                raise TreeError(f"ground string {r!r} is not binary")
        for a, b in zip(rhos, rhos[1:]):
            if not (b.startswith(a) and len(b) > len(a)):
                raise TreeError("each ground string must extend the last strictly")
        if any(v <= 0 for v in lambdas):
            raise TreeError("pinned budget shares must be positive")
        bar = frac(self.lam_bar)
        if not bar > 0:
            raise TreeError("the unpinned budget share must stay positive")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise TreeError("leaf levels must increase strictly")
        if any(t < 0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
            raise TreeError("stages must be nonnegative and nondecreasing")
        if not isinstance(self.eps, LevelFn):
            raise TreeError("eps must be a level function")
        base = [n for n in trees[0].nodes if len(n) == levels[0]]
        if len(base) != 1:
            raise TreeError("the stem level of the first tree must hold a single node")
        for T in trees:
            if base[0] not in T.nodes:
                raise TreeError("every round tree contains the stem")
        object.__setattr__(self, "trees", trees)
        object.__setattr__(self, "rhos", rhos)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "lam_bar", bar)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "times", times)

    @property
    def eta(self) -> Node:
        return next(n for n in self.trees[0].nodes if len(n) == self.levels[0])

    @property
    def rounds(self) -> int:
        return len(self.trees) - 1

    @property
    def budget(self) -> Fraction:
        return self.lam_bar + sum(self.lambdas)


def _lev(state: RoundState, j: int) -> int:
    """Leaf level of round j; the stem level backstops j below -1."""
    return state.levels[j + 1] if j + 1 >= 0 else state.levels[0]


def _cone_count(ambient: FiniteTree, eta: Node, level: int) -> int:
    return sum(1 for n in ambient.nodes if is_prefix(eta, n) and len(n) <= level)


def _band(
    checks: list,
    name: str,
    tree: FiniteTree,
    eta: Node,
    lo: int,
    hi: int,
    need,
    topping=None,
) -> None:
    """Record whether every cone node on levels [lo, hi) branches enough."""
    ok = True
    lhs, rhs = 0, 0
    for m in range(lo, hi):
        for node in tree.level(m):
            if not is_prefix(eta, node):
                continue
            count = len(tree.children(node))
            if topping is not None:
                count += topping(node)
            if not meets_threshold(count, need(m)) and (ok or count - need(m) < lhs - rhs):
                ok, lhs, rhs = False, count, need(m)
    checks.append(CheckRecord(name, ok, lhs, rhs))


def verify_round_state(
    state: RoundState,
    psi: TestFunctional,
    ambient: FiniteTree,
    core: FiniteTree,
    p: LevelFn,
    q: LevelFn,
    strict: bool = True,
) -> tuple:
    """Re-check every state invariant against the trees and the functional.

    Returns the full tuple of named check records; with strict=True the
    first failed check raises VerificationError carrying its name.
    """
    checks: list = []
    eta = state.eta
    depth = ambient.max_depth
    K = len(state.trees) - 1
    top = state.trees[K]
    t_top = state.times[K]
    l_top = state.levels[K + 1]

    checks.append(
        CheckRecord("budget_match", state.budget == psi.budget, state.budget, psi.budget)
    )
    unit = [state.eps(m) for m in range(len(eta), depth + 1)]
    checks.append(CheckRecord("eps_unit", min(unit) > 0 and max(unit) < 1, min(unit), max(unit)))
    total = sum((state.eps(m) for m in range(depth + 1)), Fraction(0))
    checks.append(CheckRecord("eps_total", total < Fraction(1, 4), total, Fraction(1, 4)))

    margin = min(
        range(len(eta), depth + 1), key=lambda m: p(m) * state.eps(m) ** 3 / 8 - q(m)
    )
    checks.append(
        CheckRecord(
            "q_margin",
            q(margin) < p(margin) * state.eps(margin) ** 3 / 8,
            q(margin),
            p(margin) * state.eps(margin) ** 3 / 8,
        )
    )

    # every round tree lives inside the core, comparable with the stem,
    # with all leaves on its declared level
    bad = 0
    for i, tree in enumerate(state.trees):
        for n in tree.nodes:
            if n not in core.nodes or not (is_prefix(n, eta) or is_prefix(eta, n)):
                bad += 1
        bad += sum(1 for leaf in tree.leaves if len(leaf) != state.levels[i + 1])
    checks.append(CheckRecord("tree_shape", bad == 0, bad, 0))

    slack = max(state.times[i] - state.levels[i + 1] for i in range(len(state.times)))
    checks.append(CheckRecord("time_level", slack <= 0, slack, 0))

    checks.append(
        CheckRecord(
            "initial_sqrt",
            state.budget**2 < state.lambdas[0],
            state.budget**2,
            state.lambdas[0],
        )
    )

    # the gap schedule: each unpinned remainder fits under the square of the
    # previous one, discounted by the cone count and the ground length
    ok, lhs, rhs = True, Fraction(0), Fraction(1)
    remaining = state.budget
    for j in range(len(state.lambdas)):
        bound = remaining**2 / (
            4 * _cone_count(ambient, eta, state.levels[j]) * 2 ** len(state.rhos[j])
        )
        remaining = remaining - state.lambdas[j]
        if not remaining < bound and (ok or remaining - bound > lhs - rhs):
            ok, lhs, rhs = False, remaining, bound
    checks.append(CheckRecord("gap_chain", ok, lhs, rhs))

    l_mid = _lev(state, K - 1)
    l_low = _lev(state, K - 2)
    _band(checks, "band_fresh", top, eta, l_mid, l_top, lambda m: p(m) * state.eps(m) / 2)
    _band(checks, "band_middle", top, eta, l_low, l_mid, lambda m: p(m) * state.eps(m) ** 2 / 4)
    _band(
        checks,
        "band_union",
        top,
        eta,
        len(eta),
        l_low,
        lambda m: p(m) * state.eps(m) ** 3 / 8,
        topping=lambda n: sum(1 for c in ambient.children(n) if c not in core.nodes),
    )

    frontier = [n for n in top.level(l_top) if is_prefix(eta, n)]
    seen = max(
        (cond_measure(psi.visible(n, t_top), state.rhos[K]) for n in frontier),
        default=Fraction(0),
    )
    checks.append(
        CheckRecord("leaf_conditional", seen**2 < state.lambdas[K], seen**2, state.lambdas[K])
    )
    future = max((psi.unseen(n, t_top) for n in frontier), default=Fraction(0))
    checks.append(CheckRecord("leaf_future", future < state.lam_bar, future, state.lam_bar))

    ok, lhs, rhs = True, -1, 0
    for i in range(len(state.rhos) - 1):
        use = max(
            (
                len(s)
                for tau in core.level(state.levels[i + 1])
                if is_prefix(eta, tau)
                for s in psi.visible(tau, state.times[i]).strings
            ),
            default=-1,
        )
        if not len(state.rhos[i + 1]) > use and (ok or use - len(state.rhos[i + 1]) > lhs - rhs):
            ok, lhs, rhs = False, use, len(state.rhos[i + 1])
    checks.append(CheckRecord("ground_length", ok, lhs, rhs))

    if strict:
        for record in checks:
            if not record.ok:
                raise VerificationError(
                    f"invariant {record.name} fails: {record.lhs} against {record.rhs}"
                )
    return tuple(checks)


def _validate_rates(eta: Node, depth: int, p: LevelFn, q: LevelFn, eps: LevelFn) -> None:
    if not isinstance(eps, LevelFn):
        raise PreconditionError("eps must be a level function")
    for m in range(len(eta), depth + 1):
        e = eps(m)
        if not 0 < e < 1:
            raise PreconditionError(f"thinning rate at level {m} must lie in (0, 1)")
        if not q(m) < p(m) * e**3 / 8:
            raise PreconditionError(f"need q < p*eps^3/8 at level {m}")
    total = sum((eps(m) for m in range(depth + 1)), Fraction(0))
    if not total < Fraction(1, 4):
        raise PreconditionError("thinning rates must sum below 1/4 through the working depth")


def initial_state(
    psi: TestFunctional,
    ambient: FiniteTree,
    core: FiniteTree,
    p: LevelFn,
    q: LevelFn,
    eps: LevelFn,
) -> RoundState:
    """Open the avoidance run: a half-bushy spread with little mass unseen.

    Searches stages and levels in lexicographic order for a frontier whose
    branches can gain less than budget^2/4 of further test mass, grows the
    canonical half-bushy tree into it, and pins the opening budget share.
    """
    eta = core.stem
    depth = ambient.max_depth
    _validate_rates(eta, depth, p, q, eps)
    lam_star = psi.budget
    gap = lam_star**2 / 4
    half = p.scale(Fraction(1, 2))
    for t in range(depth + 1):
        for l in range(max(t, len(eta) + 1), depth + 1):
            good = [
                tau
                for tau in core.level(l)
                if is_prefix(eta, tau) and psi.unseen(tau, t) < gap
            ]
            if not good:
                continue
            wit = decide_big(good, half, eta, core)
            if not isinstance(wit, BigWitness):
                continue
            hanging = max(psi.unseen(tau, t) for tau in wit.tree.leaves)
            lam_bar = (hanging + gap) / 2
            lam0 = lam_star - lam_bar
            if not lam_star**2 < lam0:
                raise PreconditionError(
                    "the budget is too large: its square reaches the opening share"
                )
            state = RoundState((wit.tree,), ("",), (lam0,), lam_bar, (len(eta), l), (t,), eps)
            verify_round_state(state, psi, ambient, core, p, q)
            return state
    raise InsufficientDepthError(
        "insufficient functional depth: no stage and level give a half-bushy "
        f"frontier with unseen test mass under {gap}"
    )


def _thin(tree: FiniteTree, targets, eps: LevelFn) -> FiniteTree:
    """Thin an exactly-bushy tree to target leaves; a bare path is kept."""
    targets = frozenset(tuple(t) for t in targets) & tree.leaves
    if not targets:
        raise InternalError("thinning lost every leaf despite the fraction check")
    if len(tree.leaves) == 1:
        return tree
    return exact_thin(tree, targets, Fraction(3, 4), eps)


def _band_need(p: LevelFn, eps: LevelFn, l_low: int, l_mid: int, l_prev: int) -> LevelFn:
    vals = []
    for m in range(l_prev):
        if l_low <= m < l_mid:
            vals.append(p(m) * eps(m) ** 2 / 8)
        elif l_mid <= m:
            vals.append(p(m) * eps(m) / 4)
        else:
            vals.append(Fraction(1))
    return LevelFn(tuple(vals), Fraction(1))


def avoidance_round(
    state: RoundState,
    psi: TestFunctional,
    ambient: FiniteTree,
    core: FiniteTree,
    p: LevelFn,
    q: LevelFn,
) -> RoundState:
    """Run one avoidance round and return the extended, re-verified state.

    Waits for a stage and level where every fresh leaf roots a half-bushy
    deep selection and every settled branch spreads exactly-bushy into the
    fresh leaves, extends the ground string by the block that minimizes the
    conditional measure the deep selections still see, and thins to the
    branches on which the choice verifies.  The returned state carries a
    trace with every check the round made.
    """
    verify_round_state(state, psi, ambient, core, p, q)
    eta = state.eta
    depth = ambient.max_depth
    K = len(state.trees) - 1
    top = state.trees[K]
    t_prev = state.times[K]
    l_prev = state.levels[K + 1]
    l_mid = _lev(state, K - 1)
    l_low = _lev(state, K - 2)
    rho_prev = state.rhos[K]
    m_prev = len(rho_prev)
    lam_prev = state.lambdas[K]
    bar_prev = state.lam_bar

    # the new ground block must outrun every cylinder visible on the frontier
    use = max(
        (
            len(s)
            for tau in core.level(l_prev)
            if is_prefix(eta, tau)
            for s in psi.visible(tau, t_prev).strings
        ),
        default=0,
    )
    m_next = max(m_prev + 1, use + 1)
    if m_next - m_prev > WINDOW_BITS:
        raise PreconditionError(
            f"the ground extension window spans {m_next - m_prev} bits; "
            f"the cap is {WINDOW_BITS}"
        )
    gap = bar_prev**2 / (4 * _cone_count(ambient, eta, l_prev) * 2**m_next)

    half = p.scale(Fraction(1, 2))
    need = _band_need(p, state.eps, l_low, l_mid, l_prev)
    found = None
    for t in range(t_prev, depth + 1):
        for l in range(max(t, l_prev + 1), depth + 1):
            good = [
                tau
                for tau in core.level(l)
                if is_prefix(eta, tau) and psi.unseen(tau, t) < gap
            ]
            if not good:
                continue
            spread = {}
            for sigma in top.level(l_prev):
                if not is_prefix(eta, sigma):
                    continue
                wit = decide_big(good, half, sigma, core)
                if isinstance(wit, BigWitness):
                    spread[sigma] = wit.tree
            if not spread:
                continue
            branches = {}
            for alpha in top.level(l_low):
                if not is_prefix(eta, alpha):
                    continue
                out = decide_big(frozenset(spread), need, alpha, top)
                if not isinstance(out, BigWitness):
                    branches = None
                    break
                branches[alpha] = out.tree
            if branches:
                found = (t, l, spread, branches)
                break
        if found:
            break
    if found is None:
        raise InsufficientDepthError(
            "insufficient functional depth: no stage and level spread an "
            "exactly-bushy selection with unseen test mass under the gap"
        )
    t_next, l_next, spread, branches = found

    used = sorted({leaf for tree in branches.values() for leaf in tree.leaves}, key=node_key)
    leaves_of = {sigma: tuple(sorted(spread[sigma].leaves, key=node_key)) for sigma in used}
    deep = sorted({tau for sigma in used for tau in leaves_of[sigma]}, key=node_key)

    hanging = max(psi.unseen(tau, t_next) for tau in deep)
    bar_next = (hanging + gap) / 2
    lam_next = bar_prev - bar_next

    increment = max(
        psi.visible(tau, t_next).measure - psi.visible(tau, t_prev).measure for tau in deep
    )
    rc = [
        CheckRecord("increment_bound", increment < bar_prev, increment, bar_prev),
        CheckRecord("gap_schedule", bar_next < gap, bar_next, gap),
        CheckRecord("future_mass", hanging < bar_next, hanging, bar_next),
    ]

    # ground blocks dominated by already-covered spreads are discarded
    vis_prev = {sigma: psi.visible(sigma, t_prev) for sigma in used}
    window = [rho_prev + s for s in all_bits(m_next - m_prev)]
    avoid = {rho: [s for s in used if not vis_prev[s].covers(rho)] for rho in window}
    picked = [
        rho
        for rho in window
        if Fraction(len(used) - len(avoid[rho]), len(used)) ** 4 < lam_prev
    ]
    dropped = Fraction(len(window) - len(picked), len(window))
    rc.append(CheckRecord("ground_markov", dropped**4 < lam_prev, dropped**4, lam_prev))
    if not picked:
        raise PreconditionError(
            "every ground extension is covered on too much of the spread"
        )

    vis_next = {tau: psi.visible(tau, t_next) for tau in deep}
    costs: dict = {}

    def branch_cost(sigma: Node, rho: str) -> Fraction:
        out = costs.get((sigma, rho))
        if out is None:
            taus = leaves_of[sigma]
            out = sum(cond_measure(vis_next[tau], rho) for tau in taus) / len(taus)
            costs[sigma, rho] = out
        return out

    rho_next, low = None, None
    for rho in picked:
        members = avoid[rho]
        mean = sum(branch_cost(sigma, rho) for sigma in members) / len(members)
        if low is None or mean < low:
            rho_next, low = rho, mean
    rc.append(CheckRecord("rho_expectation", low**4 < bar_prev**3, low**4, bar_prev**3))
    if not low**4 < bar_prev**3:
        raise PreconditionError(
            f"no ground extension achieves the expectation bound; the minimum is {low}"
        )

    kept = [s for s in avoid[rho_next] if branch_cost(s, rho_next) ** 4 < bar_prev**3]
    lost = Fraction(len(avoid[rho_next]) - len(kept), len(avoid[rho_next]))
    rc.append(CheckRecord("spread_markov", lost**4 < bar_prev, lost**4, bar_prev))

    kept_set = frozenset(kept)
    share = min(
        (
            Fraction(sum(1 for s in tree.leaves if s in kept_set), len(tree.leaves))
            for tree in branches.values()
        ),
        default=Fraction(0),
    )
    rc.append(CheckRecord("branch_fraction", share > Fraction(3, 4), share, Fraction(3, 4)))
    if not share > Fraction(3, 4):
        raise PreconditionError(
            f"the thinned spread keeps only {share} of a settled branch; "
            "the construction needs more than 3/4"
        )

    deep_kept = {}
    worst = Fraction(0)
    floor = Fraction(1)
    for sigma in kept:
        taus = leaves_of[sigma]
        sel = [
            tau for tau in taus if cond_measure(vis_next[tau], rho_next) ** 2 < lam_next
        ]
        deep_kept[sigma] = sel
        worst = max(worst, Fraction(len(taus) - len(sel), len(taus)))
        floor = min(floor, Fraction(len(sel), len(taus)))
    rc.append(CheckRecord("deep_markov", worst**4 < bar_prev, worst**4, bar_prev))
    rc.append(CheckRecord("deep_fraction", floor > Fraction(3, 4), floor, Fraction(3, 4)))
    if not floor > Fraction(3, 4):
        raise PreconditionError(
            f"a deep selection keeps only {floor} of its branches; "
            "the construction needs more than 3/4"
        )

    grown = {n for n in top.nodes if len(n) <= l_low}
    for tree in branches.values():
        pruned = _thin(tree, kept_set & frozenset(tree.leaves), state.eps)
        grown.update(pruned.nodes)
        for sigma in pruned.leaves:
            deeper = _thin(spread[sigma], deep_kept[sigma], state.eps)
            grown.update(deeper.nodes)
    tree_next = FiniteTree(frozenset(grown), ambient.bound, ambient.max_depth)

    settled = {n for n in top.nodes if len(n) <= l_low}
    drift = len(settled ^ {n for n in tree_next.nodes if len(n) <= l_low})
    rc.append(CheckRecord("untouched_below", drift == 0, drift, 0))

    out = RoundState(
        state.trees + (tree_next,),
        state.rhos + (rho_next,),
        state.lambdas + (lam_next,),
        bar_next,
        state.levels + (l_next,),
        state.times + (t_next,),
        state.eps,
    )
    records = verify_round_state(out, psi, ambient, core, p, q)
    trace = RoundTrace(
        round_index=len(state.rhos) - 1,
        t=t_next,
        level=l_next,
        rho=rho_next,
        lam=lam_next,
        checks=tuple(rc) + records,
    )
    return replace(out, trace=trace)


def assemble_avoider(
    states,
    psi: TestFunctional,
    ambient: FiniteTree,
    core: FiniteTree,
    p: LevelFn,
    q: LevelFn,
) -> tuple:
    """Fuse a run of round states into the settled tree and the avoided path.

    Consecutive states must extend one another and agree on every band that
    had already settled.  The result is the final tree cut at the last
    settled level, re-checked for bushiness, together with the ground
    string; no cylinder emitted along a surviving branch may sit on top of
    that string.
    """
    states = tuple(states)
    if not states:
        raise PreconditionError("need at least one round state")
    final = states[-1]
    if len(final.trees) < 2:
        raise PreconditionError("need at least one completed round")
    for a, b in zip(states, states[1:]):
        if (
            b.trees[: len(a.trees)] != a.trees
            or b.rhos[: len(a.rhos)] != a.rhos
            or b.lambdas[: len(a.lambdas)] != a.lambdas
            or b.levels[: len(a.levels)] != a.levels
            or b.times[: len(a.times)] != a.times
        ):
            raise VerificationError("round states do not extend one another")
    eta = final.eta
    K = len(final.trees) - 1
    for j in range(1, K + 1):
        # the band below lev(j-3) settled before round j ran
        boundary = _lev(final, j - 3)
        older = {n for n in final.trees[j - 1].nodes if len(n) <= boundary}
        newer = {n for n in final.trees[j].nodes if len(n) <= boundary}
        if older != newer:
            raise VerificationError(f"band mismatch between rounds {j - 1} and {j}")
    cut = _lev(final, K - 2)
    hat = final.trees[K].truncate(cut)
    for node in hat.nodes:
        if not is_prefix(eta, node) or len(node) >= cut:
            continue
        lvl = len(node)
        need = p(lvl) * final.eps(lvl) ** 3 / 8 - q(lvl)
        if not meets_threshold(len(hat.children(node)), need):
            raise VerificationError(f"assembled tree is too thin at {node}")
    ground = final.rhos[-1]
    t_last = final.times[-1]
    for leaf in sorted(hat.leaves, key=node_key):
        for s in psi.visible(leaf, t_last).strings:
            if ground.startswith(s):
                raise VerificationError(
                    f"the avoided path lies in a cylinder emitted along {leaf}"
                )
    return hat, ground


def build_covering_test(
    ambient: FiniteTree,
    core: FiniteTree,
    psi: ValueFunctional,
    p: LevelFn,
    q: LevelFn,
    p_hat: LevelFn,
    rounds: int,
    seed: int = 0,
) -> tuple:
    """Wrap the functional's outputs into a test with summable components.

    Round n confines the outputs above every live frontier node to a
    cylinder set claiming at most half of the 2^-n bound, split evenly
    across the frontier, then grows the tree through the captured
    branches; the union over the frontier is one test component.
    rounds=0 returns the bare stem path and the empty test.
    """
    eta = core.stem
    tree = FiniteTree(close_prefixes([eta]), ambient.bound, ambient.max_depth)
    components = []
    for n in range(rounds):
        frontier = [leaf for leaf in sorted(tree.leaves, key=node_key) if leaf in core]
        if not frontier:
            raise PreconditionError(f"no live frontier at round {n}")
        share = Fraction(1, 2 ** (n + 1) * len(frontier))
        caught = CylinderSet()
        grown = set(tree.nodes)
        for sigma in frontier:
            try:
                res = capture_small_measure(
                    ambient, core, psi, sigma, share, p, q, p_hat, seed=seed
                )
            except CalcError as err:
                message = f"round {n}, node {sigma}: {err}"
                try:
                    wrapped = type(err)(message)
                except TypeError:
                    wrapped = CalcError(message)
                raise wrapped from err
            caught = caught.union(res.v_star)
            grown.update(res.tree.nodes)
        if not caught.measure <= Fraction(1, 2**n):
            raise InternalError(f"component {n} exceeds its measure bound")
        components.append(caught)
        tree = FiniteTree(frozenset(grown), ambient.bound, ambient.max_depth)
    for leaf in sorted(tree.leaves, key=node_key):
        if leaf not in core.nodes:
            continue
        image = psi.output(leaf)
        for n, component in enumerate(components):
            if not component.covers(image):
                raise InternalError(f"leaf {leaf} escapes component {n}")
    return tree, SchnorrTest(tuple(components))


@dataclass(frozen=True)
class CoveringCertificate:
    """The grown tree and its covering test, bundled for file round-trips."""

    tree: FiniteTree
    test: SchnorrTest


@dataclass(frozen=True)
class Case1:
    """Divergence forced: below xi, output bit m converges only on a set
    the table refutes, and the escape table bounds everything pruned away."""

    xi: Node
    m: int
    subtree: FiniteTree
    conv_table: SmallTable
    escape_table: SmallTable


@dataclass(frozen=True)
class Case2:
    """Totality forced: every present bit converges on a big set above
    every core node, and the staged tree carries the computation."""

    staged: StagedTotality
    depth: int


def classify_condition(
    cond: Condition,
    psi: ValueFunctional,
    p_hat: LevelFn,
    eps: LevelFn,
):
    """Decide which side of the forcing dichotomy a condition falls on.

    Searches output bits, then core nodes in level order, for a spot where
    the set of branches converging on that bit fails to be p_hat-big; the
    first hit is returned as Case1 with re-verified smallness certificates.
    If no bit diverges anywhere, the staged totality tree is grown through
    every bit the functional carries (Case2).
    """
    ambient, core = cond.ambient, cond.core
    p, q, eta = cond.p, cond.q, cond.eta
    depth = ambient.max_depth
    for m in range(len(eta), depth + 1):
        # the split chain at a single rate step: p eps > 2 p_hat, p_hat eps > q >= 1
        if not q(m) >= 1:
            raise PreconditionError(f"need q >= 1 at level {m}")
        if not p_hat(m) * eps(m) > q(m):
            raise PreconditionError(f"need p_hat*eps > q at level {m}")
        if not p(m) * eps(m) > 2 * p_hat(m):
            raise PreconditionError(f"need p*eps > 2*p_hat at level {m}")
    for m in range(max(psi.max_output_len, 1)):
        conv = frozenset(n for n in ambient.nodes if psi.converges(n, m + 1))
        for xi in sorted((n for n in core.nodes if is_prefix(eta, n)), key=node_key):
            table = decide_big(conv, p_hat, xi, ambient)
            if isinstance(table, SmallTable):
                return _force_divergent(cond, p_hat, xi, m, conv, table)
    last = psi.max_output_len - 1
    try:
        staged = stage_totality(ambient, core, psi, p_hat, q, last)
    except PreconditionError as err:
        raise InsufficientDepthError(f"classification is depth-limited: {err}") from err
    return Case2(staged=staged, depth=last)


def _force_divergent(
    cond: Condition,
    p_hat: LevelFn,
    xi: Node,
    m: int,
    conv: frozenset,
    table: SmallTable,
) -> Case1:
    """Grow the pruned subtree where bit m stays small, and certify it."""
    ambient, core, q = cond.ambient, cond.core, cond.q
    members = {xi}
    for node in sorted(core.nodes, key=node_key):
        if len(node) <= len(xi) or not is_prefix(xi, node):
            continue
        if node[:-1] in members and isinstance(
            decide_big(conv, p_hat, node, ambient), SmallTable
        ):
            members.add(node)
    subtree = FiniteTree(close_prefixes(members), ambient.bound, ambient.max_depth)
    escape = frozenset(
        n for n in ambient.nodes if is_prefix(xi, n) and n not in subtree.nodes
    )
    table_out = decide_big(escape, p_hat + q, xi, ambient)
    if not isinstance(table_out, SmallTable):
        raise PreconditionError(
            "the pruned-away part is big over the divergence point; the "
            "condition's smallness hypothesis fails"
        )
    verify_small_table(table, conv, p_hat, xi, ambient)
    verify_small_table(table_out, escape, p_hat + q, xi, ambient)
    return Case1(xi=xi, m=m, subtree=subtree, conv_table=table, escape_table=table_out)
