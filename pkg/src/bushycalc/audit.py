"""Independent re-checking of emitted certificates.

audit_certificate pairs a certificate with the instance that produced it
and returns a failure reason, or None when everything holds up.  The
auditors rebuild target sets, preimages, frontiers and rate arithmetic
from the instance and lean only on the verifying primitives (witness and
table checks, exhaustive family verification, state re-verification); the
deciding and producing code paths never run here.
"""

from __future__ import annotations

from fractions import Fraction

from .bigness import (
    BigWitness,
    SmallTable,
    SplitResult,
    meets_threshold,
    verify_big_witness,
    verify_small_table,
)
from .errors import PreconditionError, VerificationError
from .hashfam import HashFamily, verify_hash_family
from .schnorr import (
    Case1,
    Case2,
    CoveringCertificate,
    RoundState,
    assemble_avoider,
    verify_round_state,
)
from .splitcalc import (
    CalcOutcome,
    CaptureResult,
    ComputableCert,
    DisjointCert,
    Inconclusive,
    JSplitInstance,
    NonTotalCert,
    SplitStepResult,
    length_n_set,
    verify_split_certificate,
)
from .thinning import PruneResult
from .trees import (
    CylinderSet,
    FiniteTree,
    LevelFn,
    all_bits,
    close_prefixes,
    is_prefix,
    node_key,
)


def _landing(psi, ambient: FiniteTree, n: int, V: CylinderSet) -> frozenset:
    """Ambient nodes whose first n output bits fall inside V."""
    hit = set()
    for node in ambient.nodes:
        bits = psi.restrict(node, n)
        if bits is not None and V.covers(bits):
            hit.add(node)
    return frozenset(hit)


def _comparable_part(tree: FiniteTree, eta) -> FiniteTree:
    kept = frozenset(n for n in tree.nodes if is_prefix(n, eta) or is_prefix(eta, n))
    return FiniteTree(kept, tree.bound, tree.max_depth)


def _wrong_type(expected: str, cert) -> str:
    return f"expected {expected}, got {type(cert).__name__}"


# ---------------------------------------------------------------------------
# Bigness, splitting, thinning


def _audit_bigness(inst, cert) -> str | None:
    if isinstance(cert, BigWitness):
        try:
            verify_big_witness(cert, inst.targets, inst.p, inst.root, inst.ambient)
        except VerificationError as err:
            return str(err)
        return None
    if isinstance(cert, SmallTable):
        try:
            verify_small_table(cert, inst.targets, inst.p, inst.root, inst.ambient)
        except VerificationError as err:
            return str(err)
        return None
    return _wrong_type("a bigness verdict", cert)


def _audit_split(inst, cert) -> str | None:
    if not isinstance(cert, SplitResult):
        return _wrong_type("a split result", cert)
    if cert.side == "left":
        targets, rate = inst.B, inst.p
    elif cert.side == "right":
        targets, rate = inst.C, inst.q
    else:
        return f"unknown side {cert.side!r}"
    try:
        verify_big_witness(cert.witness, targets, rate, inst.root, inst.ambient)
    except VerificationError as err:
        return f"{cert.side} witness: {err}"
    return None


def _audit_thin(inst, cert) -> str | None:
    if not isinstance(cert, FiniteTree):
        return _wrong_type("a thinned tree", cert)
    orig = inst.tree
    stem = orig.stem
    if not cert.nodes <= orig.nodes:
        return "thinned tree is not contained in the original"
    if stem not in cert:
        return "thinned tree lost the original stem"
    targets = frozenset(inst.targets)
    for leaf in cert.leaves:
        if leaf not in targets:
            return f"surviving leaf {leaf} is outside the target set"
    # Original branching per level; the kept fraction is measured against it.
    leaf_level = max(len(leaf) for leaf in orig.leaves)
    for level in range(len(stem), leaf_level):
        widths = {len(orig.children(n)) for n in orig.level(level) if is_prefix(stem, n)}
        if len(widths) != 1:
            return f"original tree does not branch uniformly at level {level}"
        width = widths.pop()
        e = inst.eps(level)
        for node in cert.level(level):
            if not is_prefix(stem, node):
                continue
            kept = len(cert.children(node))
            if not Fraction(kept) > e * width:
                return (
                    f"node {node} keeps {kept} of {width} children, "
                    f"not above the eps share {e * width}"
                )
    return None


# ---------------------------------------------------------------------------
# Hash families


def _audit_hash(inst, fam) -> str | None:
    if not isinstance(fam, HashFamily):
        return _wrong_type("a hash family", fam)
    if fam.epsilon != inst.eps or fam.delta != inst.delta or fam.k != inst.k:
        return "family rates differ from the instance"
    if len(fam.sets) != inst.n + 1:
        return f"family has {len(fam.sets)} sets, instance asked for {inst.n + 1}"
    if fam.ground_bits > inst.max_bits:
        return f"ground width {fam.ground_bits} exceeds the cap {inst.max_bits}"
    violation = verify_hash_family(fam)
    if violation is not None:
        return (
            f"{violation.kind} violation at {violation.indices}: "
            f"{violation.value} against bound {violation.bound}"
        )
    return None


# ---------------------------------------------------------------------------
# The membership calculus

_WANTED = {
    2: (True, True),
    3: (True, True),
    4: (True, False),
    5: (True, False),
    6: (False, False),
}


def _match_vcert(cert, kind: str, strings: frozenset, rate: LevelFn, n: int) -> str | None:
    if cert.kind != kind:
        return f"certificate class is {cert.kind!r}, expected {kind!r}"
    if cert.n != n:
        return f"certificate is at length {cert.n}, expected {n}"
    if frozenset(length_n_set(cert.V, n).strings) != strings:
        return "certified cylinder set differs from the item's"
    if cert.q != rate:
        return "certified budget differs from the item's"
    return None


def _vcert_evidence(inst, cert) -> str | None:
    """Re-verify one membership verdict against a locally rebuilt preimage."""
    if cert.kind == "plain":
        S = _landing(inst.psi, inst.ambient, cert.n, cert.V)
        big_means_member = True
    else:
        escape = cert.V.complement_in(cert.n)
        S = _landing(inst.psi, inst.ambient, cert.n, escape)
        big_means_member = False
    if cert.member == big_means_member:
        if not isinstance(cert.evidence, BigWitness):
            return "verdict needs a bigness witness as evidence"
        try:
            verify_big_witness(cert.evidence, S, cert.q, inst.eta, inst.ambient)
        except VerificationError as err:
            return f"evidence fails: {err}"
    else:
        if not isinstance(cert.evidence, SmallTable):
            return "verdict needs a smallness table as evidence"
        try:
            verify_small_table(cert.evidence, S, cert.q, inst.eta, inst.ambient)
        except VerificationError as err:
            return f"evidence fails: {err}"
    return None


def _audit_vcalc(scn, out) -> str | None:
    if not isinstance(out, CalcOutcome):
        return _wrong_type("a calculus outcome", out)
    item, inst = scn.item, scn.inst
    if out.item != item:
        return f"outcome is for item {out.item}, scenario asked for {item}"
    n = inst.n
    A = frozenset(length_n_set(inst.V, n).strings)
    B = frozenset(length_n_set(inst.V2, n).strings)
    q, q2 = inst.q, inst.q2
    if item == 1:
        hyp_spec: tuple = ()
        concl_spec = (("plain", A, q), ("tilde", frozenset(all_bits(n)) - A, q))
    elif item == 2:
        hyp_spec = (("tilde", A, q), ("tilde", B, q2))
        concl_spec = (("tilde", A & B, q + q2),)
    elif item == 3:
        hyp_spec = (("tilde", A, q), ("plain", B, q2))
        concl_spec = (("plain", A & B, q2 - q),)
    elif item == 4:
        hyp_spec = (("tilde", A, q), ("plain", B, q2))
        concl_spec = (("tilde", A - B, q + q2),)
    elif item == 5:
        hyp_spec = (("tilde", A, q), ("tilde", B, q2))
        concl_spec = (("plain", A - B, q2 - q),)
    elif item == 6:
        hyp_spec = (("plain", A, q), ("plain", B, q2))
        concl_spec = (("plain", A | B, q + q2),)
    else:
        return f"no calculus item {item}"
    if len(out.hypothesis) != len(hyp_spec):
        return f"item {item} takes {len(hyp_spec)} hypotheses, outcome has {len(out.hypothesis)}"
    if len(out.conclusion) != len(concl_spec):
        return f"item {item} yields {len(concl_spec)} conclusions, outcome has {len(out.conclusion)}"
    wanted = _WANTED.get(item, ())
    for pos, (cert, (kind, strings, rate)) in enumerate(zip(out.hypothesis, hyp_spec)):
        reason = _match_vcert(cert, kind, strings, rate, n) or _vcert_evidence(inst, cert)
        if reason:
            return f"hypothesis {pos}: {reason}"
        if cert.member != wanted[pos]:
            return f"hypothesis {pos} is {cert.member}, item {item} requires {wanted[pos]}"
    for pos, (cert, (kind, strings, rate)) in enumerate(zip(out.conclusion, concl_spec)):
        reason = _match_vcert(cert, kind, strings, rate, n) or _vcert_evidence(inst, cert)
        if reason:
            return f"conclusion {pos}: {reason}"
    if item == 1:
        expected = out.conclusion[0].member != out.conclusion[1].member
    elif item == 6:
        expected = not out.conclusion[0].member
    else:
        expected = out.conclusion[0].member
    if out.holds != expected:
        return f"holds flag {out.holds} contradicts the certified memberships"
    return None


# ---------------------------------------------------------------------------
# Measure capture


def _audit_capture(inst, res) -> str | None:
    if not isinstance(res, CaptureResult):
        return _wrong_type("a capture result", res)
    lam = inst.lam
    got = res.v_star.measure
    if not got < lam:
        return f"captured measure {got} is not below {lam}"
    k, power = 1, 1 - lam
    while power >= lam:
        k += 1
        power *= 1 - lam
    if res.k != k:
        return f"recorded exponent {res.k}, the least admissible is {k}"
    if res.stem != tuple(inst.rho):
        return f"capture tree is rooted at {res.stem}, not at {tuple(inst.rho)}"
    if not res.tree.nodes <= inst.ambient.nodes:
        return "capture tree leaves the ambient tree"
    if res.stem not in res.tree:
        return "capture tree lost its stem"
    for node in res.tree.nodes:
        if not is_prefix(res.stem, node):
            continue
        kids = res.tree.children(node)
        if kids:
            if not meets_threshold(len(kids), inst.p_hat(len(node))):
                return f"capture tree is too thin at {node}"
        else:
            bits = inst.psi.restrict(node, res.ground_bits)
            if bits is None:
                return f"leaf {node} computes fewer than {res.ground_bits} bits"
            if not res.v_star.covers(bits):
                return f"leaf {node} computes {bits!r} outside the captured set"
    return None


# ---------------------------------------------------------------------------
# The splitting recursion


def _audit_jsplit(sc, cert) -> str | None:
    if not isinstance(cert, (DisjointCert, NonTotalCert, ComputableCert, Inconclusive)):
        return _wrong_type("a splitting certificate", cert)
    return verify_split_certificate(
        cert, list(sc.instances), sc.p, sc.q, sc.q_prime, sc.q_dprime, sc.q_i,
        CylinderSet.whole(), sc.n_star,
    )


def _audit_prune(ambient: FiniteTree, pr, rates) -> str | None:
    if not isinstance(pr, PruneResult):
        return _wrong_type("a pruning result", pr)
    if (pr.p, pr.q, pr.q2) != rates:
        return "recorded pruning rates differ from the step's"
    if not pr.tree.nodes <= ambient.nodes:
        return "pruned tree leaves the ambient tree"
    if pr.stem not in pr.tree:
        return "pruned tree lost its stem"
    residual = pr.p - pr.q - pr.q2
    discarded = frozenset(ambient.nodes - pr.tree.nodes)
    kept = frozenset(n for n in pr.tree.nodes if is_prefix(pr.stem, n))
    for node in kept:
        if len(node) < ambient.max_depth:
            if not meets_threshold(len(pr.tree.children(node)), residual(len(node))):
                return f"kept node {node} is too thin for the residual rate"
    covered = {node for node, _ in pr.small_tables}
    missing = kept - covered
    if missing:
        return f"no cut table at kept node {sorted(missing, key=node_key)[0]}"
    for node, table in pr.small_tables:
        if node not in pr.tree:
            return f"cut table anchored at {node}, which was not kept"
        try:
            verify_small_table(table, discarded, pr.q + pr.q2, node, ambient)
        except VerificationError as err:
            return f"cut table at {node}: {err}"
    return None


def _audit_split_step(sc, res) -> str | None:
    if not isinstance(res, SplitStepResult):
        return _wrong_type("a frontier step result", res)
    cond, psi = sc.cond, sc.psi
    frontier = [tuple(e) for e in sc.frontier]
    j = len(frontier)
    zero = LevelFn.const(0)
    whole = CylinderSet.whole()

    if res.kind == "inconclusive":
        return None

    if res.kind == "divergence":
        if not 0 <= res.index < j:
            return f"divergence names frontier position {res.index} of {j}"
        head = res.detail.split(" ", 1)[0]
        if not head.isdigit():
            return f"divergence detail {res.detail!r} does not lead with a bit count"
        n = int(head)
        thin = sc.p_hat.scale(2 * j)
        reason = _audit_prune(cond.ambient, res.certificate, (cond.p, cond.q, thin))
        if reason:
            return reason
        pr = res.certificate
        eta = frontier[res.index]
        if not (is_prefix(eta, pr.stem) or is_prefix(pr.stem, eta)):
            return f"pruned stem {pr.stem} is not comparable with {eta}"
        if res.eta_prime != pr.stem:
            return "extension root differs from the pruned stem"
        for node in pr.tree.nodes:
            if psi.converges(node, n):
                return f"surviving node {node} still computes {n} bits"
        return None

    instances = [
        JSplitInstance(psi, cond.ambient, _comparable_part(cond.core, eta), eta)
        for eta in frontier
    ]

    if res.kind == "split":
        if not isinstance(res.certificate, DisjointCert):
            return _wrong_type("a disjointness certificate", res.certificate)
        reason = verify_split_certificate(
            res.certificate, instances, cond.p, sc.p_hat, zero, cond.q, cond.q, whole, 0,
        )
        if reason:
            return reason
        by_index = {a.index: a for a in res.certificate.assignments}
        if sorted(part.index for part in res.parts) != sorted(by_index):
            return "parts do not match the assignments one for one"
        half = sc.p_hat.scale(Fraction(1, 2))
        for part in res.parts:
            a = by_index[part.index]
            if part.V != a.V or part.n != a.n:
                return f"part {part.index} disagrees with its assignment"
            if part.eta != frontier[part.index]:
                return f"part {part.index} is rooted off its frontier node"
            landed = _landing(psi, cond.ambient, part.n, part.V) & cond.core.nodes
            try:
                verify_big_witness(
                    BigWitness(part.eta, part.tree, half, landed),
                    landed, half, part.eta, cond.ambient,
                )
            except VerificationError as err:
                return f"part {part.index}: {err}"
        return None

    if res.kind in ("nontotal", "computable"):
        cert = res.certificate
        expected = NonTotalCert if res.kind == "nontotal" else ComputableCert
        if not isinstance(cert, expected):
            return _wrong_type(expected.__name__, cert)
        if res.index != cert.index:
            return "result index differs from the certificate's"
        reason = verify_split_certificate(
            cert, instances, cond.p, sc.p_hat, zero, cond.q, cond.q, whole, 0,
        )
        if reason:
            return reason
        if res.kind == "nontotal":
            meet = sorted(cert.s_nodes & cert.tree.nodes, key=node_key)
            if not meet or res.eta_prime != meet[0]:
                return "extension root is not the first surviving escape node"
        else:
            if res.eta_prime != cert.tree.stem:
                return "extension root differs from the pruned stem"
        return None

    return f"unknown step kind {res.kind!r}"


# ---------------------------------------------------------------------------
# Avoidance rounds, covering tests, classification


def _audit_round(inst, state) -> str | None:
    if not isinstance(state, RoundState):
        return _wrong_type("a round state", state)
    if len(state.trees) != inst.rounds + 1:
        return f"state carries {len(state.trees) - 1} rounds, scenario ran {inst.rounds}"
    try:
        verify_round_state(state, inst.psi, inst.ambient, inst.core, inst.p, inst.q, strict=True)
    except VerificationError as err:
        return str(err)
    try:
        assemble_avoider((state,), inst.psi, inst.ambient, inst.core, inst.p, inst.q)
    except VerificationError as err:
        return f"assembly fails: {err}"
    return None


def _audit_covering(inst, cert) -> str | None:
    if not isinstance(cert, CoveringCertificate):
        return _wrong_type("a covering certificate", cert)
    components = cert.test.components
    if len(components) != inst.rounds:
        return f"test has {len(components)} components, scenario ran {inst.rounds} rounds"
    for n, component in enumerate(components):
        if not component.measure <= Fraction(1, 2**n):
            return f"component {n} has measure {component.measure}, above 2^-{n}"
    if not cert.tree.nodes <= inst.ambient.nodes:
        return "grown tree leaves the ambient tree"
    if inst.core.stem not in cert.tree:
        return "grown tree lost the core stem"
    live = [leaf for leaf in cert.tree.leaves if leaf in inst.core.nodes]
    if inst.rounds and not live:
        return "no leaf of the grown tree remains in the core"
    for leaf in live:
        image = inst.psi.output(leaf)
        for n, component in enumerate(components):
            if not component.covers(image):
                return f"leaf {leaf} escapes component {n}"
    return None


def _audit_case1(inst, c: Case1) -> str | None:
    cond = inst.cond
    ambient = cond.ambient
    conv = frozenset(n for n in ambient.nodes if inst.psi.converges(n, c.m + 1))
    try:
        verify_small_table(c.conv_table, conv, inst.p_hat, c.xi, ambient)
    except VerificationError as err:
        return f"convergence table: {err}"
    if c.xi not in c.subtree:
        return "divergence point is missing from the grown subtree"
    if not c.subtree.nodes <= ambient.nodes:
        return "grown subtree leaves the ambient tree"
    for node in c.subtree.nodes:
        if len(node) > len(c.xi) and is_prefix(c.xi, node) and node not in cond.core:
            return f"grown subtree reaches {node}, which is outside the core"
    escape = frozenset(
        n for n in ambient.nodes if is_prefix(c.xi, n) and n not in c.subtree.nodes
    )
    try:
        verify_small_table(c.escape_table, escape, inst.p_hat + cond.q, c.xi, ambient)
    except VerificationError as err:
        return f"escape table: {err}"
    return None


def _audit_case2(inst, c: Case2) -> str | None:
    cond, psi = inst.cond, inst.psi
    ambient, core = cond.ambient, cond.core
    stem = core.stem
    if c.depth != psi.max_output_len - 1:
        return f"recorded depth {c.depth}, functional carries {psi.max_output_len} bits"
    staged = c.staged
    if len(staged.stages) != c.depth + 1:
        return f"{len(staged.stages)} stages recorded for depth {c.depth}"
    if not staged.tree.nodes <= ambient.nodes:
        return "staged tree leaves the ambient tree"
    nodes = set(close_prefixes([stem]))
    frontier: list = [stem]
    for s, rec in enumerate(staged.stages):
        if rec.stage != s:
            return f"stage {s} recorded as {rec.stage}"
        if rec.frontier != tuple(sorted(frontier, key=node_key)):
            return f"stage {s} frontier differs from the recomputed one"
        attached = set(rec.attached)
        claimed: set = set()
        next_frontier = []
        for sigma in rec.frontier:
            if sigma not in core:
                continue
            local = {n for n in attached if is_prefix(sigma, n)}
            if sigma not in local:
                return f"stage {s} attaches nothing over {sigma}"
            claimed |= local
            for node in local:
                kids = [c2 for c2 in local if len(c2) == len(node) + 1 and c2[:-1] == node]
                if kids:
                    if not meets_threshold(len(kids), inst.p_hat(len(node))):
                        return f"stage {s} growth is too thin at {node}"
                else:
                    if not psi.converges(node, s + 1):
                        return f"stage {s} leaf {node} lacks {s + 1} bits"
                    next_frontier.append(node)
        if claimed != attached:
            stray = sorted(attached - claimed, key=node_key)[0]
            return f"stage {s} attaches stray node {stray}"
        if not next_frontier:
            return f"stage {s} leaves no surviving frontier"
        nodes.update(attached)
        frontier = next_frontier
    if staged.frontier != tuple(sorted(frontier, key=node_key)):
        return "final frontier differs from the recomputed one"
    if staged.tree.nodes != frozenset(nodes):
        return "staged tree differs from the accumulated growth"
    for node in staged.frontier:
        if not psi.converges(node, c.depth + 1):
            return f"final frontier node {node} lacks {c.depth + 1} bits"
    return None


def _audit_classify(inst, cert) -> str | None:
    if isinstance(cert, Case1):
        return _audit_case1(inst, cert)
    if isinstance(cert, Case2):
        return _audit_case2(inst, cert)
    return _wrong_type("a classification case", cert)


# ---------------------------------------------------------------------------

_AUDITORS = {
    "bigness": _audit_bigness,
    "split": _audit_split,
    "thin": _audit_thin,
    "hash": _audit_hash,
    "vcalc": _audit_vcalc,
    "capture": _audit_capture,
    "jsplit": _audit_jsplit,
    "split-step": _audit_split_step,
    "schnorr-round": _audit_round,
    "covering-test": _audit_covering,
    "classify": _audit_classify,
}


def audit_certificate(kind: str, instance, cert) -> str | None:
    """Re-check a certificate against its instance; None means it holds up."""
    try:
        auditor = _AUDITORS[kind]
    except KeyError:
        raise PreconditionError(f"no auditor for scenario kind {kind!r}") from None
    return auditor(instance, cert)
