"""JSON codecs for every instance, certificate and trace the CLI touches.

Rationals are ["numerator", "denominator"] string pairs (strings because
denominators routinely pass 2^53), nodes are arrays of naturals, level
functions are {"table": [...], "tail": ...}, trees are {"nodes", "bound",
"maxDepth"}, cylinder sets are arrays of bit strings, and functionals are
{"entries": [[node, "bits", stage], ...]}.  Compound objects carry a
"$kind" discriminator so certificate files round-trip through loads
without external context.  dumps output is canonical: sorted keys,
two-space indent, trailing newline; identical objects give identical
bytes.
"""
from __future__ import annotations

import json
from fractions import Fraction

from .bigness import BigWitness, SmallTable, SplitResult
from .errors import PreconditionError
from .functionals import ValueFunctional
from .generators import (
    BignessInstance,
    CalcScenario,
    CaptureInstance,
    ClassifyInstance,
    CoveringInstance,
    HashInstance,
    JSplitScenario,
    RoundScenario,
    SplitInstance,
    SplitStepScenario,
    ThinInstance,
)
from .hashfam import HashFamily, HashViolation, sampling_density
from .schnorr import (
    Case1,
    Case2,
    CheckRecord,
    CoveringCertificate,
    RoundState,
    RoundTrace,
    TestFunctional,
)
from .splitcalc import (
    Assignment,
    CalcInstance,
    CalcOutcome,
    CaptureResult,
    ComputableCert,
    Condition,
    DisjointCert,
    Inconclusive,
    JSplitInstance,
    NonTotalCert,
    SplitPart,
    SplitStepResult,
    VCert,
)
from .thinning import PruneResult, StagedTotality, StageRecord
from .trees import CylinderSet, FiniteTree, LevelFn, SchnorrTest, node_key


def enc_frac(x) -> list:
    x = Fraction(x)
    return [str(x.numerator), str(x.denominator)]


def dec_frac(v) -> Fraction:
    if not (isinstance(v, list) and len(v) == 2):
        raise PreconditionError(f"malformed rational {v!r}")
    return Fraction(int(v[0]), int(v[1]))


def enc_node(node) -> list:
    return [int(b) for b in node]


def dec_node(v) -> tuple:
    return tuple(int(b) for b in v)


def enc_levelfn(f: LevelFn) -> dict:
    return {"table": [enc_frac(v) for v in f.values], "tail": enc_frac(f.tail)}


def dec_levelfn(v) -> LevelFn:
    return LevelFn(tuple(dec_frac(x) for x in v["table"]), dec_frac(v["tail"]))


def enc_tree(t: FiniteTree) -> dict:
    return {
        "nodes": [enc_node(n) for n in sorted(t.nodes, key=node_key)],
        "bound": enc_levelfn(t.bound),
        "maxDepth": t.max_depth,
    }


def dec_tree(v) -> FiniteTree:
    return FiniteTree(
        frozenset(dec_node(n) for n in v["nodes"]),
        dec_levelfn(v["bound"]),
        int(v["maxDepth"]),
    )


def enc_cyl(V: CylinderSet) -> list:
    return list(V)


def dec_cyl(v) -> CylinderSet:
    return CylinderSet.of(str(s) for s in v)


def enc_vfn(psi: ValueFunctional) -> dict:
    return {"entries": [[enc_node(n), bits, stage] for n, bits, stage in psi.entries]}


def dec_vfn(v) -> ValueFunctional:
    return ValueFunctional(
        tuple((dec_node(n), str(bits), int(stage)) for n, bits, stage in v["entries"])
    )


def enc_schnorr_test(test: SchnorrTest) -> dict:
    return {"components": [enc_cyl(c) for c in test.components]}


def dec_schnorr_test(v) -> SchnorrTest:
    return SchnorrTest(tuple(dec_cyl(c) for c in v["components"]))


def enc_node_set(nodes) -> list:
    return [enc_node(n) for n in sorted(nodes, key=node_key)]


def dec_node_set(v) -> frozenset:
    return frozenset(dec_node(n) for n in v)


def _enc_tables(tables) -> list:
    return [[enc_node(n), _body(tab)] for n, tab in tables]


def _dec_tables(v) -> tuple:
    return tuple((dec_node(n), decode(tab)) for n, tab in v)


def enc_trace(trace: RoundTrace) -> dict:
    return {
        "round": trace.round_index,
        "t": trace.t,
        "l": trace.level,
        "rho": trace.rho,
        "lambda": enc_frac(trace.lam),
        "checks": [
            {
                "name": c.name,
                "ok": c.ok,
                "lhs": c.lhs if isinstance(c.lhs, int) else enc_frac(c.lhs),
                "rhs": c.rhs if isinstance(c.rhs, int) else enc_frac(c.rhs),
            }
            for c in trace.checks
        ],
    }


def _dec_side(v):
    return v if isinstance(v, int) else dec_frac(v)


def dec_trace(v) -> RoundTrace:
    return RoundTrace(
        round_index=int(v["round"]),
        t=int(v["t"]),
        level=int(v["l"]),
        rho=str(v["rho"]),
        lam=dec_frac(v["lambda"]),
        checks=tuple(
            CheckRecord(c["name"], bool(c["ok"]), _dec_side(c["lhs"]), _dec_side(c["rhs"]))
            for c in v["checks"]
        ),
    )


# ---------------------------------------------------------------------------
# tagged registry

_ENC: dict = {}
_DEC: dict = {}


def _reg(tag: str, cls: type, enc, dec) -> None:
    _ENC[cls] = (tag, enc)
    _DEC[tag] = dec


def encode(obj) -> dict:
    entry = _ENC.get(type(obj))
    if entry is None:
        raise PreconditionError(f"no codec for {type(obj).__name__}")
    tag, enc = entry
    body = enc(obj)
    body["$kind"] = tag
    return body


def _body(obj) -> dict:
    return encode(obj)


def decode(data):
    if not isinstance(data, dict) or "$kind" not in data:
        raise PreconditionError("expected an object with a $kind discriminator")
    dec = _DEC.get(data["$kind"])
    if dec is None:
        raise PreconditionError(f"unknown kind {data['$kind']!r}")
    return dec(data)


_reg(
    "big-witness",
    BigWitness,
    lambda w: {
        "root": enc_node(w.root),
        "tree": enc_tree(w.tree),
        "p": enc_levelfn(w.p),
        "targets": enc_node_set(w.targets),
    },
    lambda v: BigWitness(
        dec_node(v["root"]), dec_tree(v["tree"]), dec_levelfn(v["p"]),
        dec_node_set(v["targets"]),
    ),
)

_reg(
    "small-table",
    SmallTable,
    lambda t: {
        "root": enc_node(t.root),
        "p": enc_levelfn(t.p),
        "labels": [[enc_node(n), "big" if big else "small"] for n, big in t.labels],
    },
    lambda v: SmallTable(
        dec_node(v["root"]), dec_levelfn(v["p"]),
        tuple((dec_node(n), lab == "big") for n, lab in v["labels"]),
    ),
)

_reg(
    "split-result",
    SplitResult,
    lambda r: {"side": r.side, "witness": _body(r.witness)},
    lambda v: SplitResult(str(v["side"]), decode(v["witness"])),
)

_reg(
    "covering-certificate",
    CoveringCertificate,
    lambda c: {"tree": enc_tree(c.tree), "test": enc_schnorr_test(c.test)},
    lambda v: CoveringCertificate(dec_tree(v["tree"]), dec_schnorr_test(v["test"])),
)

_reg(
    "vcert",
    VCert,
    lambda c: {
        "class": c.kind,
        "member": c.member,
        "V": enc_cyl(c.V),
        "n": c.n,
        "q": enc_levelfn(c.q),
        "evidence": _body(c.evidence),
    },
    lambda v: VCert(
        str(v["class"]), bool(v["member"]), dec_cyl(v["V"]), int(v["n"]),
        dec_levelfn(v["q"]), decode(v["evidence"]),
    ),
)

_reg(
    "calc-instance",
    CalcInstance,
    lambda i: {
        "psi": enc_vfn(i.psi),
        "ambient": enc_tree(i.ambient),
        "eta": enc_node(i.eta),
        "n": i.n,
        "V": enc_cyl(i.V),
        "V2": enc_cyl(i.V2),
        "q": enc_levelfn(i.q),
        "q2": enc_levelfn(i.q2),
    },
    lambda v: CalcInstance(
        dec_vfn(v["psi"]), dec_tree(v["ambient"]), dec_node(v["eta"]), int(v["n"]),
        dec_cyl(v["V"]), dec_cyl(v["V2"]), dec_levelfn(v["q"]), dec_levelfn(v["q2"]),
    ),
)

_reg(
    "calc-outcome",
    CalcOutcome,
    lambda o: {
        "item": o.item,
        "holds": o.holds,
        "hypothesis": [_body(c) for c in o.hypothesis],
        "conclusion": [_body(c) for c in o.conclusion],
    },
    lambda v: CalcOutcome(
        int(v["item"]), bool(v["holds"]),
        tuple(decode(c) for c in v["hypothesis"]),
        tuple(decode(c) for c in v["conclusion"]),
    ),
)

_reg(
    "capture-result",
    CaptureResult,
    lambda r: {
        "vStar": enc_cyl(r.v_star),
        "tree": enc_tree(r.tree),
        "groundBits": r.ground_bits,
        "k": r.k,
        "level": r.level,
        "direct": r.direct,
        "familySize": r.family_size,
        "stem": enc_node(r.stem),
    },
    lambda v: CaptureResult(
        dec_cyl(v["vStar"]), dec_tree(v["tree"]), int(v["groundBits"]), int(v["k"]),
        None if v["level"] is None else int(v["level"]), bool(v["direct"]),
        int(v["familySize"]), dec_node(v["stem"]),
    ),
)

# hat_epsilon is a deterministic function of (epsilon, delta, k), so the
# file sticks to the declared keys and decode recomputes it.
_reg(
    "hash-family",
    HashFamily,
    lambda f: {
        "N": f.ground_bits,
        "k": f.k,
        "delta": enc_frac(f.delta),
        "epsilon": enc_frac(f.epsilon),
        "sets": [enc_cyl(s) for s in f.sets],
        "seed": f.seed,
    },
    lambda v: HashFamily(
        int(v["N"]), tuple(dec_cyl(s) for s in v["sets"]), int(v["k"]),
        dec_frac(v["delta"]), dec_frac(v["epsilon"]),
        sampling_density(dec_frac(v["epsilon"]), dec_frac(v["delta"]), int(v["k"])),
        int(v["seed"]),
    ),
)

_reg(
    "hash-violation",
    HashViolation,
    lambda x: {
        "class": x.kind,
        "indices": list(x.indices),
        "value": enc_frac(x.value),
        "bound": enc_frac(x.bound),
    },
    lambda v: HashViolation(
        str(v["class"]), tuple(int(i) for i in v["indices"]),
        dec_frac(v["value"]), dec_frac(v["bound"]),
    ),
)

_reg(
    "prune-result",
    PruneResult,
    lambda r: {
        "tree": enc_tree(r.tree),
        "stem": enc_node(r.stem),
        "smallTables": _enc_tables(r.small_tables),
        "p": enc_levelfn(r.p),
        "q": enc_levelfn(r.q),
        "q2": enc_levelfn(r.q2),
    },
    lambda v: PruneResult(
        dec_tree(v["tree"]), dec_node(v["stem"]), _dec_tables(v["smallTables"]),
        dec_levelfn(v["p"]), dec_levelfn(v["q"]), dec_levelfn(v["q2"]),
    ),
)

_reg(
    "staged-totality",
    StagedTotality,
    lambda s: {
        "tree": enc_tree(s.tree),
        "frontier": enc_node_set(s.frontier),
        "stages": [
            {
                "stage": r.stage,
                "frontier": [enc_node(n) for n in r.frontier],
                "attached": [enc_node(n) for n in r.attached],
            }
            for r in s.stages
        ],
    },
    lambda v: StagedTotality(
        dec_tree(v["tree"]),
        tuple(sorted(dec_node_set(v["frontier"]), key=node_key)),
        tuple(
            StageRecord(
                int(r["stage"]),
                tuple(dec_node(n) for n in r["frontier"]),
                tuple(dec_node(n) for n in r["attached"]),
            )
            for r in v["stages"]
        ),
    ),
)

_reg(
    "jsplit-instance",
    JSplitInstance,
    lambda i: {
        "psi": enc_vfn(i.psi),
        "ambient": enc_tree(i.ambient),
        "core": enc_tree(i.core),
        "eta": enc_node(i.eta),
    },
    lambda v: JSplitInstance(
        dec_vfn(v["psi"]), dec_tree(v["ambient"]), dec_tree(v["core"]),
        dec_node(v["eta"]),
    ),
)

_reg(
    "assignment",
    Assignment,
    lambda a: {
        "index": a.index,
        "V": enc_cyl(a.V),
        "n": a.n,
        "witness": _body(a.witness),
    },
    lambda v: Assignment(
        int(v["index"]), dec_cyl(v["V"]), int(v["n"]), decode(v["witness"])
    ),
)

_reg(
    "disjoint",
    DisjointCert,
    lambda c: {"assignments": [_body(a) for a in c.assignments]},
    lambda v: DisjointCert(tuple(decode(a) for a in v["assignments"])),
)

_reg(
    "nontotal",
    NonTotalCert,
    lambda c: {
        "index": c.index,
        "sNodes": enc_node_set(c.s_nodes),
        "sWitness": _body(c.s_witness),
        "tree": enc_tree(c.tree),
        "smallTables": _enc_tables(c.small_tables),
        "nHat": c.n_hat,
        "wLevels": [[n, sorted(ws)] for n, ws in c.w_levels],
        "qPrime": enc_levelfn(c.q_prime),
    },
    lambda v: NonTotalCert(
        int(v["index"]), dec_node_set(v["sNodes"]), decode(v["sWitness"]),
        dec_tree(v["tree"]), _dec_tables(v["smallTables"]), int(v["nHat"]),
        tuple((int(n), frozenset(ws)) for n, ws in v["wLevels"]),
        dec_levelfn(v["qPrime"]),
    ),
)

_reg(
    "computable",
    ComputableCert,
    lambda c: {
        "index": c.index,
        "tree": enc_tree(c.tree),
        "smallTables": _enc_tables(c.small_tables),
        "u": c.u,
        "nBar": c.n_bar,
        "wLevels": [[n, sorted(ws)] for n, ws in c.w_levels],
        "qPrime": enc_levelfn(c.q_prime),
    },
    lambda v: ComputableCert(
        int(v["index"]), dec_tree(v["tree"]), _dec_tables(v["smallTables"]),
        int(v["u"]), int(v["nBar"]),
        tuple((int(n), frozenset(ws)) for n, ws in v["wLevels"]),
        dec_levelfn(v["qPrime"]),
    ),
)

_reg(
    "inconclusive",
    Inconclusive,
    lambda c: {"reason": c.reason},
    lambda v: Inconclusive(str(v["reason"])),
)

_reg(
    "condition",
    Condition,
    lambda c: {
        "eta": enc_node(c.eta),
        "ambient": enc_tree(c.ambient),
        "core": enc_tree(c.core),
        "p": enc_levelfn(c.p),
        "q": enc_levelfn(c.q),
        "expulsions": [[enc_node(n), t] for n, t in c.expulsions],
    },
    lambda v: Condition(
        dec_node(v["eta"]), dec_tree(v["ambient"]), dec_tree(v["core"]),
        dec_levelfn(v["p"]), dec_levelfn(v["q"]),
        tuple((dec_node(n), int(t)) for n, t in v["expulsions"]),
    ),
)

_reg(
    "split-part",
    SplitPart,
    lambda s: {
        "index": s.index,
        "eta": enc_node(s.eta),
        "tree": enc_tree(s.tree),
        "V": enc_cyl(s.V),
        "n": s.n,
    },
    lambda v: SplitPart(
        int(v["index"]), dec_node(v["eta"]), dec_tree(v["tree"]),
        dec_cyl(v["V"]), int(v["n"]),
    ),
)

_reg(
    "split-step-result",
    SplitStepResult,
    lambda r: {
        "class": r.kind,
        "parts": [_body(s) for s in r.parts],
        "certificate": None if r.certificate is None else _body(r.certificate),
        "index": r.index,
        "etaPrime": enc_node(r.eta_prime),
        "detail": r.detail,
    },
    lambda v: SplitStepResult(
        str(v["class"]),
        tuple(decode(s) for s in v["parts"]),
        None if v["certificate"] is None else decode(v["certificate"]),
        int(v["index"]),
        dec_node(v["etaPrime"]),
        str(v["detail"]),
    ),
)

_reg(
    "case1",
    Case1,
    lambda c: {
        "xi": enc_node(c.xi),
        "m": c.m,
        "subtree": enc_tree(c.subtree),
        "convTable": _body(c.conv_table),
        "escapeTable": _body(c.escape_table),
    },
    lambda v: Case1(
        dec_node(v["xi"]), int(v["m"]), dec_tree(v["subtree"]),
        decode(v["convTable"]), decode(v["escapeTable"]),
    ),
)

_reg(
    "case2",
    Case2,
    lambda c: {"staged": _body(c.staged), "depth": c.depth},
    lambda v: Case2(decode(v["staged"]), int(v["depth"])),
)

# The trace is diagnostic output, not state; it is dropped on decode, which
# matches its exclusion from RoundState equality.
_reg(
    "round-state",
    RoundState,
    lambda s: {
        "trees": [enc_tree(t) for t in s.trees],
        "rhos": list(s.rhos),
        "lambdas": [enc_frac(v) for v in s.lambdas],
        "lamBar": enc_frac(s.lam_bar),
        "levels": list(s.levels),
        "times": list(s.times),
        "eps": enc_levelfn(s.eps),
    },
    lambda v: RoundState(
        tuple(dec_tree(t) for t in v["trees"]),
        tuple(str(r) for r in v["rhos"]),
        tuple(dec_frac(x) for x in v["lambdas"]),
        dec_frac(v["lamBar"]),
        tuple(int(x) for x in v["levels"]),
        tuple(int(x) for x in v["times"]),
        dec_levelfn(v["eps"]),
    ),
)

_reg(
    "test-functional",
    TestFunctional,
    lambda f: {
        "entries": [
            [enc_node(n), index, enc_cyl(V), stage] for n, index, V, stage in f.entries
        ],
        "budget": enc_frac(f.budget),
    },
    lambda v: TestFunctional(
        tuple(
            (dec_node(n), int(index), dec_cyl(V), int(stage))
            for n, index, V, stage in v["entries"]
        ),
        dec_frac(v["budget"]),
    ),
)

_reg(
    "schnorr-test",
    SchnorrTest,
    lambda t: enc_schnorr_test(t),
    lambda v: dec_schnorr_test(v),
)

# Bare structural values also appear as whole files (a thinning run returns
# just the pruned tree), so they get tagged wrappers of the same shape.
_reg("finite-tree", FiniteTree, enc_tree, dec_tree)

_reg(
    "cylinder-set",
    CylinderSet,
    lambda V: {"strings": enc_cyl(V)},
    lambda v: dec_cyl(v["strings"]),
)

_reg("value-functional", ValueFunctional, enc_vfn, dec_vfn)

_reg(
    "level-fn",
    LevelFn,
    lambda f: enc_levelfn(f),
    lambda v: dec_levelfn(v),
)


# ---------------------------------------------------------------------------
# generator instances, as scenario params

_reg(
    "bigness-instance",
    BignessInstance,
    lambda i: {
        "ambient": enc_tree(i.ambient),
        "targets": enc_node_set(i.targets),
        "p": enc_levelfn(i.p),
        "root": enc_node(i.root),
        "seed": i.seed,
    },
    lambda v: BignessInstance(
        dec_tree(v["ambient"]), dec_node_set(v["targets"]), dec_levelfn(v["p"]),
        dec_node(v["root"]), int(v["seed"]),
    ),
)

_reg(
    "split-instance",
    SplitInstance,
    lambda i: {
        "ambient": enc_tree(i.ambient),
        "B": enc_node_set(i.B),
        "C": enc_node_set(i.C),
        "p": enc_levelfn(i.p),
        "q": enc_levelfn(i.q),
        "root": enc_node(i.root),
        "seed": i.seed,
    },
    lambda v: SplitInstance(
        dec_tree(v["ambient"]), dec_node_set(v["B"]), dec_node_set(v["C"]),
        dec_levelfn(v["p"]), dec_levelfn(v["q"]), dec_node(v["root"]), int(v["seed"]),
    ),
)

_reg(
    "thin-instance",
    ThinInstance,
    lambda i: {
        "tree": enc_tree(i.tree),
        "targets": enc_node_set(i.targets),
        "lam": enc_frac(i.lam),
        "eps": enc_levelfn(i.eps),
        "seed": i.seed,
    },
    lambda v: ThinInstance(
        dec_tree(v["tree"]), dec_node_set(v["targets"]), dec_frac(v["lam"]),
        dec_levelfn(v["eps"]), int(v["seed"]),
    ),
)

_reg(
    "hash-instance",
    HashInstance,
    lambda i: {
        "epsilon": enc_frac(i.eps),
        "delta": enc_frac(i.delta),
        "k": i.k,
        "n": i.n,
        "maxBits": i.max_bits,
        "seed": i.seed,
    },
    lambda v: HashInstance(
        dec_frac(v["epsilon"]), dec_frac(v["delta"]), int(v["k"]), int(v["n"]),
        int(v["maxBits"]), int(v["seed"]),
    ),
)

_reg(
    "calc-scenario",
    CalcScenario,
    lambda s: {"item": s.item, "instance": _body(s.inst), "seed": s.seed},
    lambda v: CalcScenario(int(v["item"]), decode(v["instance"]), int(v["seed"])),
)

_reg(
    "capture-instance",
    CaptureInstance,
    lambda i: {
        "ambient": enc_tree(i.ambient),
        "core": enc_tree(i.core),
        "psi": enc_vfn(i.psi),
        "rho": enc_node(i.rho),
        "lam": enc_frac(i.lam),
        "p": enc_levelfn(i.p),
        "q": enc_levelfn(i.q),
        "pHat": enc_levelfn(i.p_hat),
        "seed": i.seed,
    },
    lambda v: CaptureInstance(
        dec_tree(v["ambient"]), dec_tree(v["core"]), dec_vfn(v["psi"]),
        dec_node(v["rho"]), dec_frac(v["lam"]), dec_levelfn(v["p"]),
        dec_levelfn(v["q"]), dec_levelfn(v["pHat"]), int(v["seed"]),
    ),
)

_reg(
    "jsplit-scenario",
    JSplitScenario,
    lambda s: {
        "instances": [_body(i) for i in s.instances],
        "p": enc_levelfn(s.p),
        "q": enc_levelfn(s.q),
        "qPrime": enc_levelfn(s.q_prime),
        "qDoublePrime": enc_levelfn(s.q_dprime),
        "qI": enc_levelfn(s.q_i),
        "nStar": s.n_star,
        "seed": s.seed,
    },
    lambda v: JSplitScenario(
        tuple(decode(i) for i in v["instances"]),
        dec_levelfn(v["p"]), dec_levelfn(v["q"]), dec_levelfn(v["qPrime"]),
        dec_levelfn(v["qDoublePrime"]), dec_levelfn(v["qI"]),
        int(v["nStar"]), int(v["seed"]),
    ),
)

_reg(
    "split-step-scenario",
    SplitStepScenario,
    lambda s: {
        "condition": _body(s.cond),
        "psi": enc_vfn(s.psi),
        "frontier": [enc_node(n) for n in s.frontier],
        "pHat": enc_levelfn(s.p_hat),
        "seed": s.seed,
    },
    lambda v: SplitStepScenario(
        decode(v["condition"]), dec_vfn(v["psi"]),
        tuple(dec_node(n) for n in v["frontier"]),
        dec_levelfn(v["pHat"]), int(v["seed"]),
    ),
)

_reg(
    "round-scenario",
    RoundScenario,
    lambda s: {
        "psi": _body(s.psi),
        "ambient": enc_tree(s.ambient),
        "core": enc_tree(s.core),
        "p": enc_levelfn(s.p),
        "q": enc_levelfn(s.q),
        "eps": enc_levelfn(s.eps),
        "rounds": s.rounds,
        "seed": s.seed,
    },
    lambda v: RoundScenario(
        decode(v["psi"]), dec_tree(v["ambient"]), dec_tree(v["core"]),
        dec_levelfn(v["p"]), dec_levelfn(v["q"]), dec_levelfn(v["eps"]),
        int(v["rounds"]), int(v["seed"]),
    ),
)

_reg(
    "covering-instance",
    CoveringInstance,
    lambda i: {
        "ambient": enc_tree(i.ambient),
        "core": enc_tree(i.core),
        "psi": enc_vfn(i.psi),
        "p": enc_levelfn(i.p),
        "q": enc_levelfn(i.q),
        "pHat": enc_levelfn(i.p_hat),
        "rounds": i.rounds,
        "seed": i.seed,
    },
    lambda v: CoveringInstance(
        dec_tree(v["ambient"]), dec_tree(v["core"]), dec_vfn(v["psi"]),
        dec_levelfn(v["p"]), dec_levelfn(v["q"]), dec_levelfn(v["pHat"]),
        int(v["rounds"]), int(v["seed"]),
    ),
)

_reg(
    "classify-instance",
    ClassifyInstance,
    lambda i: {
        "condition": _body(i.cond),
        "psi": enc_vfn(i.psi),
        "pHat": enc_levelfn(i.p_hat),
        "eps": enc_levelfn(i.eps),
        "seed": i.seed,
    },
    lambda v: ClassifyInstance(
        decode(v["condition"]), dec_vfn(v["psi"]), dec_levelfn(v["pHat"]),
        dec_levelfn(v["eps"]), int(v["seed"]),
    ),
)


# ---------------------------------------------------------------------------
# scenario wrappers and canonical file output

def encode_scenario(kind: str, instance, seed: int) -> dict:
    return {"kind": kind, "params": encode(instance), "seed": int(seed)}


def decode_scenario(data) -> tuple:
    if not isinstance(data, dict):
        raise PreconditionError("scenario file must hold a JSON object")
    for key in ("kind", "params", "seed"):
        if key not in data:
            raise PreconditionError(f"scenario file is missing {key!r}")
    return str(data["kind"]), decode(data["params"]), int(data["seed"])


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def dumps(obj) -> str:
    return canonical_json(encode(obj))


def loads(text: str):
    return decode(json.loads(text))
