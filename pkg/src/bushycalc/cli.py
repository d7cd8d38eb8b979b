"""Command line front end over JSON scenario files.

Subcommands: gen (emit a seeded instance), run (execute it and write result
plus certificate files), verify (re-check a certificate against its
instance, independently of the producing code), report (aggregate a results
directory), suite (gen + run + verify over a seed range, then report).

Exit codes: 0 ok, 2 refusal (honest negative), 3 inconclusive, 4
precondition failure, 5 internal error.  Result and certificate files are
byte-identical across reruns of the same (instance, seed); wall-clock
timings live in a sidecar file so they never disturb that identity.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

from .audit import audit_certificate
from .bigness import BigWitness, decide_big, split_big
from .errors import (
    CalcError,
    GenerationError,
    InsufficientDepthError,
    PreconditionError,
    TreeError,
)
from .generators import (
    MAX_BRANCHING,
    MAX_DEPTH,
    MAX_GROUND_BITS,
    MAX_SPLIT_ARITY,
    gen_bigness,
    gen_capture,
    gen_classify,
    gen_covering,
    gen_hash,
    gen_jsplit,
    gen_schnorr_round,
    gen_split,
    gen_split_step,
    gen_thin,
    gen_vcalc,
)
from .hashfam import generate_hash_family
from .schnorr import (
    Case1,
    CoveringCertificate,
    assemble_avoider,
    avoidance_round,
    build_covering_test,
    classify_condition,
    initial_state,
)
from .serialization import (
    canonical_json,
    decode_scenario,
    dumps,
    enc_frac,
    enc_trace,
    enc_tree,
    encode_scenario,
    loads,
)
from .splitcalc import (
    Inconclusive,
    calculus_check,
    capture_small_measure,
    j_split,
    split_step,
)
from .thinning import exact_thin
from .trees import CylinderSet

EXIT_OK = 0
EXIT_REFUSAL = 2
EXIT_INCONCLUSIVE = 3
EXIT_PRECONDITION = 4
EXIT_INTERNAL = 5

CAPS = {
    "branching": MAX_BRANCHING,
    "depth": MAX_DEPTH,
    "groundBits": MAX_GROUND_BITS,
    "splitArity": MAX_SPLIT_ARITY,
}

GEN_FUNCS = {
    "bigness": gen_bigness,
    "split": gen_split,
    "thin": gen_thin,
    "hash": gen_hash,
    "vcalc": gen_vcalc,
    "capture": gen_capture,
    "jsplit": gen_jsplit,
    "split-step": gen_split_step,
    "schnorr-round": gen_schnorr_round,
    "covering-test": gen_covering,
    "classify": gen_classify,
}

# CLI flag -> generator keyword, per kind.
GEN_FLAGS = {
    "bigness": {"branch": "branching", "depth": "depth"},
    "split": {"depth": "depth"},
    "thin": {"depth": "depth"},
    "hash": {"eps": "eps", "delta": "delta", "k": "k", "n": "n", "max_bits": "max_bits"},
    "vcalc": {"item": "item"},
    "capture": {"lam": "lam"},
    "jsplit": {"j": "j", "depth": "depth"},
    "split-step": {},
    "schnorr-round": {"rounds": "rounds", "depth": "depth"},
    "covering-test": {"rounds": "rounds"},
    "classify": {},
}


# ---------------------------------------------------------------------------
# Scenario execution


def _run_scenario(kind: str, inst):
    """Dispatch one scenario; returns (status, exit, certificate, detail, summary)."""
    if kind == "bigness":
        cert = decide_big(inst.targets, inst.p, inst.root, inst.ambient)
        if isinstance(cert, BigWitness):
            return "ok", EXIT_OK, cert, "target set is big", {"verdict": "big"}
        return "refusal", EXIT_REFUSAL, cert, "target set is small", {"verdict": "small"}

    if kind == "split":
        union = decide_big(inst.B | inst.C, inst.p + inst.q, inst.root, inst.ambient)
        if not isinstance(union, BigWitness):
            raise PreconditionError("the union is not big at the joint rate; nothing to split")
        cert = split_big(inst.B, inst.C, inst.p, inst.q, inst.root, union)
        return "ok", EXIT_OK, cert, f"{cert.side} part is big", {"side": cert.side}

    if kind == "thin":
        cert = exact_thin(inst.tree, inst.targets, inst.lam, inst.eps)
        summary = {"kept": len(cert.nodes), "original": len(inst.tree.nodes)}
        return "ok", EXIT_OK, cert, "thinned onto the target leaves", summary

    if kind == "hash":
        cert = generate_hash_family(
            inst.eps, inst.delta, inst.k, inst.n, seed=inst.seed, max_bits=inst.max_bits
        )
        summary = {"groundBits": cert.ground_bits, "sets": len(cert.sets)}
        return "ok", EXIT_OK, cert, f"family over {cert.ground_bits} ground bits", summary

    if kind == "vcalc":
        cert = calculus_check(inst.item, inst.inst)
        summary = {"item": cert.item, "holds": cert.holds}
        if cert.holds:
            return "ok", EXIT_OK, cert, f"item {cert.item} holds", summary
        return "refusal", EXIT_REFUSAL, cert, f"item {cert.item} fails here", summary

    if kind == "capture":
        cert = capture_small_measure(
            inst.ambient, inst.core, inst.psi, inst.rho,
            inst.lam, inst.p, inst.q, inst.p_hat, seed=inst.seed,
        )
        summary = {
            "groundBits": cert.ground_bits,
            "k": cert.k,
            "direct": cert.direct,
            "familySize": cert.family_size,
            "measure": enc_frac(cert.v_star.measure),
        }
        return "ok", EXIT_OK, cert, f"captured at measure {cert.v_star.measure}", summary

    if kind == "jsplit":
        cert = j_split(
            list(inst.instances), inst.p, inst.q, inst.q_prime,
            inst.q_dprime, inst.q_i, CylinderSet.whole(), inst.n_star,
        )
        eta0 = inst.instances[0].eta
        summary = {
            "j": len(inst.instances),
            "qHat": enc_frac(inst.q(len(eta0))),
            "outcome": type(cert).__name__,
        }
        if isinstance(cert, Inconclusive):
            return "inconclusive", EXIT_INCONCLUSIVE, cert, cert.reason, summary
        return "ok", EXIT_OK, cert, type(cert).__name__, summary

    if kind == "split-step":
        cert = split_step(inst.cond, inst.psi, inst.frontier, inst.p_hat)
        summary = {"step": cert.kind, "detail": cert.detail}
        if cert.kind == "inconclusive":
            return "inconclusive", EXIT_INCONCLUSIVE, cert, cert.detail, summary
        return "ok", EXIT_OK, cert, cert.kind, summary

    if kind == "schnorr-round":
        states = [initial_state(inst.psi, inst.ambient, inst.core, inst.p, inst.q, inst.eps)]
        for _ in range(inst.rounds):
            states.append(
                avoidance_round(states[-1], inst.psi, inst.ambient, inst.core, inst.p, inst.q)
            )
        hat, ground = assemble_avoider(
            states, inst.psi, inst.ambient, inst.core, inst.p, inst.q
        )
        summary = {
            "rounds": inst.rounds,
            "ground": ground,
            "avoiderTree": enc_tree(hat),
            "trace": [enc_trace(s.trace) for s in states if s.trace is not None],
        }
        detail = f"avoided onto ground string {ground!r}"
        return "ok", EXIT_OK, states[-1], detail, summary

    if kind == "covering-test":
        tree, test = build_covering_test(
            inst.ambient, inst.core, inst.psi, inst.p, inst.q,
            inst.p_hat, inst.rounds, seed=inst.seed,
        )
        cert = CoveringCertificate(tree, test)
        summary = {
            "components": len(test.components),
            "measures": [enc_frac(c.measure) for c in test.components],
        }
        return "ok", EXIT_OK, cert, f"{len(test.components)} summable components", summary

    if kind == "classify":
        cert = classify_condition(inst.cond, inst.psi, inst.p_hat, inst.eps)
        if isinstance(cert, Case1):
            detail = f"divergence at bit {cert.m} over {cert.xi}"
            return "ok", EXIT_OK, cert, detail, {"case": 1}
        detail = f"totality staged through {cert.depth + 1} bits"
        return "ok", EXIT_OK, cert, detail, {"case": 2}

    raise PreconditionError(f"no runner for scenario kind {kind!r}")


def run_scenario_file(scenario_path: Path, out_dir: Path) -> int:
    """Execute one scenario file; writes result, certificate, timing files."""
    kind, inst, seed = decode_scenario(json.loads(scenario_path.read_text()))
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        status, code, cert, detail, summary = _run_scenario(kind, inst)
    except (PreconditionError, TreeError) as err:
        status, code, cert, detail, summary = "precondition", EXIT_PRECONDITION, None, str(err), {}
    except (InsufficientDepthError, GenerationError) as err:
        status, code, cert, detail, summary = "inconclusive", EXIT_INCONCLUSIVE, None, str(err), {}
    except CalcError as err:
        status, code, cert, detail, summary = "error", EXIT_INTERNAL, None, str(err), {}
    elapsed = time.perf_counter() - start

    cert_name = None
    if cert is not None:
        cert_name = "certificate.json"
        (out_dir / cert_name).write_text(dumps(cert))
    result = {
        "kind": kind,
        "seed": seed,
        "scenario": scenario_path.name,
        "status": status,
        "exit": code,
        "certificate": cert_name,
        "detail": detail,
        "summary": summary,
    }
    (out_dir / "result.json").write_text(canonical_json(result))
    (out_dir / "timing.json").write_text(canonical_json({"elapsed": elapsed}))
    print(f"{kind} seed {seed}: {status}" + (f" ({detail})" if detail else ""))
    return code


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen(args) -> int:
    kind = args.kind
    allowed = GEN_FLAGS[kind]
    kwargs = {}
    for flag, kw in (
        ("branch", None), ("depth", None), ("eps", None), ("delta", None),
        ("k", None), ("n", None), ("max_bits", None), ("item", None),
        ("lam", None), ("j", None), ("rounds", None),
    ):
        value = getattr(args, flag)
        if value is None:
            continue
        if flag not in allowed:
            raise PreconditionError(f"flag --{flag.replace('_', '-')} does not apply to {kind!r}")
        kwargs[allowed[flag]] = value
    if kwargs.get("branching", 0) > MAX_BRANCHING:
        raise PreconditionError(f"branching cap is {MAX_BRANCHING}")
    if kwargs.get("depth", 0) > MAX_DEPTH:
        raise PreconditionError(f"depth cap is {MAX_DEPTH}")
    if kwargs.get("max_bits", 0) > MAX_GROUND_BITS:
        raise PreconditionError(f"ground-bits cap is {MAX_GROUND_BITS}")
    if kwargs.get("j", 0) > MAX_SPLIT_ARITY:
        raise PreconditionError(f"split-arity cap is {MAX_SPLIT_ARITY}")
    inst = GEN_FUNCS[kind](args.seed, **kwargs)
    text = canonical_json(encode_scenario(kind, inst, args.seed))
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        print(path)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    scenario_path = Path(args.scenario)
    out_dir = Path(args.out) if args.out else scenario_path.with_suffix(".out")
    return run_scenario_file(scenario_path, out_dir)


def cmd_verify(args) -> int:
    cert = loads(Path(args.certificate).read_text())
    kind, inst, _ = decode_scenario(json.loads(Path(args.scenario).read_text()))
    reason = audit_certificate(kind, inst, cert)
    if reason is None:
        print("ok")
        return EXIT_OK
    print(f"FAIL: {reason}")
    return EXIT_REFUSAL


def _aggregate(root: Path) -> dict:
    entries = []
    for path in sorted(root.rglob("result.json")):
        entry = json.loads(path.read_text())
        timing = path.parent / "timing.json"
        elapsed = json.loads(timing.read_text())["elapsed"] if timing.exists() else None
        audit_file = path.parent / "audit.json"
        verified = json.loads(audit_file.read_text())["verified"] if audit_file.exists() else None
        entries.append((entry, elapsed, verified))
    if not entries:
        raise PreconditionError(f"no result files under {root}")

    kinds: dict = {}
    hash_bits: list = []
    jsplit_rows: dict = {}
    checked = passed = 0
    for entry, elapsed, verified in entries:
        k = entry["kind"]
        bucket = kinds.setdefault(
            k, {"runs": 0, "statuses": {}, "seconds": 0.0, "timed": 0}
        )
        bucket["runs"] += 1
        status = entry["status"]
        bucket["statuses"][status] = bucket["statuses"].get(status, 0) + 1
        if elapsed is not None:
            bucket["seconds"] += elapsed
            bucket["timed"] += 1
        if verified is not None:
            checked += 1
            passed += bool(verified)
        summary = entry.get("summary") or {}
        if k == "hash" and "groundBits" in summary:
            hash_bits.append(summary["groundBits"])
        if k == "jsplit" and "j" in summary:
            key = (summary["j"], tuple(summary["qHat"]))
            row = jsplit_rows.setdefault(key, {"runs": 0, "inconclusive": 0})
            row["runs"] += 1
            row["inconclusive"] += status == "inconclusive"

    total = sum(b["runs"] for b in kinds.values())
    ok = sum(b["statuses"].get("ok", 0) for b in kinds.values())
    settled = ok + sum(b["statuses"].get("refusal", 0) for b in kinds.values())
    report: dict = {
        "runs": total,
        "okRate": round(ok / total, 6),
        "settledRate": round(settled / total, 6),
        "kinds": {
            k: {
                "runs": b["runs"],
                "statuses": dict(sorted(b["statuses"].items())),
                "meanSeconds": round(b["seconds"] / b["timed"], 6) if b["timed"] else None,
            }
            for k, b in sorted(kinds.items())
        },
    }
    if checked:
        report["verification"] = {"checked": checked, "passed": passed}
    if hash_bits:
        report["hashFamilies"] = {
            "count": len(hash_bits),
            "minGroundBits": min(hash_bits),
            "maxGroundBits": max(hash_bits),
            "meanGroundBits": round(sum(hash_bits) / len(hash_bits), 3),
        }
    if jsplit_rows:
        rows = []
        for (j, q_pair), row in sorted(jsplit_rows.items()):
            q_hat = Fraction(int(q_pair[0]), int(q_pair[1]))
            rows.append({
                "j": j,
                "qHat": enc_frac(q_hat),
                "requiredBushiness": enc_frac(j * q_hat),
                "baselineBushiness": enc_frac(2**j * q_hat),
                "baselineNote": "computed reference 2^j * qHat, not a rerun of the prior method",
                "runs": row["runs"],
                "inconclusive": row["inconclusive"],
            })
        report["jsplit"] = rows
    return report


def _frac_str(pair) -> str:
    num, den = int(pair[0]), int(pair[1])
    return str(num) if den == 1 else f"{num}/{den}"


def _render_markdown(report: dict) -> str:
    lines = ["# Scenario report", ""]
    lines.append(
        f"{report['runs']} runs, ok rate {report['okRate']}, "
        f"settled rate {report['settledRate']}."
    )
    if "verification" in report:
        v = report["verification"]
        lines.append(f"Certificates independently verified: {v['passed']}/{v['checked']}.")
    lines += ["", "| kind | runs | statuses | mean s |", "| --- | --- | --- | --- |"]
    for k, b in report["kinds"].items():
        statuses = ", ".join(f"{s}: {n}" for s, n in b["statuses"].items())
        mean = "n/a" if b["meanSeconds"] is None else f"{b['meanSeconds']:.4f}"
        lines.append(f"| {k} | {b['runs']} | {statuses} | {mean} |")
    if "hashFamilies" in report:
        h = report["hashFamilies"]
        lines += [
            "",
            "## Hash families",
            "",
            f"{h['count']} families; ground bits min {h['minGroundBits']}, "
            f"max {h['maxGroundBits']}, mean {h['meanGroundBits']}.",
        ]
    if "jsplit" in report:
        lines += [
            "",
            "## j-split bushiness comparison",
            "",
            "The baseline column is the computed reference 2^j * qHat; it is "
            "not a rerun of the prior method.",
            "",
            "| j | qHat | required j*qHat | baseline 2^j*qHat | runs | inconclusive |",
            "| --- | --- | --- | --- | --- | --- |",
        ]
        for row in report["jsplit"]:
            lines.append(
                f"| {row['j']} | {_frac_str(row['qHat'])} "
                f"| {_frac_str(row['requiredBushiness'])} "
                f"| {_frac_str(row['baselineBushiness'])} "
                f"| {row['runs']} | {row['inconclusive']} |"
            )
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    report = _aggregate(Path(args.results))
    fmt = args.format or "json"
    text = canonical_json(report) if fmt == "json" else _render_markdown(report)
    if args.out:
        Path(args.out).write_text(text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_suite(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kinds = args.kinds.split(",") if args.kinds else list(GEN_FUNCS)
    for kind in kinds:
        if kind not in GEN_FUNCS:
            raise PreconditionError(f"unknown scenario kind {kind!r}")
    worst = EXIT_OK
    for kind in kinds:
        for seed in range(args.seed, args.seed + args.seeds):
            run_dir = out / f"{kind}-{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            inst = GEN_FUNCS[kind](seed)
            scen_path = run_dir / "scenario.json"
            scen_path.write_text(canonical_json(encode_scenario(kind, inst, seed)))
            code = run_scenario_file(scen_path, run_dir)
            if code == EXIT_INTERNAL:
                worst = EXIT_INTERNAL
            cert_path = run_dir / "certificate.json"
            if cert_path.exists():
                reason = audit_certificate(kind, inst, loads(cert_path.read_text()))
                (run_dir / "audit.json").write_text(
                    canonical_json({"verified": reason is None, "reason": reason})
                )
                if reason is not None:
                    print(f"{kind} seed {seed}: VERIFY FAIL: {reason}")
                    worst = EXIT_INTERNAL
    report = _aggregate(out)
    (out / "report.json").write_text(canonical_json(report))
    (out / "report.md").write_text(_render_markdown(report))
    print(f"suite: {report['runs']} runs, ok rate {report['okRate']}")
    return worst


# ---------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    # Usage mistakes are precondition failures, not refusals.
    def error(self, message):
        self.exit(EXIT_PRECONDITION, f"{self.prog}: error: {message}\n")


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bushycalc", description=__doc__.splitlines()[0])
    parser.add_argument("--caps", action="store_true", help="print desk-scale caps and exit")
    parser.add_argument("--format", choices=("json", "md"), default=None)
    sub = parser.add_subparsers(dest="cmd", parser_class=_Parser)

    p_gen = sub.add_parser("gen", help="emit a seeded scenario file")
    p_gen.add_argument("kind", choices=sorted(GEN_FUNCS))
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", default=None)
    p_gen.add_argument("--branch", type=int, default=None)
    p_gen.add_argument("--depth", type=int, default=None)
    p_gen.add_argument("--eps", type=_fraction, default=None)
    p_gen.add_argument("--delta", type=_fraction, default=None)
    p_gen.add_argument("--k", type=int, default=None)
    p_gen.add_argument("--n", type=int, default=None)
    p_gen.add_argument("--max-bits", dest="max_bits", type=int, default=None)
    p_gen.add_argument("--item", type=int, default=None)
    p_gen.add_argument("--lam", type=_fraction, default=None)
    p_gen.add_argument("--j", type=int, default=None)
    p_gen.add_argument("--rounds", type=int, default=None)

    p_run = sub.add_parser("run", help="execute a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=None, help="output directory")

    p_verify = sub.add_parser(
        "verify", help="re-check a certificate against its scenario"
    )
    p_verify.add_argument("certificate")
    p_verify.add_argument("scenario")

    p_report = sub.add_parser(
        "report", help="aggregate a results directory"
    )
    p_report.add_argument("results")
    p_report.add_argument("--out", default=None)
    p_report.add_argument("--format", choices=("json", "md"), default=None)

    p_suite = sub.add_parser(
        "suite", help="gen, run and verify over a seed range"
    )
    p_suite.add_argument("--kinds", default=None, help="comma-separated scenario kinds")
    p_suite.add_argument("--seed", type=int, default=0, help="first seed")
    p_suite.add_argument("--seeds", type=int, default=3, help="seeds per kind")
    p_suite.add_argument("--out", required=True)
    p_suite.add_argument("--format", choices=("json", "md"), default=None)
    return parser


COMMANDS = {
    "gen": cmd_gen,
    "run": cmd_run,
    "verify": cmd_verify,
    "report": cmd_report,
    "suite": cmd_suite,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.caps:
        fmt = args.format or "json"
        if fmt == "json":
            sys.stdout.write(canonical_json(CAPS))
        else:
            rows = ["| cap | value |", "| --- | --- |"]
            rows += [f"| {k} | {v} |" for k, v in sorted(CAPS.items())]
            sys.stdout.write("\n".join(rows) + "\n")
        return EXIT_OK
    if args.cmd is None:
        parser.error("a subcommand is required")
    try:
        return COMMANDS[args.cmd](args)
    except (PreconditionError, TreeError) as err:
        print(f"precondition failure: {err}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (InsufficientDepthError, GenerationError) as err:
        print(f"inconclusive: {err}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except CalcError as err:
        print(f"internal error: {err}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
