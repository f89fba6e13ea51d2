"""Command-line front end: ``ipirsi <command> [options]``.

stdout carries the primary artifact (JSON or CSV), stderr carries progress.
Exit codes: 0 pass, 1 usage or parameter error, 2 correctness failure,
3 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import random
import secrets
import sys
import time
from fractions import Fraction
from typing import Callable, Sequence

from . import audit, goodrel, motherset
from .gpcip import (
    HONEST,
    MUTATIONS,
    DemandSideInfo,
    Instance,
    ParameterError,
    ProtocolError,
    Variant,
    achievable_rate,
    branch_probabilities,
    check_params,
    random_demand,
    random_messages,
    run_protocol,
    theta_weights,
)
from .jsonutil import dumps, frac_str

EXIT_OK, EXIT_PARAM, EXIT_FAIL, EXIT_BUDGET = 0, 1, 2, 3
BUDGET_ENV = "IPIRSI_BUDGET"
PRNG_NAME = "python-random-MT19937"
GRAPH_PRNG_NAME = "numpy-PCG64"


class _Fail(Exception):
    """Carries an exit code up to :func:`main`."""

    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _index_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated indices, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    return _index_list(text)


def _resolve_seed(seed: int) -> int:
    # 0 means "draw one"; the drawn seed is echoed in the output so the run can be replayed
    if seed == 0:
        seed = secrets.randbits(63) or 1
        _progress(f"seed 0: derived seed {seed} from system entropy")
    return seed


def _budget(args: argparse.Namespace, default: int) -> int:
    if args.budget is not None:
        return args.budget
    env = os.environ.get(BUDGET_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise _Fail(EXIT_PARAM, f"{BUDGET_ENV} must be an integer, got {env!r}")
    return default


def _variant(args: argparse.Namespace) -> Variant:
    name = getattr(args, "variant", "honest") or "honest"
    if name == "honest":
        v = HONEST
    elif name in MUTATIONS:
        v = MUTATIONS[name]
    else:
        raise _Fail(EXIT_PARAM, f"unknown protocol variant {name!r}")
    if getattr(args, "corrected_theta3", False):
        v = Variant(v.always_branch_a, v.theta1_scale, v.shuffle, corrected_theta3=True)
    return v


def _instance(args: argparse.Namespace) -> Instance:
    for name in ("K", "M", "D"):
        if getattr(args, name) is None:
            raise _Fail(EXIT_PARAM, f"--{name} is required")
    return Instance(args.K, args.M, args.D, q=args.q, m=getattr(args, "m", 1) or 1)


def _emit(args: argparse.Namespace, obj: dict, rows: list[dict] | None = None) -> None:
    """JSON goes out whole; CSV uses ``rows`` when given, else flat field/value pairs."""
    if args.output == "json":
        sys.stdout.write(dumps(obj) + "\n")
        return
    buf = io.StringIO()
    if rows is None:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["field", "value"])
        for k, v in obj.items():
            w.writerow([k, v if isinstance(v, (str, int, float, bool)) or v is None else dumps(v)])
    elif rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    sys.stdout.write(buf.getvalue())


# --- commands --------------------------------------------------------------

def cmd_params(args: argparse.Namespace) -> int:
    inst = _instance(args)
    p = inst.params
    v = _variant(args)
    w = theta_weights(inst, corrected=v.corrected_theta3)
    pa, pb = branch_probabilities(inst, v)
    obj = {
        "instance": inst.to_json(),
        "alpha": p.alpha, "beta": p.beta, "rho": p.rho, "gamma": p.gamma,
        "omegas": list(p.omegas),
        "case": p.case,
        "theta1": frac_str(w.theta1),
        "theta2": frac_str(w.theta2) if w.theta2 is not None else None,
        "theta3": frac_str(w.theta3) if w.theta3 is not None else None,
        "p_branch_a": frac_str(pa),
        "p_branch_b": frac_str(pb),
        "achievable_rate": frac_str(achievable_rate(inst.K, inst.M, inst.D)),
    }
    _emit(args, obj)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    inst = _instance(args)
    seed = _resolve_seed(args.seed)
    rng = random.Random(seed)
    v = _variant(args)
    if (args.demand is None) != (args.sideinfo is None):
        raise _Fail(EXIT_PARAM, "--demand and --sideinfo go together")
    if args.demand is None:
        ws = random_demand(inst, rng)
    else:
        ws = DemandSideInfo(frozenset(args.demand), frozenset(args.sideinfo))
        if len(set(args.demand)) != len(args.demand) or len(set(args.sideinfo)) != len(args.sideinfo):
            raise _Fail(EXIT_PARAM, "repeated index in --demand or --sideinfo")
    ws.check(inst)
    messages = random_messages(inst, rng)
    try:
        res = run_protocol(inst, ws, messages, rng, v)
    except ProtocolError as exc:
        raise _Fail(EXIT_FAIL, f"recovery failed: {exc}")
    planted = {i: messages[i - 1] for i in sorted(ws.W)}
    ok = res.recovered == planted
    obj = {
        "instance": inst.to_json(),
        "seed": seed,
        "prng": PRNG_NAME,
        "variant": v.name,
        "W": sorted(ws.W),
        "S": sorted(ws.S),
        "branch": res.partition.branch,
        "query": res.query.to_json(),
        "answer": res.answer.to_json(),
        "recovered": {str(i): list(x) for i, x in sorted(res.recovered.items())},
        "planted": {str(i): list(x) for i, x in planted.items()},
        "match": ok,
        "rate": frac_str(audit.measured_rate(res.query)),
    }
    _emit(args, obj)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_audit_privacy(args: argparse.Namespace) -> int:
    inst = _instance(args)
    v = _variant(args)
    if args.monte_carlo:
        seed = _resolve_seed(args.seed)
        rep = audit.monte_carlo_privacy(inst, args.monte_carlo, seed, v)
        obj = {**rep.to_json(), "seed": seed, "prng": PRNG_NAME, "variant": v.name}
        _emit(args, obj)
        return EXIT_OK if rep.passed else EXIT_FAIL
    budget = _budget(args, audit.DEFAULT_BUDGET)
    _progress(f"exact privacy audit of {inst.to_json()} ({audit.placement_budget_needed(inst)} placements)")
    rep = audit.audit_individual_privacy(inst, v, budget)
    obj = rep.to_json()
    rows = [
        {"q0": dumps(list(k.q0)), "parts": dumps([list(p) for p in k.parts]), "j": j, "posterior": frac_str(p)}
        for k, j, p in rep.violations
    ]
    _emit(args, obj, rows if args.output == "csv" and rows else None)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_audit_support(args: argparse.Namespace) -> int:
    inst = _instance(args)
    v = _variant(args)
    budget = _budget(args, audit.DEFAULT_BUDGET)
    joint = audit.joint_distribution(inst, v, budget)
    need = -(-inst.K // inst.D)
    rows, failures = [], []
    for key in joint.keys():
        size, J = audit.min_certain_cover(inst, key, v, budget)
        rows.append({"q0": dumps(list(key.q0)), "parts": dumps([list(p) for p in key.parts]),
                     "min_cover": size, "witness": dumps(list(J))})
        if size < need:
            failures.append({"key": key.to_json(), "min_cover": size, "witness": list(J)})
    obj = {
        "instance": inst.to_json(),
        "variant": v.name,
        "keys_checked": len(rows),
        "bound": need,
        "min_cover": min(r["min_cover"] for r in rows),
        "pass": not failures,
        "failures": failures,
    }
    _emit(args, obj, rows if args.output == "csv" else None)
    return EXIT_OK if not failures else EXIT_FAIL


def cmd_audit_decodability(args: argparse.Namespace) -> int:
    inst = _instance(args)
    v = _variant(args)
    rep = audit.lemma2_audit(inst, v, _budget(args, audit.DEFAULT_BUDGET), truncate=args.truncate)
    obj = {**rep.to_json(), "variant": v.name, "truncate": args.truncate}
    _emit(args, obj)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _measure(inst: Instance, seeds: int, base_seed: int) -> Fraction | None:
    """Common measured rate over seeded runs; None if the runs disagree."""
    rates = set()
    for s in range(seeds):
        rng = random.Random(base_seed + s)
        ws = random_demand(inst, rng)
        res = run_protocol(inst, ws, random_messages(inst, rng), rng)
        rates.add(audit.measured_rate(res.query))
    return rates.pop() if len(rates) == 1 else None


def cmd_rate_table(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args.seed)
    Ks = range(args.K_min, args.K_max + 1) if args.K is None else [args.K]
    Ms = args.M_list if args.M is None else [args.M]
    Ds = args.D_list if args.D is None else [args.D]
    rows = []
    for K in Ks:
        for M in Ms:
            for D in Ds:
                if M + D > K:
                    continue
                inst = Instance(K, M, D)
                want = achievable_rate(K, M, D)
                got = _measure(inst, args.seeds, seed)
                rows.append({
                    "K": K, "M": M, "D": D,
                    "achievable_rate": frac_str(want),
                    "measured_rate": frac_str(got) if got is not None else "mixed",
                    "match": got == want,
                })
    ok = all(r["match"] for r in rows)
    _emit(args, {"seed": seed, "prng": PRNG_NAME, "seeds": args.seeds, "rows": rows, "pass": ok}, rows)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_theta_balance(args: argparse.Namespace) -> int:
    v = _variant(args)
    if args.K is not None:
        triples = [(args.K, args.M, args.D)]
    else:
        triples = [
            (K, M, D) for K in range(3, args.K_max + 1) for D in range(2, K) for M in range(1, K - D + 1)
        ]
    rows = []
    for K, M, D in triples:
        inst = Instance(K, M, D)
        w = theta_weights(inst, corrected=v.corrected_theta3)
        lhs, rhs = audit.theta_balance_sides(inst, w, args.form)
        rows.append({
            "K": K, "M": M, "D": D, "case": inst.params.case,
            "lhs": frac_str(lhs), "rhs": frac_str(rhs), "ok": lhs == rhs,
        })
    ok = all(r["ok"] for r in rows)
    _emit(args, {"form": args.form, "variant": v.name, "rows": rows, "pass": ok}, rows)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_conj2(args: argparse.Namespace) -> int:
    if args.K is None or args.D is None:
        raise _Fail(EXIT_PARAM, "--K and --D are required")
    seed = _resolve_seed(args.seed) if args.mode == "sample" else None
    budget = _budget(args, motherset.DEFAULT_SCAN_BUDGET)
    _progress(f"conj2 scan K={args.K} D={args.D} mode={args.mode}")
    t0 = time.perf_counter()
    rep = motherset.check_conjecture2(args.K, args.D, args.mode, args.count or 0, seed or 1, budget)
    _progress(f"scanned {rep.graphs_scanned} graphs in {time.perf_counter() - t0:.1f}s")
    obj = {**rep.to_json(), "prng": GRAPH_PRNG_NAME if seed else None, "pass": rep.ok}
    rows = [{"mu_ext": k, "count": c} for k, c in sorted(rep.mu_ext_histogram.items())]
    _emit(args, obj, rows if args.output == "csv" else None)
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_goodrel_check(args: argparse.Namespace) -> int:
    if not args.file:
        raise _Fail(EXIT_PARAM, "--file is required")
    try:
        with open(args.file, encoding="utf-8") as fh:
            rel = goodrel.SetRelation.from_json(json.load(fh))
    except (OSError, json.JSONDecodeError, goodrel.RelationError) as exc:
        raise _Fail(EXIT_PARAM, f"cannot load relation: {exc}")
    variant = args.variant or goodrel.LITERAL
    if variant not in goodrel.VARIANTS:
        raise _Fail(EXIT_PARAM, f"--variant must be one of {goodrel.VARIANTS} for goodrel-check")
    rep = goodrel.validate_good(rel, variant)
    size, witness = goodrel.min_cover_size(rel)
    bound = goodrel.conjecture1_bound(rel.K, rel.M, rel.D)
    counterexample = rep.good and size > bound
    obj = {
        **rep.to_json(),
        "cover_size": size if size != math.inf else "inf",
        "cover_witness": list(witness) if witness is not None else None,
        "bound": bound,
        "counterexample": counterexample,
    }
    rows = [{"condition": k, "pass": c.passed, "witness": dumps(c.witness)} for k, c in rep.conditions.items()]
    rows.append({"condition": "codomain", "pass": rep.codomain.passed, "witness": dumps(rep.codomain.witness)})
    _emit(args, obj, rows if args.output == "csv" else None)
    return EXIT_FAIL if counterexample else EXIT_OK


COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "params": cmd_params,
    "run": cmd_run,
    "audit-privacy": cmd_audit_privacy,
    "audit-support": cmd_audit_support,
    "audit-decodability": cmd_audit_decodability,
    "rate-table": cmd_rate_table,
    "theta-balance": cmd_theta_balance,
    "conj2": cmd_conj2,
    "goodrel-check": cmd_goodrel_check,
}


TABULAR = ("rate-table", "theta-balance")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARAM, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ipirsi", description="Partition-and-code PIR with private side information: protocol runs, audits and graph checks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--K", type=int)
    common.add_argument("--M", type=int)
    common.add_argument("--D", type=int)
    common.add_argument("--q", type=int, help="field size (prime >= M+D); default smallest such prime")
    common.add_argument("--m", type=int, default=1, help="extension degree of the message field")
    common.add_argument("--seed", type=int, default=1, help="PRNG seed; 0 draws one from system entropy")
    common.add_argument("--output", choices=("json", "csv"),
                        help="default: csv for rate-table and theta-balance, json otherwise")
    common.add_argument("--budget", type=int, help=f"work budget (env {BUDGET_ENV} also works)")
    common.add_argument("--variant", help="protocol variant (honest or a mutation) or relation variant")
    common.add_argument("--corrected-theta3", action="store_true",
                        help="use the fixed-index count for theta3 (differs when rho > D)")

    helps = {
        "params": "derived parameters and branch weights",
        "run": "one seeded end-to-end round trip",
        "audit-privacy": "exact individual-privacy audit",
        "audit-support": "certain-cover bound on every reachable query",
        "audit-decodability": "decodable demand sets on every reachable query",
        "rate-table": "achievable vs measured rate over a grid",
        "theta-balance": "check the branch-weight balance identities",
        "conj2": "scan digraphs for mother-set bound violations",
        "goodrel-check": "validate a set relation from a JSON file",
    }
    subs = {name: sub.add_parser(name, parents=[common], help=h) for name, h in helps.items()}
    subs["run"].add_argument("--demand", type=_index_list, help="comma-separated W, e.g. 1,2")
    subs["run"].add_argument("--sideinfo", type=_index_list, help="comma-separated S")
    subs["audit-privacy"].add_argument("--monte-carlo", type=int, metavar="N",
                                       help="sampled smoke test with N runs instead of the exact audit")
    subs["audit-decodability"].add_argument("--truncate", type=int, help="drop this block position first")
    rt = subs["rate-table"]
    rt.add_argument("--K-min", type=int, default=3)
    rt.add_argument("--K-max", type=int, default=12)
    rt.add_argument("--M-list", type=_int_list, default=[1, 2, 3])
    rt.add_argument("--D-list", type=_int_list, default=[2, 3])
    rt.add_argument("--seeds", type=int, default=10)
    subs["theta-balance"].add_argument("--K-max", type=int, default=30)
    subs["theta-balance"].add_argument("--form", choices=("printed", "direct"), default="printed")
    subs["conj2"].add_argument("--mode", choices=("exhaustive", "sample"), default="exhaustive")
    subs["conj2"].add_argument("--count", type=int)
    subs["goodrel-check"].add_argument("--file")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_PARAM
    if args.output is None:
        args.output = "csv" if args.command in TABULAR else "json"
    try:
        if args.K is not None and args.M is not None and args.D is not None:
            check_params(args.K, args.M, args.D)
        return COMMANDS[args.command](args)
    except _Fail as exc:
        _progress(f"error: {exc}")
        return exc.code
    except (audit.BudgetExceeded, motherset.BudgetExceeded) as exc:
        _progress(f"budget exceeded: {exc}")
        return EXIT_BUDGET
    except (ParameterError, motherset.GraphError, goodrel.RelationError) as exc:
        _progress(f"error: {exc}")
        return EXIT_PARAM


if __name__ == "__main__":
    sys.exit(main())
