"""Command line front-end.

Exit codes: 0 success, 1 property or bound violation, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import instances
from .daemon import POLICY_KINDS, SCRIPTED
from .graphs import GENERATORS
from .harness import (
    InputError,
    Job,
    aggregate,
    derive_seed,
    env_seed,
    history_jsonl,
    replay_trace,
    run_campaign,
    run_job,
    setup,
)
from .rollback import contrast, run_lower_bound
from .sync_model import InvalidInitialConfiguration, NotStableError
from .topology import TopologyError

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2

INPUT_ERRORS = (
    InputError,
    TopologyError,
    InvalidInitialConfiguration,
    FileNotFoundError,
    json.JSONDecodeError,
    ValueError,
    KeyError,
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", choices=instances.NAMES, default="leader")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--graph", metavar="FILE", help="graph JSON file")
    src.add_argument("--gen", choices=GENERATORS, help="graph generator (default: the instance's)")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="master seed (STABFORGE_SEED overrides)")
    p.add_argument("--edge-prob", type=float, default=None)
    p.add_argument("--c", type=int, default=2, help="identifier-space exponent (color3)")
    p.add_argument("--literal", action="store_true", help="cluster-front: unfiltered Dist/Par rule")
    p.add_argument("--out", metavar="DIR", default=None)


def _add_exec(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("lazy", "greedy"), default="lazy")
    p.add_argument("--bound", default="2D+4", help="B: integer, 'inf', or an expression like 2D+4")
    p.add_argument("--daemon", default="sync", help="sync|central-random|dist-random|adv|script:FILE")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--height-cap", type=int, default=None, help="history cap when B is infinite")
    p.add_argument("--start", choices=("fuzz", "clean", "config"), default="fuzz")
    p.add_argument("--config", metavar="FILE", help="configuration snapshot for --start config")
    p.add_argument("--fuzz", type=int, default=0, metavar="N", help="number of corrupted starts")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-invariants", action="store_true", help="skip the per-step invariant suite")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stabforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle", help="run the synchronous algorithm to stability")
    _add_common(p)

    p = sub.add_parser("run", help="one transformed execution with move/round verification")
    _add_common(p)
    _add_exec(p)

    p = sub.add_parser("fuzz", help="campaign over corrupted initial configurations")
    _add_common(p)
    _add_exec(p)

    p = sub.add_parser("rollback", help="rollback-compiler lower bound on gadget graphs")
    p.add_argument("--x", type=int, default=3)
    p.add_argument("--contrast", action="store_true", help="also run the transformer on the same start")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("replay", help="re-run a trace from its header and compare")
    p.add_argument("trace")
    return parser


def _daemon(text: str) -> tuple[str, tuple | None]:
    if text.startswith("script:"):
        doc = json.loads(Path(text[len("script:"):]).read_text())
        if not isinstance(doc, list):
            raise InputError("a daemon script is a JSON list of node lists")
        return SCRIPTED, tuple(tuple(entry) for entry in doc)
    if text not in POLICY_KINDS or text == SCRIPTED:
        raise InputError(f"unknown daemon {text!r}")
    return text, None


def base_job(args, k: int = 0) -> Job:
    seed = env_seed(args.seed)
    fields = dict(
        instance=args.instance,
        gen=getattr(args, "gen", None),
        n=args.n,
        graph_seed=derive_seed(seed, "graph"),
        graph_file=args.graph,
        edge_prob=args.edge_prob,
        init_seed=derive_seed(seed, "init"),
        c=args.c,
        literal=args.literal,
    )
    if hasattr(args, "mode"):
        kind, script = _daemon(args.daemon)
        fields.update(
            mode=args.mode,
            bound=args.bound,
            height_cap=args.height_cap,
            daemon=kind,
            daemon_seed=derive_seed(seed, "daemon", k),
            script=script,
            start=args.start,
            fuzz_seed=derive_seed(seed, "fuzz", k),
            config_file=args.config,
            max_steps=args.max_steps,
            invariants=not args.no_invariants,
        )
    return Job(**fields)


def _emit(doc, out: str | None, name: str) -> None:
    text = json.dumps(doc, indent=2, default=str)
    print(text)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text + "\n")


def cmd_oracle(args) -> int:
    try:
        s = setup(base_job(args))
    except NotStableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    t = s.topology
    lines = history_jsonl(t, s.spec, s.history)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "oracle.jsonl").write_text("\n".join(lines) + "\n")
    T = s.history.stability_time
    bound = s.instance.round_bound(t, s.options)
    problems = s.instance.validate_stable(t, s.history.final)
    if T > bound:
        problems.append(f"T={T} exceeds the documented bound {bound}")
    summary = {"instance": args.instance, "n": t.n, "D": t.diameter, "T": T, "bound": bound,
               "valid": not problems, "problems": problems[:10]}
    print(json.dumps(summary))
    return EXIT_OK if not problems else EXIT_VIOLATION


def _run_single(args) -> int:
    job = base_job(args)
    trace_path = None
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        trace_path = Path(args.out) / "trace.jsonl"
    result = run_job(job, trace_path)
    summary = result.summary()
    if args.out:
        (Path(args.out) / "report.json").write_text(result.report.dumps() + "\n")
        (Path(args.out) / "report.csv").write_text(result.report.to_csv())
    print(json.dumps(summary, default=str))
    return EXIT_OK if result.ok else EXIT_VIOLATION


def cmd_run(args) -> int:
    if args.fuzz:
        return cmd_fuzz(args)
    return _run_single(args)


def cmd_fuzz(args) -> int:
    jobs = [replace(base_job(args, k), start="fuzz") for k in range(args.fuzz)]
    if jobs:
        setup(jobs[0])  # surface input errors before fanning out
    results = run_campaign(jobs, args.workers)
    report = aggregate(results)
    report["instance"] = args.instance
    _emit(report, args.out, "fuzz_report.json")
    return EXIT_OK if report["passed"] == report["runs"] else EXIT_VIOLATION


def cmd_rollback(args) -> int:
    if args.x < 1:
        raise InputError("--x must be >= 1")
    res = run_lower_bound(args.x)
    doc = res.to_json()
    ok = res.passed
    if args.contrast:
        doc["contrast"] = contrast(args.x, seed=env_seed(args.seed))
        ok = ok and doc["contrast"]["pass"]
    print(json.dumps(doc))
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_replay(args) -> int:
    outcome = replay_trace(args.trace)
    print(json.dumps({"trace": args.trace, "reproduced": outcome.ok, "problems": outcome.problems}))
    return EXIT_OK if outcome.ok else EXIT_VIOLATION


COMMANDS = {
    "oracle": cmd_oracle,
    "run": cmd_run,
    "fuzz": cmd_fuzz,
    "rollback": cmd_rollback,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
