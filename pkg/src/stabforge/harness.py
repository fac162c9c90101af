"""Runs, campaigns and replays: everything the CLI drives.

A ``Job`` is a fully explicit, picklable description of one execution
(graph, instance, parameters, daemon, start configuration and all
seeds).  Trace headers embed the job so that a trace can be re-run from
its header alone.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from . import instances
from .analysis import InvariantMonitor, check_terminal, tally_moves, verify_bounds
from .daemon import (
    SCRIPTED,
    DaemonPolicy,
    ExecutionTrace,
    read_trace,
    run_execution,
    write_trace,
)
from .evaluator import Evaluator
from .graphs import generate
from .sync_model import SyncHistory, run_to_stability
from .topology import NodeId, Topology, load_graph
from .transformer import (
    ContractViolation,
    LAZY,
    TransParams,
    clean_config,
    config_from_json,
    config_to_json,
    fuzz_config,
    parse_bound,
)

SEED_ENV = "STABFORGE_SEED"


def derive_seed(seed: int, *keys: Any) -> int:
    """Independent 64-bit sub-seed for a component, stable across runs and platforms."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for k in keys:
        h.update(b"\x00" + str(k).encode())
    return int.from_bytes(h.digest(), "big")


def env_seed(default: int) -> int:
    raw = os.environ.get(SEED_ENV)
    return default if raw in (None, "") else int(raw)


_BOUND_EXPR = re.compile(r"^\s*(\d*)\s*D\s*(?:([+-])\s*(\d+))?\s*$")


def resolve_bound(text: str | int | None, D: int) -> int | None:
    """An integer, 'inf', or an affine expression in the diameter such as '2D+4'."""
    if isinstance(text, str):
        m = _BOUND_EXPR.match(text)
        if m:
            a = int(m.group(1)) if m.group(1) else 1
            b = int(m.group(3) or 0) * (-1 if m.group(2) == "-" else 1)
            value = a * D + b
            if value < 1:
                raise ValueError(f"bound {text!r} evaluates to {value} for D={D}")
            return value
    return parse_bound(text)


class InputError(ValueError):
    """Invalid user input (exit code 2)."""


@dataclass(frozen=True)
class Job:
    instance: str
    gen: str | None = "random-connected"
    n: int = 10
    graph_seed: int = 0
    graph_file: str | None = None
    edge_prob: float | None = None
    init_seed: int = 0
    c: int = 2
    literal: bool = False
    mode: str = LAZY
    bound: str = "2D+4"
    height_cap: int | None = None
    daemon: str = "sync"
    daemon_seed: int = 0
    script: tuple | None = None
    start: str = "fuzz"  # fuzz | clean | config
    fuzz_seed: int = 0
    config_file: str | None = None
    max_steps: int | None = None
    invariants: bool = True
    reference_every: int = 0

    def to_json(self) -> dict[str, Any]:
        doc = asdict(self)
        if self.script is not None:
            doc["script"] = [list(s) for s in self.script]
        return doc

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "Job":
        doc = dict(doc)
        if doc.get("script") is not None:
            doc["script"] = tuple(tuple(s) for s in doc["script"])
        return cls(**doc)


@dataclass
class Setup:
    job: Job
    topology: Topology
    instance: instances.Instance
    spec: Any
    init: dict[NodeId, Any]
    history: SyncHistory
    params: TransParams

    @property
    def options(self) -> dict[str, Any]:
        return {"c": self.job.c, "literal": self.job.literal}


def build_topology_for(job: Job) -> tuple[Topology, dict[str, Any] | None]:
    inst = instances.get(job.instance)
    if job.graph_file:
        t, doc = load_graph(job.graph_file)
        return t, doc
    kind = job.gen or inst.default_graph
    t = generate(kind, job.n, random.Random(job.graph_seed), job.edge_prob)
    return inst.prepare(t), None


def _init_from_doc(t: Topology, spec, raw: Any) -> dict[NodeId, Any]:
    if isinstance(raw, list):
        if len(raw) != t.n:
            raise InputError(f"'init' lists {len(raw)} states for {t.n} nodes")
        return {p: spec.decode(v) for p, v in zip(t.node_ids, raw)}
    if isinstance(raw, dict):
        out = {}
        for p in t.node_ids:
            if str(p) not in raw:
                raise InputError(f"'init' has no state for node {p!r}")
            out[p] = spec.decode(raw[str(p)])
        return out
    raise InputError("'init' must be a list or an object keyed by node id")


def setup(job: Job) -> Setup:
    inst = instances.get(job.instance)
    t, doc = build_topology_for(job)
    opts = {"c": job.c, "literal": job.literal}
    spec = inst.make_spec(t, opts)
    if doc is not None and "init" in doc:
        try:
            init = _init_from_doc(t, spec, doc["init"])
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad 'init' entry: {exc}") from exc
    else:
        init = inst.initial(t, random.Random(job.init_seed), opts)
    history = run_to_stability(t, spec, init)
    params = TransParams(job.mode, resolve_bound(job.bound, t.diameter), job.height_cap)
    return Setup(job, t, inst, spec, init, history, params)


def start_configuration(s: Setup):
    job = s.job
    if job.start == "clean":
        return clean_config(s.topology, s.init)
    if job.start == "config":
        if not job.config_file:
            raise InputError("start 'config' needs a configuration file")
        doc = json.loads(Path(job.config_file).read_text())
        cfg = config_from_json(s.topology, s.spec, doc)
        for p in s.topology.node_ids:
            if cfg[p].init != s.init[p]:
                raise InputError(f"snapshot init of node {p!r} differs from the instance input")
        return cfg
    if job.start == "fuzz":
        return fuzz_config(s.topology, s.spec, s.history, s.params, random.Random(job.fuzz_seed))
    raise InputError(f"unknown start {job.start!r}")


def policy_for(job: Job) -> DaemonPolicy:
    if job.daemon == SCRIPTED:
        return DaemonPolicy(SCRIPTED, job.daemon_seed, job.script or ())
    return DaemonPolicy(job.daemon, job.daemon_seed)


@dataclass
class RunResult:
    job: Job
    trace: ExecutionTrace
    report: Any
    tally: Any
    T: int
    terminal_problems: list[str]
    validator_problems: list[str]
    invariant_violations: list[str]
    oracle_problems: list[str]
    expected_infinite: bool

    @property
    def ok(self) -> bool:
        if self.invariant_violations or self.oracle_problems:
            return False
        if not self.report.passed:
            return False
        if self.trace.terminated:
            return not self.terminal_problems and not self.validator_problems
        return self.expected_infinite

    def summary(self) -> dict[str, Any]:
        t = self.trace.topology
        return {
            "ok": self.ok,
            "instance": self.job.instance,
            "daemon": self.job.daemon,
            "n": t.n,
            "D": t.diameter,
            "T": self.T,
            "B": self.trace.params.b_label(),
            "mode": self.trace.params.mode,
            "terminated": self.trace.terminated,
            "stop": self.trace.stop_reason,
            "expected_infinite": self.expected_infinite,
            "steps": len(self.trace.steps),
            "moves": self.tally.total,
            "rounds": self.trace.num_rounds,
            "first_clean": self.tally.first_clean,
            "bound_failures": [
                {"name": c.name, "observed": c.observed, "bound": c.bound} for c in self.report.failures()
            ],
            "terminal_problems": self.terminal_problems[:5],
            "validator_problems": self.validator_problems[:5],
            "invariant_violations": self.invariant_violations[:5],
            "oracle_problems": self.oracle_problems,
            "checks": {c.name: [c.observed, c.bound] for c in self.report.checks},
            "moves_per_n3": self.report.stats["moves_per_n3"],
            "p_constant": self.report.stats["p_constant"],
        }


def oracle_problems(s: Setup) -> list[str]:
    t = s.topology
    T = s.history.stability_time
    problems = list(s.instance.validate_stable(t, s.history.final))
    bound = s.instance.round_bound(t, s.options)
    if T > bound:
        problems.append(f"stability time {T} exceeds the instance bound {bound}")
    for name, value in s.instance.extra_bounds(t, s.options).items():
        if T > value:
            problems.append(f"stability time {T} exceeds the {name} bound {value}")
    return problems


def run_job(job: Job, trace_path: str | Path | None = None) -> RunResult:
    s = setup(job)
    cfg = start_configuration(s)
    monitor = InvariantMonitor(reference_every=job.reference_every) if job.invariants else None
    trace = run_execution(
        s.topology, s.spec, s.params, cfg, policy_for(job), max_steps=job.max_steps, monitor=monitor
    )
    T = s.history.stability_time
    tally = tally_moves(trace, replay=False)
    report = verify_bounds(trace, T, tally)
    terminal: list[str] = []
    validator: list[str] = []
    if trace.terminated:
        terminal = check_terminal(s.topology, trace.final, s.history, s.params)
        if not terminal:
            H = trace.final[s.topology.node_ids[0]].hei
            if H >= T:
                row = {p: trace.final[p].cell(H) for p in s.topology.node_ids}
                validator = s.instance.validate_stable(s.topology, row)
    if trace_path is not None:
        write_trace(trace, trace_path, {"job": job.to_json(), "instance": job.instance})
    return RunResult(
        job=job,
        trace=trace,
        report=report,
        tally=tally,
        T=T,
        terminal_problems=terminal,
        validator_problems=validator,
        invariant_violations=[] if monitor is None else monitor.violations,
        oracle_problems=oracle_problems(s),
        expected_infinite=s.params.non_terminating and not trace.terminated,
    )


def run_job_summary(job: Job) -> dict[str, Any]:
    """Worker entry point: summaries are small and picklable."""
    try:
        return run_job(job).summary()
    except Exception as exc:  # noqa: BLE001 - reported as a campaign failure
        return {"ok": False, "instance": job.instance, "error": repr(exc), "job": job.to_json()}


def run_campaign(jobs: Sequence[Job], workers: int | None = None) -> list[dict[str, Any]]:
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(jobs) <= 1:
        return [run_job_summary(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_job_summary, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def aggregate(results: Iterable[Mapping[str, Any]]) -> dict[str, Any]:
    results = list(results)
    out: dict[str, Any] = {
        "runs": len(results),
        "passed": sum(1 for r in results if r.get("ok")),
        "terminated": sum(1 for r in results if r.get("terminated")),
        "failures": [r for r in results if not r.get("ok")][:20],
    }
    if not results:
        return out
    good = [r for r in results if "moves" in r]
    if good:
        worst = max(good, key=lambda r: r["moves_per_n3"])
        out["max_moves"] = max(r["moves"] for r in good)
        out["max_rounds"] = max(r["rounds"] for r in good)
        out["worst_moves_per_n3"] = worst["moves_per_n3"]
        out["max_p_constant"] = max(r["p_constant"] for r in good)
        ratios: dict[str, float] = {}
        for r in good:
            for name, (obs, bound) in r["checks"].items():
                if bound:
                    ratios[name] = max(ratios.get(name, 0.0), obs / bound)
        out["max_observed_over_bound"] = ratios
    return out


# -- replay ----------------------------------------------------------------------


@dataclass
class ReplayOutcome:
    ok: bool
    problems: list[str] = field(default_factory=list)


def replay_trace(path: str | Path) -> ReplayOutcome:
    """Re-run a trace from its header and compare with the recorded steps and footer.

    Also re-applies the recorded selections one by one from the recorded
    initial configuration, independently of the daemon.
    """
    tf = read_trace(path)
    if "job" not in tf.header:
        raise InputError(f"{path}: header carries no job description")
    if tf.footer is None:
        return ReplayOutcome(False, ["trace has no footer"])
    job = Job.from_json(tf.header["job"])
    problems: list[str] = []
    result = run_job(job)
    trace = result.trace
    t = trace.topology
    spec = trace.spec
    if config_to_json(t, spec, trace.initial) != tf.header["initial"]:
        problems.append("initial configuration differs")
    recorded = [(s["sel"], s["rules"]) for s in tf.steps]
    rerun = [
        (json.loads(json.dumps(list(st.selected))), {str(p): str(r) for p, r in zip(st.selected, st.rules)})
        for st in trace.steps
    ]
    if recorded != rerun:
        problems.append(f"step records differ ({len(recorded)} recorded, {len(rerun)} re-run)")
    if trace.round_marks != tf.footer["round_marks"]:
        problems.append("round marks differ")
    if trace.terminated != tf.footer["terminated"]:
        problems.append("terminated flag differs")
    if config_to_json(t, spec, trace.final) != tf.footer["final"]:
        problems.append("final configuration differs")

    # selection-level replay, no daemon involved
    by_key = {str(p): p for p in t.node_ids}
    cfg = config_from_json(t, spec, tf.header["initial"])
    ev = Evaluator(t, spec, trace.params, cfg)
    for k, (sel, rules) in enumerate(recorded):
        try:
            moves = ev.step([by_key[str(p)] for p in sel])
        except (KeyError, ContractViolation) as exc:
            problems.append(f"step {k}: recorded selection cannot be replayed: {exc}")
            break
        if {str(p): str(r) for p, r in moves.items()} != rules:
            problems.append(f"step {k}: recorded rules differ from the rules enabled on replay")
            break
    if config_to_json(t, spec, ev.cfg) != tf.footer["final"]:
        problems.append("selection replay does not reach the recorded final configuration")
    return ReplayOutcome(not problems, problems)


def history_jsonl(t: Topology, spec, history: SyncHistory) -> list[str]:
    lines = []
    for i, row in enumerate(history.rounds):
        lines.append(json.dumps({"round": i, "states": {str(p): spec.encode(row[p]) for p in t.node_ids}}))
    lines.append(json.dumps({"type": "summary", "T": history.stability_time, "n": t.n, "D": t.diameter}))
    return lines

