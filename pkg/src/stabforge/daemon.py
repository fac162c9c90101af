"""Daemon policies, execution driver, round accounting and trace files."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, NamedTuple, Sequence

from .evaluator import Evaluator
from .sync_model import SyncAlgorithmSpec
from .topology import NodeId, Topology
from .transformer import (
    HeightCapExceeded,
    Rule,
    TransConfig,
    TransNodeState,
    TransParams,
    config_to_json,
    parse_bound,
)

SYNC = "sync"
CENTRAL_RANDOM = "central-random"
DIST_RANDOM = "dist-random"
SCRIPTED = "scripted"
ADVERSARIAL = "adv"
POLICY_KINDS = (SYNC, CENTRAL_RANDOM, DIST_RANDOM, SCRIPTED, ADVERSARIAL)

TERMINAL = "terminal"
MAX_STEPS = "max-steps"
HEIGHT_CAP = "height-cap"


class PolicyFault(RuntimeError):
    """A policy returned an empty selection or one containing a disabled node."""


@dataclass(frozen=True)
class DaemonPolicy:
    kind: str = SYNC
    seed: int = 0
    script: tuple[tuple[NodeId, ...], ...] | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown daemon {self.kind!r}; expected one of {', '.join(POLICY_KINDS)}")
        if self.kind == SCRIPTED and self.script is None:
            raise ValueError("scripted daemon needs a script")

    def selector(self, t: Topology) -> "Selector":
        return Selector(self, t)

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"kind": self.kind, "seed": self.seed}
        if self.script is not None:
            doc["script"] = [list(s) for s in self.script]
        return doc

    @classmethod
    def from_json(cls, doc: Mapping[str, Any], decode_id: Callable[[Any], NodeId] = lambda x: x):
        script = doc.get("script")
        if script is not None:
            script = tuple(tuple(decode_id(p) for p in s) for s in script)
        return cls(doc["kind"], int(doc.get("seed", 0)), script)


class Selector:
    """Per-execution daemon state (RNG, script cursor)."""

    def __init__(self, policy: DaemonPolicy, t: Topology):
        self.policy = policy
        self.t = t
        self.rng = random.Random(policy.seed)
        self.cursor = 0

    def select(self, enabled: Sequence[NodeId], ev: Evaluator) -> list[NodeId]:
        kind = self.policy.kind
        if kind == SYNC:
            return list(enabled)
        if kind == CENTRAL_RANDOM:
            return [self.rng.choice(enabled)]
        if kind == DIST_RANDOM:
            while True:
                chosen = [p for p in enabled if self.rng.random() < 0.5]
                if chosen:
                    return chosen
        if kind == ADVERSARIAL:
            return self._adversarial(enabled, ev)
        return self._scripted(enabled)

    def _adversarial(self, enabled: Sequence[NodeId], ev: Evaluator) -> list[NodeId]:
        depth = {}
        for p in enabled:
            rule = ev.rules[p]
            if rule.kind == "R":
                depth[p] = ev.height(p)
            elif rule.kind == "P":
                depth[p] = ev.height(p) - rule.index
            else:
                depth[p] = 0
        best = max(depth.values())
        if best == 0:
            return [enabled[0]]
        return [p for p in enabled if depth[p] == best]

    def _scripted(self, enabled: Sequence[NodeId]) -> list[NodeId]:
        script = self.policy.script or ()
        if self.cursor >= len(script):
            return [enabled[0]]
        chosen = list(script[self.cursor])
        self.cursor += 1
        allowed = set(enabled)
        bad = [p for p in chosen if p not in allowed]
        if bad:
            raise PolicyFault(f"script entry {self.cursor - 1} selects disabled node(s) {bad!r}")
        return chosen


class Step(NamedTuple):
    selected: tuple[NodeId, ...]
    rules: tuple[Rule, ...]  # aligned with selected
    enabled: tuple[NodeId, ...]  # enabled set before the step

    @property
    def moves(self) -> dict[NodeId, Rule]:
        return dict(zip(self.selected, self.rules))


@dataclass
class ExecutionTrace:
    topology: Topology
    spec: SyncAlgorithmSpec
    params: TransParams
    policy: DaemonPolicy
    initial: dict[NodeId, TransNodeState]
    steps: list[Step]
    round_marks: list[int]
    final: dict[NodeId, TransNodeState]
    final_enabled: tuple[NodeId, ...]
    terminated: bool
    stop_reason: str
    first_clean: int | None  # index of the first clean configuration
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def num_moves(self) -> int:
        return sum(len(s.selected) for s in self.steps)

    @property
    def num_rounds(self) -> int:
        return len(self.round_marks)


class RoundCounter:
    """Neutralization-based round boundaries, fed one configuration at a time.

    A round starting at configuration i ends at the first configuration
    j > i by which every node enabled in configuration i has moved or
    has been disabled.  Marks are the indices j, i.e. the number of steps
    completed when the round ends.
    """

    def __init__(self, enabled0: Iterable[NodeId]):
        self.pending = set(enabled0)
        self.marks: list[int] = []
        self.steps = 0

    def feed(self, moved: Iterable[NodeId], enabled_after: Iterable[NodeId]) -> None:
        self.steps += 1
        enabled_after = set(enabled_after)
        self.pending.difference_update(moved)
        self.pending.intersection_update(enabled_after)
        if not self.pending:
            self.marks.append(self.steps)
            self.pending = enabled_after


def _ordered(t: Topology, nodes: Iterable[NodeId]) -> tuple[NodeId, ...]:
    return tuple(sorted(nodes, key=t.index.__getitem__))


def default_max_steps(t: Topology, params: TransParams) -> int:
    return 64 * t.n**3 + 64 * t.n * params.effective_cap(t)


def run_execution(
    t: Topology,
    spec: SyncAlgorithmSpec,
    params: TransParams,
    init_cfg: TransConfig,
    policy: DaemonPolicy,
    max_steps: int | None = None,
    monitor=None,
) -> ExecutionTrace:
    """Run the daemon until no node is enabled or ``max_steps`` steps.

    ``monitor``, if given, is called as ``monitor(index, ev, moves)``
    on the initial configuration (moves None) and after every step.
    """
    if set(init_cfg) != set(t.node_ids):
        raise ValueError("initial configuration must cover exactly the topology's nodes")
    if max_steps is None:
        max_steps = default_max_steps(t, params)
    ev = Evaluator(t, spec, params, init_cfg)
    initial = dict(init_cfg)
    selector = policy.selector(t)
    steps: list[Step] = []
    enabled = _ordered(t, ev.rules)
    counter = RoundCounter(enabled)
    first_clean = 0 if ev.is_clean() else None
    if monitor is not None:
        monitor(0, ev, None)
    stop = TERMINAL
    while enabled:
        if len(steps) >= max_steps:
            stop = MAX_STEPS
            break
        chosen = selector.select(enabled, ev)
        if not chosen:
            raise PolicyFault(f"{policy.kind} daemon returned an empty selection")
        allowed = ev.rules
        if any(p not in allowed for p in chosen):
            raise PolicyFault(f"{policy.kind} daemon selected a disabled node")
        chosen = _ordered(t, set(chosen))
        try:
            moves = ev.step(chosen)
        except HeightCapExceeded:
            stop = HEIGHT_CAP
            break
        steps.append(Step(chosen, tuple(moves[p] for p in chosen), enabled))
        enabled = _ordered(t, ev.rules)
        counter.feed(chosen, enabled)
        if first_clean is None and ev.is_clean():
            first_clean = len(steps)
        if monitor is not None:
            monitor(len(steps), ev, moves)
    return ExecutionTrace(
        topology=t,
        spec=spec,
        params=params,
        policy=policy,
        initial=initial,
        steps=steps,
        round_marks=counter.marks,
        final=ev.snapshot(),
        final_enabled=enabled,
        terminated=not enabled,
        stop_reason=stop,
        first_clean=first_clean,
    )


def compute_rounds(trace: ExecutionTrace) -> list[int]:
    """Round marks recomputed from the recorded enabled sets."""
    if not trace.steps:
        return []
    counter = RoundCounter(trace.steps[0].enabled)
    for i, step in enumerate(trace.steps):
        after = trace.steps[i + 1].enabled if i + 1 < len(trace.steps) else trace.final_enabled
        counter.feed(step.selected, after)
    return counter.marks


def rounds_until(round_marks: Sequence[int], config_index: int) -> int:
    """Number of rounds needed to reach configuration ``config_index``.

    Zero for the initial configuration; otherwise the 1-based index of
    the round during which the configuration is reached.
    """
    if config_index == 0:
        return 0
    for k, mark in enumerate(round_marks):
        if mark >= config_index:
            return k + 1
    return len(round_marks) + 1


def params_to_json(params: TransParams) -> dict[str, Any]:
    return {"mode": params.mode, "B": params.b_label(), "height_cap": params.height_cap}


def params_from_json(doc: Mapping[str, Any]) -> TransParams:
    return TransParams(doc["mode"], parse_bound(doc["B"]), doc.get("height_cap"))


# -- JSONL trace files --------------------------------------------------------


def write_trace(trace: ExecutionTrace, path: str | Path, header_extra: Mapping[str, Any] | None = None):
    t = trace.topology
    header = {
        "type": "header",
        "algorithm": trace.spec.name,
        "params": params_to_json(trace.params),
        "policy": trace.policy.to_json(),
        "seed": trace.policy.seed,
        "topology": t.to_json(),
        "initial": config_to_json(t, trace.spec, trace.initial),
    }
    if header_extra:
        header.update(header_extra)
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for step in trace.steps:
            line = {
                "sel": list(step.selected),
                "rules": {str(p): str(r) for p, r in zip(step.selected, step.rules)},
                "en": list(step.enabled),
            }
            fh.write(json.dumps(line) + "\n")
        footer = {
            "type": "footer",
            "round_marks": trace.round_marks,
            "terminated": trace.terminated,
            "stop": trace.stop_reason,
            "first_clean": trace.first_clean,
            "final": config_to_json(t, trace.spec, trace.final),
        }
        fh.write(json.dumps(footer) + "\n")


@dataclass
class TraceFile:
    header: dict[str, Any]
    steps: list[dict[str, Any]]
    footer: dict[str, Any] | None


def read_trace(path: str | Path) -> TraceFile:
    header = None
    footer = None
    steps = []
    with open(path) as fh:
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            doc = json.loads(raw)
            kind = doc.get("type")
            if kind == "header":
                header = doc
            elif kind == "footer":
                footer = doc
            else:
                steps.append(doc)
    if header is None:
        raise ValueError(f"{path}: trace has no header line")
    return TraceFile(header, steps, footer)
