"""Exponential step lower bound for the atomic-state rollback compiler.

The synchronous algorithm A computes the minimum boolean input: each
node holds a constant input I and a bit S, and every round S becomes
the minimum S over the closed neighborhood.  The rollback compiler
RC(A) stores the whole synchronous log in an array t of d cells
(t[0] = I) and, when a node is activated, recomputes t[1..d-1] from
the closed neighborhood's cells one index lower.

Arrays are stored as bitmasks: bit j is cell j.  An array with ones
exactly in cells 0..i-1 has *index* i (the "bar i" family).
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Mapping, NamedTuple

from .analysis import move_budget, tally_moves
from .daemon import DaemonPolicy, run_execution
from .sync_model import SyncAlgorithmSpec, run_to_stability
from .topology import NodeId, Topology, build_topology
from .transformer import CORRECT, LAZY, History, TransNodeState, TransParams

# -- gadget graphs ------------------------------------------------------------


@dataclass(frozen=True)
class GadgetGraph:
    x: int
    topology: Topology
    d: int  # array length
    index: dict[str, int]  # initial index per node


def _name(letter: str, i: int) -> str:
    return f"{letter}{i}"


def gadget_graph(x: int) -> GadgetGraph:
    """G_x: x chained five-node paths b-a-c-d-e, b_i and e_i hooked to c_{i-1}."""
    if x < 1:
        raise ValueError("x must be >= 1")
    nodes = []
    edges = []
    for i in range(1, x + 1):
        b, a, c, d, e = (_name(k, i) for k in "bacde")
        nodes += [b, a, c, d, e]
        edges += [(b, a), (a, c), (c, d), (d, e)]
        if i > 1:
            edges += [(b, _name("c", i - 1)), (e, _name("c", i - 1))]
    arcs = [(p, q, "") for p, q in edges] + [(q, p, "") for p, q in edges]
    t = build_topology(nodes, arcs)
    index = {}
    for i in range(1, x + 1):
        base = 3 * (x - i)
        index[_name("a", i)] = index[_name("c", i)] = base + 1
        index[_name("d", i)] = base + 2
        index[_name("b", i)] = index[_name("e", i)] = base + 3
    return GadgetGraph(x, t, 3 * x, index)


def bar(i: int) -> int:
    """Bitmask of the array with ones in cells 0..i-1."""
    return (1 << i) - 1


def is_bar_form(mask: int) -> bool:
    return mask & (mask + 1) == 0


def index_of(mask: int) -> int:
    if not is_bar_form(mask):
        raise ValueError(f"array {mask:b} is not of bar form")
    return mask.bit_length()


# -- RC(A) ----------------------------------------------------------------------


class RollbackSystem:
    """Arrays of every node of a topology, with atomic full-array recomputation."""

    def __init__(self, t: Topology, d: int, arrays: Mapping[NodeId, int], inputs: Mapping[NodeId, int]):
        self.t = t
        self.d = d
        self.full = (1 << d) - 1
        self.ids = list(t.node_ids)
        pos = {p: k for k, p in enumerate(self.ids)}
        self.closed = [[pos[p]] + [pos[q] for q in t.neighbors[p]] for p in self.ids]
        self.inputs = [inputs[p] & 1 for p in self.ids]
        self.masks = [arrays[p] & self.full for p in self.ids]
        for k, m in enumerate(self.masks):
            if m & 1 != self.inputs[k]:
                raise ValueError(f"node {self.ids[k]!r}: cell 0 must equal the input")
        self.pos = pos

    def recompute(self, k: int) -> int:
        masks = self.masks
        acc = self.full
        for j in self.closed[k]:
            acc &= masks[j]
        return ((acc << 1) | self.inputs[k]) & self.full

    def activate(self, p: NodeId) -> bool:
        """Atomic activation of p; True when its array changed."""
        k = self.pos[p]
        new = self.recompute(k)
        changed = new != self.masks[k]
        self.masks[k] = new
        return changed

    def enabled(self) -> list[NodeId]:
        return [p for k, p in enumerate(self.ids) if self.recompute(k) != self.masks[k]]

    def sync_step(self) -> bool:
        new = [self.recompute(k) for k in range(len(self.ids))]
        changed = new != self.masks
        self.masks = new
        return changed

    def arrays(self) -> dict[NodeId, int]:
        return dict(zip(self.ids, self.masks))


def rc_activate(g: GadgetGraph, arrays: Mapping[NodeId, int], node: NodeId) -> int:
    """New array of ``node`` after one activation (inputs all 1)."""
    system = RollbackSystem(g.topology, g.d, arrays, dict.fromkeys(g.topology.node_ids, 1))
    return system.recompute(system.pos[node])


def schedule_length(x: int) -> int:
    n = 1
    for i in range(2, x + 1):
        n = 2 * n + 2 * (3 * i - 2) + i
    return n


def exponential_schedule(x: int) -> list[str]:
    s = [_name("a", 1)]
    for i in range(2, x + 1):
        path = [_name("b", i)]
        for j in range(i - 1, 0, -1):
            path += [_name("c", j), _name("d", j), _name("e", j)]
        lower = [_name("a", j) for j in range(1, i)]
        s = s + path + lower + [_name("a", i)] + path + s
    return s


class ConstructionError(RuntimeError):
    pass


@dataclass
class LowerBoundResult:
    x: int
    nodes: int
    diameter: int
    steps: int
    wasted: int
    bound: int
    final: dict[str, int]
    completion_rounds: int
    completed_all_ones: bool
    seconds: float

    @property
    def passed(self) -> bool:
        return self.steps >= self.bound and self.wasted == 0 and self.completed_all_ones

    def to_json(self) -> dict:
        return {
            "x": self.x,
            "nodes": self.nodes,
            "diameter": self.diameter,
            "steps": self.steps,
            "2^x-1": self.bound,
            "wasted": self.wasted,
            "completion_rounds": self.completion_rounds,
            "seconds": round(self.seconds, 4),
            "pass": self.passed,
        }


def run_lower_bound(x: int, check_form: bool = True) -> LowerBoundResult:
    """Replay the schedule on G_x from the staircase start, then finish synchronously."""
    start = time.perf_counter()
    g = gadget_graph(x)
    t = g.topology
    arrays = {p: bar(i) for p, i in g.index.items()}
    system = RollbackSystem(t, g.d, arrays, dict.fromkeys(t.node_ids, 1))
    steps = wasted = 0
    masks = system.masks
    for p in exponential_schedule(x):
        k = system.pos[p]
        new = system.recompute(k)
        if new == masks[k]:
            wasted += 1
            continue
        if check_form and new & (new + 1):
            raise ConstructionError(f"activation {steps} of {p} left bar form: {new:b}")
        masks[k] = new
        steps += 1
    final = system.arrays()
    rounds = 0
    while system.sync_step():
        rounds += 1
    done = all(m == system.full for m in system.masks)
    return LowerBoundResult(
        x=x,
        nodes=t.n,
        diameter=t.diameter,
        steps=steps,
        wasted=wasted,
        bound=2**x - 1,
        final=final,
        completion_rounds=rounds,
        completed_all_ones=done,
        seconds=time.perf_counter() - start,
    )


# -- A as a synchronous algorithm, for the transformer side of the contrast -------


class MinState(NamedTuple):
    I: int
    S: int


def min_algo(state: MinState, view: frozenset) -> MinState:
    s = state.S
    for _, q in view:
        if q.S < s:
            s = q.S
    return MinState(state.I, s)


def min_is_valid(t: Topology, init: Mapping[NodeId, MinState]) -> bool:
    return set(init) == set(t.node_ids) and all(
        v.I in (0, 1) and v.S == v.I for v in init.values()
    )


def min_spec() -> SyncAlgorithmSpec:
    return SyncAlgorithmSpec(
        name="min-input",
        algo=min_algo,
        is_valid=min_is_valid,
        sample_state=lambda rng: MinState(rng.randrange(2), rng.randrange(2)),
        encode=list,
        decode=lambda obj: MinState(*obj),
    )


def contrast(x: int, policies=("sync", "central-random", "dist-random", "adv"), seed: int = 0) -> dict:
    """Transformer (lazy, B = d-1) started from the staircase arrays of G_x.

    Cells 1..d-1 of each rollback array become the history list, all
    statuses C.  Returns the rollback step count next to the worst
    transformer move count and the closed-form move budget.
    """
    g = gadget_graph(x)
    t = g.topology
    spec = min_spec()
    init = {p: MinState(1, 1) for p in t.node_ids}
    T = run_to_stability(t, spec, init).stability_time
    B = g.d - 1
    params = TransParams(LAZY, B)
    cfg = {}
    for p in t.node_ids:
        mask = bar(g.index[p])
        cells = [MinState(1, (mask >> j) & 1) for j in range(1, g.d)]
        cfg[p] = TransNodeState(init[p], CORRECT, History(cells))
    budget = move_budget(t.n, t.diameter, B, T, params)
    runs = {}
    for k, kind in enumerate(policies):
        trace = run_execution(t, spec, params, cfg, DaemonPolicy(kind, seed + k))
        tally = tally_moves(trace, replay=False)
        runs[kind] = {"moves": tally.total, "terminated": trace.terminated, "rounds": trace.num_rounds}
    lower = run_lower_bound(x)
    worst = max(r["moves"] for r in runs.values())
    return {
        "x": x,
        "nodes": t.n,
        "diameter": t.diameter,
        "T": T,
        "B": B,
        "rollback_steps": lower.steps,
        "transformer_moves": runs,
        "transformer_worst": worst,
        "move_budget": budget,
        "pass": all(r["terminated"] for r in runs.values()) and worst <= budget,
    }


def random_bar_configuration(g: GadgetGraph, rng: random.Random) -> dict[str, int]:
    return {p: bar(rng.randint(1, g.d)) for p in g.topology.node_ids}
