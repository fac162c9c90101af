"""Configuration checkers, move tallies and the move/round bound verifier."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable

from .daemon import ExecutionTrace, rounds_until
from .evaluator import Evaluator
from .sync_model import SyncAlgorithmSpec, SyncHistory
from .topology import NodeId, Topology
from .transformer import (
    CORRECT,
    ERROR,
    GREEDY,
    LAZY,
    TransConfig,
    TransParams,
    enabled_rules,
    pred_root,
)

# -- configuration predicates ------------------------------------------------


def roots_of(t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig) -> set[NodeId]:
    return {p for p in t.node_ids if pred_root(t, spec, cfg, p)}


def _almost_clean_shape(t: Topology, cfg: TransConfig, roots: Iterable[NodeId]) -> bool:
    for r in roots:
        if cfg[r].hei != 0 or cfg[r].s != ERROR:
            return False
    for p, q in t.edges():
        if abs(cfg[p].hei - cfg[q].hei) > 1:
            return False
    return True


def is_almost_clean(t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig) -> bool:
    """Every root sits at height 0 with status E and neighbors differ by at most 1."""
    return _almost_clean_shape(t, cfg, roots_of(t, spec, cfg))


def is_clean(t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig) -> bool:
    return not any(pred_root(t, spec, cfg, p) for p in t.node_ids)


def no_error_rule_enabled(
    t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig, params: TransParams
) -> bool:
    return not any(r.is_error_rule for r in enabled_rules(t, spec, cfg, params).values())


def only_update_enabled(
    t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig, params: TransParams
) -> bool:
    return all(r.kind == "U" for r in enabled_rules(t, spec, cfg, params).values())


# -- paths -------------------------------------------------------------------


def _e_path(t: Topology, cfg: TransConfig, p: NodeId, is_root) -> list[NodeId] | None:
    path = [p]
    cur = p
    while not is_root(cur):
        h = cfg[cur].hei
        nxt = None
        for q in t.neighbors[cur]:
            if cfg[q].s == ERROR and cfg[q].hei < h:
                nxt = q
                break
        if nxt is None:
            return None
        path.append(nxt)
        cur = nxt
    return path


def find_e_path(
    t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig, p: NodeId
) -> list[NodeId] | None:
    """Strictly decreasing path of E nodes from p to a root, by greedy descent."""
    if cfg[p].s != ERROR:
        raise ValueError(f"node {p!r} has status C; E-paths start at E nodes")
    return _e_path(t, cfg, p, lambda q: pred_root(t, spec, cfg, q))


def find_d_path(
    t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig, p: NodeId
) -> list[NodeId] | None:
    """A decreasing path: gently decreasing C prefix, then an E-path."""

    def is_root(q):
        return pred_root(t, spec, cfg, q)

    failed: set[NodeId] = set()

    def search(q: NodeId) -> list[NodeId] | None:
        if cfg[q].s == ERROR:
            return _e_path(t, cfg, q, is_root)
        if q in failed:
            return None
        h = cfg[q].hei
        for r in t.neighbors[q]:
            hr = cfg[r].hei
            if cfg[r].s == ERROR and hr < h:
                tail = _e_path(t, cfg, r, is_root)
            elif cfg[r].s == CORRECT and hr == h - 1:
                tail = search(r)
            else:
                continue
            if tail is not None:
                return [q] + tail
        failed.add(q)
        return None

    return search(p)


# -- terminal shape ------------------------------------------------------------


def check_terminal(
    t: Topology, cfg: TransConfig, history: SyncHistory, params: TransParams
) -> list[str]:
    """Problems with a terminal configuration (empty list when it has the expected shape)."""
    problems = []
    hs = {cfg[p].hei for p in t.node_ids}
    if len(hs) != 1:
        return [f"heights not uniform: {sorted(hs)}"]
    (H,) = hs
    bad_status = [p for p in t.node_ids if cfg[p].s != CORRECT]
    if bad_status:
        problems.append(f"nodes with status E: {bad_status[:5]!r}")
    T = history.stability_time
    B = params.bound_B
    if params.mode == GREEDY:
        if B is not None and H != B:
            problems.append(f"greedy terminal height {H} != B={B}")
    else:
        if B is not None and B < T:
            if H != B:
                problems.append(f"lazy terminal height {H} != B={B} although B < T={T}")
        elif H < T:
            problems.append(f"lazy terminal height {H} < T={T}")
    for p in t.node_ids:
        if cfg[p].init != history.rounds[0][p]:
            problems.append(f"node {p!r}: init differs from the oracle input")
        L = cfg[p].L
        for i in range(1, H + 1):
            if L[i - 1] != history.row(i)[p]:
                problems.append(f"node {p!r}: cell {i} differs from oracle row {i}")
                break
    return problems


# -- move tallies ----------------------------------------------------------------


def first_clean_by_replay(trace: ExecutionTrace) -> int | None:
    ev = Evaluator(trace.topology, trace.spec, trace.params, trace.initial)
    if ev.is_clean():
        return 0
    for k, step in enumerate(trace.steps, start=1):
        ev.step(step.selected)
        if ev.is_clean():
            return k
    return None


@dataclass
class MoveTally:
    R: int = 0
    P: int = 0
    C: int = 0
    U: int = 0
    U_before_clean: int = 0
    C_before_clean: int = 0
    P_before_clean: int = 0
    first_clean: int | None = None
    per_node: dict[Any, dict[str, int]] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.R + self.P + self.C + self.U

    def node(self, p) -> dict[str, int]:
        return self.per_node[p]


_KEYS = ("R", "P", "C", "U", "U_before_clean", "U_after_clean", "P_before_clean")


def tally_moves(trace: ExecutionTrace, replay: bool = True) -> MoveTally:
    first_clean = first_clean_by_replay(trace) if replay else trace.first_clean
    tally = MoveTally(first_clean=first_clean)
    tally.per_node = {p: dict.fromkeys(_KEYS, 0) for p in trace.topology.node_ids}
    limit = len(trace.steps) if first_clean is None else first_clean
    for k, step in enumerate(trace.steps):
        before = k < limit
        for p, rule in zip(step.selected, step.rules):
            kind = rule.kind
            node = tally.per_node[p]
            node[kind] += 1
            if kind == "R":
                tally.R += 1
            elif kind == "P":
                tally.P += 1
                if before:
                    tally.P_before_clean += 1
                    node["P_before_clean"] += 1
            elif kind == "C":
                tally.C += 1
                if before:
                    tally.C_before_clean += 1
            else:
                tally.U += 1
                if before:
                    tally.U_before_clean += 1
                    node["U_before_clean"] += 1
                else:
                    node["U_after_clean"] += 1
    return tally


# -- bound verification -------------------------------------------------------------


@dataclass
class BoundCheck:
    name: str
    anchor: str
    formula: str
    observed: float
    bound: float | None  # None when the bound does not apply (reported only)
    passed: bool


@dataclass
class BoundReport:
    n: int
    D: int
    B: int | None
    T: int
    mode: str
    checks: list[BoundCheck]
    stats: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[BoundCheck]:
        return [c for c in self.checks if not c.passed]

    def to_json(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["B"] = "inf" if self.B is None else self.B
        doc["passed"] = self.passed
        return doc

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["name", "anchor", "formula", "observed", "bound", "passed", "n", "D", "B", "T", "mode"])
        b = "inf" if self.B is None else self.B
        for c in self.checks:
            w.writerow([c.name, c.anchor, c.formula, c.observed, "" if c.bound is None else c.bound,
                        c.passed, self.n, self.D, b, self.T, self.mode])
        return buf.getvalue()

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def u_after_clean_per_node(params: TransParams, D: int, T: int) -> int | None:
    """Per-node U-moves once the configuration is clean (None: unbounded)."""
    B = params.bound_B
    if params.mode == LAZY:
        bound = max(T, D)
        return bound if B is None else min(bound, B)
    return B


def move_budget(n: int, D: int, B: int | None, T: int, params: TransParams) -> int | None:
    """Closed-form total-move budget obtained by summing the per-category bounds."""
    u_bc = n * (2 * n * D if B is None else min(n * B, 2 * n * D))
    p_budget = n * (n * (n + 1) + 2 * (n + D)) + u_bc
    c_budget = p_budget + n
    after = u_after_clean_per_node(params, D, T)
    if after is None:
        return None
    return n + u_bc + p_budget + c_budget + n * after


def round_budget(D: int, B: int | None, T: int, params: TransParams) -> int | None:
    m = 2 * D if B is None else min(2 * B, 2 * D)
    if params.mode == GREEDY:
        return None if B is None else m + 2 + B
    return m + max(2 * D + 2, D + 3 * T)


def verify_bounds(trace: ExecutionTrace, T: int, tally: MoveTally | None = None) -> BoundReport:
    t = trace.topology
    params = trace.params
    n, D, B = t.n, t.diameter, params.bound_B
    if tally is None:
        tally = tally_moves(trace)
    checks: list[BoundCheck] = []

    def add(name, anchor, formula, observed, bound):
        ok = True if bound is None else observed <= bound
        checks.append(BoundCheck(name, anchor, formula, observed, bound, ok))

    add("r_moves", "r-moves", "n", tally.R, n)

    u_bound = 2 * n * D if B is None else min(n * B, 2 * n * D)
    worst_u = max((v["U_before_clean"] for v in tally.per_node.values()), default=0)
    add("u_moves_before_clean_per_node", "u-moves-with-roots", "min(n*B, 2*n*D)", worst_u, u_bound)

    per_node_p = n * (n + 1) + 2 * (n + D)
    p_bound = n * per_node_p + tally.U_before_clean
    add("p_moves", "p-moves-type-sum", "n*(n*(n+1) + 2*(n+D)) + U_before_clean", tally.P, p_bound)
    worst_p_slack = max(
        (v["P"] - v["U_before_clean"] for v in tally.per_node.values()), default=0
    )
    add("p_moves_per_node", "p-moves-type-sum", "n*(n+1) + 2*(n+D) + U_before_clean(p)",
        worst_p_slack, per_node_p)

    add("c_moves_before_clean", "c-moves", "P + n", tally.C_before_clean, tally.P + n)

    clean_at = tally.first_clean
    if clean_at is None:
        add("rounds_to_clean", "rounds-to-clean", "2 + 2*min(B, D)",
            float("inf"), 2 + 2 * (D if B is None else min(B, D)))
    else:
        add("rounds_to_clean", "rounds-to-clean", "2 + 2*min(B, D)",
            rounds_until(trace.round_marks, clean_at), 2 + 2 * (D if B is None else min(B, D)))

    rb = round_budget(D, B, T, params)
    if trace.terminated:
        formula = "min(2B, 2D) + 2 + B" if params.mode == GREEDY else "min(2B, 2D) + max(2D+2, D+3T)"
        add("rounds_total", "rounds-to-terminal", formula, trace.num_rounds, rb)

    after = u_after_clean_per_node(params, D, T)
    worst_after = max((v["U_after_clean"] for v in tally.per_node.values()), default=0)
    if after is not None:
        add("u_moves_after_clean_per_node", "u-moves-clean-segment",
            "max(T, D)" if params.mode == LAZY else "B", worst_after, after)

    budget = move_budget(n, D, B, T, params)
    if budget is not None and trace.terminated:
        add("total_moves", "total-moves", "sum of per-category budgets", tally.total, budget)

    scale = n * n * (n if B is None else min(B, n))
    stats = {
        "moves": tally.total,
        "steps": len(trace.steps),
        "rounds": trace.num_rounds,
        "first_clean": clean_at,
        "R": tally.R,
        "P": tally.P,
        "C": tally.C,
        "U": tally.U,
        "U_before_clean": tally.U_before_clean,
        "p_constant": tally.P / scale if scale else 0.0,
        "moves_per_n3": tally.total / n**3,
        "terminated": trace.terminated,
    }
    return BoundReport(n, D, B, T, params.mode, checks, stats)


# -- per-step invariant monitor ---------------------------------------------------------


class InvariantMonitor:
    """Checks the structural invariants on every configuration of an execution.

    Pass an instance as ``monitor`` to ``daemon.run_execution``.  With
    ``reference_every=k`` the incremental evaluator is also compared to
    the recompute-everything predicates every k configurations.
    """

    def __init__(self, max_messages: int = 20, reference_every: int = 0, e_paths: bool = True):
        self.violations: list[str] = []
        self.count = 0
        self.max_messages = max_messages
        self.reference_every = reference_every
        self.e_paths = e_paths
        self.configs = 0
        self._prev = None

    @property
    def ok(self) -> bool:
        return self.count == 0

    def _fail(self, index: int, msg: str) -> None:
        self.count += 1
        if len(self.violations) < self.max_messages:
            self.violations.append(f"config {index}: {msg}")

    def __call__(self, index: int, ev: Evaluator, moves) -> None:
        self.configs += 1
        t = ev.t
        cfg = ev.cfg
        roots = set(ev.roots)
        rules = dict(ev.rules)
        almost = _almost_clean_shape(t, cfg, roots)
        clean = not roots
        no_err = not any(r.is_error_rule for r in rules.values())
        only_u = all(r.kind == "U" for r in rules.values())
        if almost != no_err:
            self._fail(index, f"almost-clean shape {almost} but no-error-rule {no_err}")
        if clean != only_u:
            self._fail(index, f"clean {clean} but only-R_U {only_u}")
        if self.e_paths:
            for p in t.node_ids:
                if cfg[p].s == ERROR and _e_path(t, cfg, p, roots.__contains__) is None:
                    self._fail(index, f"E node {p!r} starts no E-path")
        B = ev.params.bound_B
        if B is not None:
            for p in t.node_ids:
                if cfg[p].hei > B:
                    self._fail(index, f"node {p!r} height {cfg[p].hei} exceeds B={B}")
        if self.reference_every and index % self.reference_every == 0:
            ref_rules = enabled_rules(t, ev.spec, cfg, ev.params)
            if ref_rules != rules:
                self._fail(index, "incremental rules differ from the reference predicates")
            if roots_of(t, ev.spec, cfg) != roots:
                self._fail(index, "incremental roots differ from the reference predicates")

        prev = self._prev
        if prev is not None and moves is not None:
            p_cfg, p_roots, p_almost, p_clean = prev
            if not roots <= p_roots:
                self._fail(index, f"new roots {sorted(roots - p_roots, key=repr)[:5]!r}")
            if p_almost and not almost:
                self._fail(index, "almost-clean configuration became not almost clean")
            if p_clean and not clean:
                self._fail(index, "clean configuration became not clean")
            for p in t.node_ids:
                a, b = p_cfg[p], cfg[p]
                if a.init != b.init:
                    self._fail(index, f"node {p!r} changed its read-only init")
                rule = moves.get(p)
                dh = b.hei - a.hei
                if rule is None:
                    if a is not b and (a.s != b.s or a.L != b.L):
                        self._fail(index, f"node {p!r} changed without moving")
                    continue
                kind = rule.kind
                if kind == "U" and dh != 1:
                    self._fail(index, f"node {p!r} R_U changed height by {dh}")
                if kind != "U" and dh > 0:
                    self._fail(index, f"node {p!r} {rule} raised its height")
                if kind == "C":
                    if dh != 0:
                        self._fail(index, f"node {p!r} R_C changed height")
                    if p in p_roots and (a.hei != 0 or p in roots):
                        self._fail(index, f"root {p!r} cleared by R_C at height {a.hei}")
        self._prev = (dict(cfg), roots, almost, clean)
