"""The transformed algorithm: node state, predicates, prioritized rules.

Every node keeps its read-only initial state, a status in {C, E} and a
history list ``L`` whose cell i is meant to hold the node's state after
round i of the synchronous algorithm.  Cell 0 is the initial state and
is not stored in ``L``.

The functions in this module are the reference (recompute-everything)
implementation.  ``evaluator.Evaluator`` caches the same predicates
incrementally for long executions and is tested against these.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .sync_model import State, SyncAlgorithmSpec, SyncHistory
from .topology import NodeId, Topology

CORRECT = "C"
ERROR = "E"

LAZY = "lazy"
GREEDY = "greedy"


class History(Sequence):
    """Immutable list with O(1) amortized append and O(1) truncation.

    Versions share one backing list.  Appending to the newest version
    extends the backing list in place; appending to an older version
    copies its prefix first.  Cells below a version's length are never
    overwritten, so every version stays valid.
    """

    __slots__ = ("_cells", "_n")

    def __init__(self, cells: Iterable[State] = (), _n: int | None = None):
        if _n is None:
            self._cells = list(cells)
            self._n = len(self._cells)
        else:
            self._cells = cells  # type: ignore[assignment]
            self._n = _n

    def __len__(self) -> int:
        return self._n

    def __getitem__(self, i):  # type: ignore[override]
        if isinstance(i, slice):
            return list(self)[i]
        if i < 0:
            i += self._n
        if not 0 <= i < self._n:
            raise IndexError("history index out of range")
        return self._cells[i]

    def __iter__(self) -> Iterator[State]:
        cells = self._cells
        for i in range(self._n):
            yield cells[i]

    def __eq__(self, other: object) -> bool:
        if isinstance(other, History):
            if self._n != other._n:
                return False
            if self._cells is other._cells:
                return True
            a, b = self._cells, other._cells
            return all(a[i] == b[i] for i in range(self._n))
        if isinstance(other, (list, tuple)):
            return list(self) == list(other)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(tuple(self))

    def __repr__(self) -> str:
        return f"History({list(self)!r})"

    def push(self, value: State) -> "History":
        cells = self._cells
        if len(cells) != self._n:
            cells = cells[: self._n]
        cells.append(value)
        return History(cells, self._n + 1)

    def truncate(self, k: int) -> "History":
        if k >= self._n:
            return self
        return History(self._cells, max(k, 0))


EMPTY_HISTORY = History()


@dataclass(frozen=True)
class TransNodeState:
    init: State
    s: str
    L: History

    @property
    def hei(self) -> int:
        return len(self.L)

    def cell(self, i: int) -> State:
        """Cell i of the extended list: the initial state for i = 0."""
        return self.init if i == 0 else self.L[i - 1]


TransConfig = Mapping[NodeId, TransNodeState]


@dataclass(frozen=True)
class TransParams:
    mode: str = LAZY
    bound_B: int | None = None  # None means unbounded
    height_cap: int | None = None  # simulator guard when bound_B is None

    def __post_init__(self):
        if self.mode not in (LAZY, GREEDY):
            raise ValueError(f"mode must be lazy or greedy, not {self.mode!r}")
        if self.bound_B is not None and self.bound_B < 1:
            raise ValueError("bound B must be a positive integer or infinite")

    @property
    def non_terminating(self) -> bool:
        return self.mode == GREEDY and self.bound_B is None

    def below_bound(self, h: int) -> bool:
        return self.bound_B is None or h < self.bound_B

    def effective_cap(self, t: Topology) -> int:
        if self.bound_B is not None:
            return self.bound_B
        if self.height_cap is not None:
            return self.height_cap
        return 8 * t.n + 64

    def b_label(self) -> str:
        return "inf" if self.bound_B is None else str(self.bound_B)


def parse_bound(text: str | int | None) -> int | None:
    if text is None:
        return None
    if isinstance(text, int):
        return text
    if text.strip().lower() in ("inf", "infinity", "oo"):
        return None
    value = int(text)
    if value < 1:
        raise ValueError("bound B must be >= 1 or 'inf'")
    return value


@dataclass(frozen=True, order=True)
class Rule:
    """R_R, R_P(i), R_C or R_U; ``index`` is only meaningful for P."""

    kind: str
    index: int = 0

    def __str__(self) -> str:
        return f"P({self.index})" if self.kind == "P" else self.kind

    @property
    def is_error_rule(self) -> bool:
        return self.kind in ("R", "P")

    @classmethod
    def parse(cls, text: str) -> "Rule":
        if text in ("R", "C", "U"):
            return cls(text)
        if text.startswith("P(") and text.endswith(")"):
            return cls("P", int(text[2:-1]))
        raise ValueError(f"bad rule {text!r}")

    def priority(self) -> tuple[int, int]:
        """Smaller sorts first: R, then P(1), P(2), ..., then C, then U."""
        if self.kind == "P":
            return (1, self.index)
        return ({"R": 0, "C": 2, "U": 3}[self.kind], 0)


R_R = Rule("R")
R_C = Rule("C")
R_U = Rule("U")


def R_P(i: int) -> Rule:
    return Rule("P", i)


class ContractViolation(RuntimeError):
    """A guard let through a call whose preconditions do not hold."""


class DisabledNodeSelected(ContractViolation):
    pass


class HeightCapExceeded(RuntimeError):
    pass


# -- predicates -------------------------------------------------------------


def row_view(t: Topology, cfg: TransConfig, p: NodeId, i: int) -> frozenset:
    """Deduplicated (label, cell i) pairs over p's incoming channels."""
    try:
        return frozenset((label, cfg[q].cell(i)) for label, q in t.incoming[p])
    except IndexError:
        raise ContractViolation(f"row {i} missing in the neighborhood of {p!r}") from None


def widehat_algo(
    t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig, p: NodeId, i: int
) -> State:
    st = cfg[p]
    if i > st.hei:
        raise ContractViolation(f"node {p!r} has no cell {i}")
    return spec.algo(st.cell(i), row_view(t, cfg, p, i))


def pred_algo_error(t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig, p: NodeId) -> bool:
    st = cfg[p]
    heights = [cfg[q].hei for q in t.neighbors[p]]
    for i in range(1, st.hei + 1):
        if all(h >= i - 1 for h in heights) and st.cell(i) != widehat_algo(t, spec, cfg, p, i - 1):
            return True
    return False


def pred_dependency_error(t: Topology, cfg: TransConfig, p: NodeId) -> bool:
    st = cfg[p]
    hp = st.hei
    if st.s == ERROR:
        return not any(cfg[q].s == ERROR and cfg[q].hei < hp for q in t.neighbors[p])
    return any(cfg[q].hei >= hp + 2 for q in t.neighbors[p])


def pred_root(t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig, p: NodeId) -> bool:
    return pred_dependency_error(t, cfg, p) or pred_algo_error(t, spec, cfg, p)


def error_propag(t: Topology, cfg: TransConfig, p: NodeId, i: int) -> bool:
    hp = cfg[p].hei
    return any(cfg[q].s == ERROR and cfg[q].hei < i < hp for q in t.neighbors[p])


def smallest_propagation_index(t: Topology, cfg: TransConfig, p: NodeId) -> int | None:
    """Smallest i with errorPropag(p, i), or None."""
    hp = cfg[p].hei
    lows = [cfg[q].hei for q in t.neighbors[p] if cfg[q].s == ERROR]
    if not lows:
        return None
    i = min(lows) + 1
    return i if i < hp else None


def can_clear_e(t: Topology, cfg: TransConfig, p: NodeId) -> bool:
    st = cfg[p]
    if st.s != ERROR:
        return False
    hp = st.hei
    for q in t.neighbors[p]:
        hq = cfg[q].hei
        if abs(hq - hp) > 1:
            return False
        if hq > hp and cfg[q].s != CORRECT:
            return False
    return True


def updatable(
    t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig, params: TransParams, p: NodeId
) -> bool:
    st = cfg[p]
    if st.s != CORRECT or not params.below_bound(st.hei):
        return False
    hp = st.hei
    ahead = False
    for q in t.neighbors[p]:
        hq = cfg[q].hei
        if hq != hp and hq != hp + 1:
            return False
        if hq > hp:
            ahead = True
    if params.mode == GREEDY or ahead:
        return True
    return st.cell(hp) != widehat_algo(t, spec, cfg, p, hp)


def enabled_rule(
    t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig, params: TransParams, p: NodeId
) -> Rule | None:
    st = cfg[p]
    if (st.hei > 0 or st.s == CORRECT) and pred_root(t, spec, cfg, p):
        return R_R
    i = smallest_propagation_index(t, cfg, p)
    if i is not None:
        return R_P(i)
    if can_clear_e(t, cfg, p):
        return R_C
    if updatable(t, spec, cfg, params, p):
        return R_U
    return None


def enabled_rules(
    t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig, params: TransParams
) -> dict[NodeId, Rule]:
    out = {}
    for p in t.node_ids:
        r = enabled_rule(t, spec, cfg, params, p)
        if r is not None:
            out[p] = r
    return out


def execute_rule(
    t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig, p: NodeId, rule: Rule
) -> TransNodeState:
    """The new state of p after executing ``rule`` in ``cfg``."""
    st = cfg[p]
    if rule.kind == "R":
        return TransNodeState(st.init, ERROR, st.L.truncate(0))
    if rule.kind == "P":
        return TransNodeState(st.init, ERROR, st.L.truncate(rule.index))
    if rule.kind == "C":
        return TransNodeState(st.init, CORRECT, st.L)
    return TransNodeState(st.init, st.s, st.L.push(widehat_algo(t, spec, cfg, p, st.hei)))


def apply_step(
    t: Topology,
    spec: SyncAlgorithmSpec,
    cfg: TransConfig,
    params: TransParams,
    selected: Iterable[NodeId],
) -> tuple[dict[NodeId, TransNodeState], dict[NodeId, Rule]]:
    """Atomically execute the enabled rule of every selected node.

    All guards and outputs are evaluated on ``cfg``; effects are applied
    together.
    """
    selected = list(selected)
    if not selected:
        raise DisabledNodeSelected("empty selection")
    moves: dict[NodeId, Rule] = {}
    for p in selected:
        rule = enabled_rule(t, spec, cfg, params, p)
        if rule is None:
            raise DisabledNodeSelected(f"node {p!r} selected but not enabled")
        moves[p] = rule
    new = dict(cfg)
    for p, rule in moves.items():
        new[p] = execute_rule(t, spec, cfg, p, rule)
    return new, moves


# -- configurations ---------------------------------------------------------


def clean_config(t: Topology, init: Mapping[NodeId, State]) -> dict[NodeId, TransNodeState]:
    """All histories empty, all statuses C: the fault-free start."""
    return {p: TransNodeState(init[p], CORRECT, EMPTY_HISTORY) for p in t.node_ids}


def reset_config(t: Topology, init: Mapping[NodeId, State]) -> dict[NodeId, TransNodeState]:
    """All histories empty, all statuses E."""
    return {p: TransNodeState(init[p], ERROR, EMPTY_HISTORY) for p in t.node_ids}


def config_from_history(
    t: Topology, history: SyncHistory, heights: int | Mapping[NodeId, int], status: str = CORRECT
) -> dict[NodeId, TransNodeState]:
    """Histories copied from oracle rows 1..h for each node."""
    out = {}
    for p in t.node_ids:
        h = heights if isinstance(heights, int) else heights[p]
        cells = [history.row(i)[p] for i in range(1, h + 1)]
        out[p] = TransNodeState(history.rounds[0][p], status, History(cells))
    return out


def fuzz_config(
    t: Topology,
    spec: SyncAlgorithmSpec,
    history: SyncHistory,
    params: TransParams,
    rng: random.Random,
) -> dict[NodeId, TransNodeState]:
    """A corrupted configuration that keeps every read-only ``init``.

    Status is uniform over {C, E}; height is uniform in
    [0..min(B, 2D+2)]; each cell is an oracle row state, or with a
    per-configuration corruption probability, a ``sample_state`` draw.
    """
    max_h = 2 * t.diameter + 2
    if params.bound_B is not None:
        max_h = min(max_h, params.bound_B)
    corruption = rng.random()
    out = {}
    for p in t.node_ids:
        s = rng.choice((CORRECT, ERROR))
        h = rng.randint(0, max_h)
        cells = []
        for i in range(1, h + 1):
            if rng.random() < corruption:
                cells.append(spec.sample_state(rng))
            else:
                cells.append(history.row(i)[p])
        out[p] = TransNodeState(history.rounds[0][p], s, History(cells))
    return out


def heights(cfg: TransConfig) -> dict[NodeId, int]:
    return {p: st.hei for p, st in cfg.items()}


def config_to_json(t: Topology, spec: SyncAlgorithmSpec, cfg: TransConfig) -> dict[str, Any]:
    return {
        str(p): {
            "init": spec.encode(cfg[p].init),
            "s": cfg[p].s,
            "L": [spec.encode(x) for x in cfg[p].L],
        }
        for p in t.node_ids
    }


def config_from_json(
    t: Topology, spec: SyncAlgorithmSpec, doc: Mapping[str, Any]
) -> dict[NodeId, TransNodeState]:
    out = {}
    for p in t.node_ids:
        key = str(p)
        if key not in doc:
            raise KeyError(f"snapshot has no entry for node {p!r}")
        entry = doc[key]
        s = entry["s"]
        if s not in (CORRECT, ERROR):
            raise ValueError(f"node {p!r}: status must be C or E, not {s!r}")
        out[p] = TransNodeState(
            spec.decode(entry["init"]), s, History(spec.decode(x) for x in entry["L"])
        )
    return out


def log_star(x: float) -> int:
    """Number of base-2 logarithms needed to bring x down to at most 1."""
    k = 0
    while x > 1:
        x = math.log2(x)
        k += 1
    return k
