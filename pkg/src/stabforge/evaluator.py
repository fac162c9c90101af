"""Incremental guard evaluation for long executions.

Predicates of a node only depend on its closed neighborhood, so after a
step only the neighborhoods of the movers are re-evaluated.  algoError
is tracked through ``good[p]``: the length of the longest prefix of p's
list whose cells are known to equal the recomputed value.  Cells are
never rewritten in place (only appended or truncated away), so that
prefix only shrinks when p or a neighbor loses cells.
"""

from __future__ import annotations

from typing import Iterable, Mapping

from .sync_model import SyncAlgorithmSpec
from .topology import NodeId, Topology
from .transformer import (
    CORRECT,
    ERROR,
    GREEDY,
    R_C,
    R_R,
    R_U,
    DisabledNodeSelected,
    HeightCapExceeded,
    Rule,
    TransNodeState,
    TransParams,
    R_P,
)

_INF = float("inf")


class Evaluator:
    def __init__(
        self,
        t: Topology,
        spec: SyncAlgorithmSpec,
        params: TransParams,
        cfg: Mapping[NodeId, TransNodeState],
    ):
        self.t = t
        self.spec = spec
        self.params = params
        self.cfg: dict[NodeId, TransNodeState] = dict(cfg)
        self.nbrs = t.neighbors
        self.inc = t.incoming
        self.cap = params.effective_cap(t)
        self.good: dict[NodeId, int] = {p: 0 for p in t.node_ids}
        self.algo_err: dict[NodeId, bool] = {}
        self.roots: set[NodeId] = set()
        self.rules: dict[NodeId, Rule] = {}
        for p in t.node_ids:
            self._refresh(p)

    # -- evaluation ---------------------------------------------------------

    def widehat(self, p: NodeId, i: int):
        cfg = self.cfg
        st = cfg[p]
        own = st.init if i == 0 else st.L[i - 1]
        if i == 0:
            view = frozenset((lbl, cfg[q].init) for lbl, q in self.inc[p])
        else:
            view = frozenset((lbl, cfg[q].L[i - 1]) for lbl, q in self.inc[p])
        return self.spec.algo(own, view)

    def _refresh(self, p: NodeId) -> None:
        cfg = self.cfg
        st = cfg[p]
        hp = len(st.L)
        nbrs = self.nbrs[p]

        min_h = _INF
        min_err_h = _INF
        max_h = -1
        err_below = False
        for q in nbrs:
            sq = cfg[q]
            hq = len(sq.L)
            if hq < min_h:
                min_h = hq
            if hq > max_h:
                max_h = hq
            if sq.s == ERROR:
                if hq < min_err_h:
                    min_err_h = hq
                if hq < hp:
                    err_below = True

        # algoError via the verified prefix
        limit = hp if min_h == _INF else min(hp, min_h + 1)
        g = min(self.good[p], limit)
        i = g + 1
        L = st.L
        while i <= limit:
            if L[i - 1] != self.widehat(p, i - 1):
                break
            i += 1
        g = i - 1
        self.good[p] = g
        algo_error = g < limit
        self.algo_err[p] = algo_error

        if st.s == ERROR:
            dep_error = not err_below
        else:
            dep_error = max_h >= hp + 2
        is_root = algo_error or dep_error
        if is_root:
            self.roots.add(p)
        else:
            self.roots.discard(p)

        rule: Rule | None = None
        if (hp > 0 or st.s == CORRECT) and is_root:
            rule = R_R
        elif min_err_h + 1 < hp:
            rule = R_P(int(min_err_h) + 1)
        elif st.s == ERROR:
            ok = True
            for q in nbrs:
                sq = cfg[q]
                hq = len(sq.L)
                if hq - hp > 1 or hp - hq > 1 or (hq > hp and sq.s != CORRECT):
                    ok = False
                    break
            if ok:
                rule = R_C
        elif self.params.below_bound(hp):
            # status C
            if min_h == _INF or (min_h >= hp and max_h <= hp + 1):
                if self.params.mode == GREEDY or max_h > hp:
                    rule = R_U
                else:
                    own = st.init if hp == 0 else L[hp - 1]
                    if own != self.widehat(p, hp):
                        rule = R_U
        if rule is None:
            self.rules.pop(p, None)
        else:
            self.rules[p] = rule

    # -- steps --------------------------------------------------------------

    def step(self, selected: Iterable[NodeId]) -> dict[NodeId, Rule]:
        """Execute one atomic step; returns the move of every selected node."""
        moves: dict[NodeId, Rule] = {}
        for p in selected:
            rule = self.rules.get(p)
            if rule is None:
                raise DisabledNodeSelected(f"node {p!r} selected but not enabled")
            moves[p] = rule
        if not moves:
            raise DisabledNodeSelected("empty selection")
        cfg = self.cfg
        updates: dict[NodeId, TransNodeState] = {}
        for p, rule in moves.items():
            st = cfg[p]
            kind = rule.kind
            if kind == "U":
                new_l = st.L.push(self.widehat(p, len(st.L)))
                if len(new_l) > self.cap:
                    raise HeightCapExceeded(
                        f"node {p!r} history reached {len(new_l)} cells (cap {self.cap})"
                    )
                updates[p] = TransNodeState(st.init, st.s, new_l)
            elif kind == "C":
                updates[p] = TransNodeState(st.init, CORRECT, st.L)
            elif kind == "R":
                updates[p] = TransNodeState(st.init, ERROR, st.L.truncate(0))
            else:
                updates[p] = TransNodeState(st.init, ERROR, st.L.truncate(rule.index))
        dirty = set()
        good = self.good
        for p, new in updates.items():
            old_h = len(cfg[p].L)
            new_h = len(new.L)
            cfg[p] = new
            dirty.add(p)
            nbrs = self.nbrs[p]
            dirty.update(nbrs)
            if new_h < old_h:
                if good[p] > new_h:
                    good[p] = new_h
                for q in nbrs:
                    if good[q] > new_h + 1:
                        good[q] = new_h + 1
        for p in dirty:
            self._refresh(p)
        return moves

    # -- queries ------------------------------------------------------------

    def enabled(self) -> dict[NodeId, Rule]:
        return self.rules

    def height(self, p: NodeId) -> int:
        return len(self.cfg[p].L)

    def is_clean(self) -> bool:
        return not self.roots

    def snapshot(self) -> dict[NodeId, TransNodeState]:
        return dict(self.cfg)
