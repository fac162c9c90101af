"""Leader election composed with a BFS distance/parent layer toward the leader.

Each round a node takes the closed-neighborhood minimum of Best; a node
whose Best is its own identifier resets (Dist, Par) to (0, ID), any
other node takes 1 + the smallest neighbor Dist and points Par at the
neighbor holding it (smallest identifier on ties).

By default only neighbors whose Best equals the node's freshly updated
Best are considered for Dist/Par, falling back to all neighbors when
none agrees.  Without that filter, stale Dist values of neighbors that
still back a different leader can delay stabilization to round 2D; with
it, a node at distance d from the leader is stable from round d on.
``literal=True`` selects the unfiltered rule.
"""

from __future__ import annotations

import random
from typing import Mapping, NamedTuple

from ..sync_model import SyncAlgorithmSpec
from ..topology import NodeId, Topology


class ClusterFrontState(NamedTuple):
    ID: int
    Best: int
    Dist: int
    Par: int


def _step(state: ClusterFrontState, view: frozenset, literal: bool) -> ClusterFrontState:
    best = state.Best
    for _, s in view:
        if s.Best < best:
            best = s.Best
    if best == state.ID:
        return ClusterFrontState(state.ID, best, 0, state.ID)
    pool = [s for _, s in view]
    if not literal:
        agreeing = [s for s in pool if s.Best == best]
        if agreeing:
            pool = agreeing
    if not pool:
        return ClusterFrontState(state.ID, best, state.Dist, state.Par)
    dist, par = min((s.Dist, s.ID) for s in pool)
    return ClusterFrontState(state.ID, best, dist + 1, par)


def cluster_front_algo(state: ClusterFrontState, view: frozenset) -> ClusterFrontState:
    return _step(state, view, literal=False)


def cluster_front_algo_literal(state: ClusterFrontState, view: frozenset) -> ClusterFrontState:
    return _step(state, view, literal=True)


def is_valid(t: Topology, init: Mapping[NodeId, ClusterFrontState]) -> bool:
    if set(init) != set(t.node_ids):
        return False
    ids = [init[p].ID for p in t.node_ids]
    if len(set(ids)) != len(ids):
        return False
    return all(
        init[p] == ClusterFrontState(init[p].ID, init[p].ID, 0, init[p].ID) for p in t.node_ids
    )


def make_spec(t: Topology, id_space: int, literal: bool = False) -> SyncAlgorithmSpec:
    def sample_state(rng: random.Random) -> ClusterFrontState:
        return ClusterFrontState(
            rng.randrange(id_space),
            rng.randrange(id_space),
            rng.randint(0, t.n),
            rng.randrange(id_space),
        )

    return SyncAlgorithmSpec(
        name="cluster-front-literal" if literal else "cluster-front",
        algo=cluster_front_algo_literal if literal else cluster_front_algo,
        is_valid=is_valid,
        sample_state=sample_state,
        encode=list,
        decode=lambda obj: ClusterFrontState(*obj),
    )


def initial(t: Topology, rng: random.Random, id_space: int) -> dict[NodeId, ClusterFrontState]:
    ids = rng.sample(range(id_space), t.n)
    return {p: ClusterFrontState(i, i, 0, i) for p, i in zip(t.node_ids, ids)}


def validate_stable(t: Topology, states: Mapping[NodeId, ClusterFrontState]) -> list[str]:
    by_id = {states[p].ID: p for p in t.node_ids}
    leader_id = min(by_id)
    leader = by_id[leader_id]
    problems = []
    for p in t.node_ids:
        s = states[p]
        want = t.dist(p, leader)
        if s.Best != leader_id:
            problems.append(f"node {p!r}: Best={s.Best}, expected {leader_id}")
        if s.Dist != want:
            problems.append(f"node {p!r}: Dist={s.Dist}, expected {want}")
        if p == leader:
            if s.Par != s.ID:
                problems.append(f"leader {p!r}: Par={s.Par}, expected itself")
            continue
        parent = by_id.get(s.Par)
        if parent is None or parent not in t.neighbors[p] or t.dist(parent, leader) != want - 1:
            problems.append(f"node {p!r}: Par={s.Par} is not a neighbor one hop closer")
    return problems
