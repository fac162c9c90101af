"""Leader election by closed-neighborhood minimum of identifiers."""

from __future__ import annotations

import random
from typing import Mapping, NamedTuple

from ..sync_model import SyncAlgorithmSpec
from ..topology import NodeId, Topology


class LeaderState(NamedTuple):
    ID: int
    Best: int


def leader_algo(state: LeaderState, view: frozenset) -> LeaderState:
    best = state.Best
    for _, s in view:
        if s.Best < best:
            best = s.Best
    return LeaderState(state.ID, best)


def is_valid(t: Topology, init: Mapping[NodeId, LeaderState]) -> bool:
    if set(init) != set(t.node_ids):
        return False
    ids = [init[p].ID for p in t.node_ids]
    if len(set(ids)) != len(ids):
        return False
    return all(init[p].Best == init[p].ID for p in t.node_ids)


def make_spec(t: Topology, id_space: int) -> SyncAlgorithmSpec:
    def sample_state(rng: random.Random) -> LeaderState:
        return LeaderState(rng.randrange(id_space), rng.randrange(id_space))

    return SyncAlgorithmSpec(
        name="leader",
        algo=leader_algo,
        is_valid=is_valid,
        sample_state=sample_state,
        encode=list,
        decode=lambda obj: LeaderState(*obj),
    )


def initial(t: Topology, rng: random.Random, id_space: int) -> dict[NodeId, LeaderState]:
    ids = rng.sample(range(id_space), t.n)
    return {p: LeaderState(i, i) for p, i in zip(t.node_ids, ids)}


def validate_stable(t: Topology, states: Mapping[NodeId, LeaderState]) -> list[str]:
    leader = min(s.ID for s in states.values())
    return [
        f"node {p!r}: Best={states[p].Best}, expected {leader}"
        for p in t.node_ids
        if states[p].Best != leader
    ]
