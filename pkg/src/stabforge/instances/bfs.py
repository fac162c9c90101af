"""BFS spanning tree in a rooted network with locally distinct channel labels."""

from __future__ import annotations

import random
from typing import Mapping, NamedTuple, Optional

from ..sync_model import SyncAlgorithmSpec
from ..topology import NodeId, Topology


class BfsState(NamedTuple):
    Root: bool
    Par: Optional[str]


def bfs_algo(state: BfsState, view: frozenset) -> BfsState:
    if state.Root or state.Par is not None:
        return state
    best = None
    for label, s in view:
        if (s.Root or s.Par is not None) and (best is None or label < best):
            best = label
    if best is None:
        return state
    return BfsState(state.Root, best)


def labels_locally_distinct(t: Topology) -> bool:
    for p in t.node_ids:
        labels = [label for label, _ in t.incoming[p]]
        if len(set(labels)) != len(labels):
            return False
    return True


def is_valid(t: Topology, init: Mapping[NodeId, BfsState]) -> bool:
    if set(init) != set(t.node_ids):
        return False
    if sum(1 for p in t.node_ids if init[p].Root) != 1:
        return False
    if any(init[p].Par is not None for p in t.node_ids):
        return False
    return labels_locally_distinct(t)


def make_spec(t: Topology) -> SyncAlgorithmSpec:
    # a label no channel carries is still a legal (dangling) pointer
    labels = sorted({label for _, _, label in t.arcs}) or ["0"]

    def sample_state(rng: random.Random) -> BfsState:
        par = None if rng.random() < 0.3 else rng.choice(labels)
        return BfsState(rng.random() < 0.1, par)

    return SyncAlgorithmSpec(
        name="bfs",
        algo=bfs_algo,
        is_valid=is_valid,
        sample_state=sample_state,
        encode=list,
        decode=lambda obj: BfsState(bool(obj[0]), obj[1]),
    )


def initial(t: Topology, rng: random.Random, root: NodeId | None = None) -> dict[NodeId, BfsState]:
    if root is None:
        root = rng.choice(t.node_ids)
    return {p: BfsState(p == root, None) for p in t.node_ids}


def validate_stable(t: Topology, states: Mapping[NodeId, BfsState]) -> list[str]:
    roots = [p for p in t.node_ids if states[p].Root]
    if len(roots) != 1:
        return [f"expected one root, found {len(roots)}"]
    root = roots[0]
    problems = []
    if states[root].Par is not None:
        problems.append(f"root {root!r} has a parent pointer")
    for p in t.node_ids:
        if p == root:
            continue
        par = states[p].Par
        sources = [q for label, q in t.incoming[p] if label == par]
        if len(sources) != 1:
            problems.append(f"node {p!r}: Par={par!r} names no unique channel")
            continue
        q = sources[0]
        if t.dist(q, root) != t.dist(p, root) - 1:
            problems.append(
                f"node {p!r}: parent {q!r} at distance {t.dist(q, root)}, "
                f"node at distance {t.dist(p, root)}"
            )
    return problems
