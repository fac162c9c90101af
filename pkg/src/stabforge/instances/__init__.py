"""Registry of the shipped synchronous instances."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from ..graphs import port_labeled
from ..sync_model import State, SyncAlgorithmSpec
from ..topology import NodeId, Topology
from . import bfs, cluster_front, color3, leader


def id_space(t: Topology) -> int:
    return max(16, t.n * t.n)


@dataclass(frozen=True)
class Instance:
    name: str
    default_graph: str
    # applied to generated graphs only; loaded graphs are used verbatim
    prepare: Callable[[Topology], Topology]
    make_spec: Callable[[Topology, Mapping[str, Any]], SyncAlgorithmSpec]
    initial: Callable[[Topology, random.Random, Mapping[str, Any]], dict[NodeId, State]]
    validate_stable: Callable[[Topology, Mapping[NodeId, State]], list[str]]
    round_bound: Callable[[Topology, Mapping[str, Any]], int]
    # bounds that hold for the stable layer but not necessarily the oracle T
    extra_bounds: Callable[[Topology, Mapping[str, Any]], dict[str, int]] = lambda t, o: {}


def _same(t: Topology) -> Topology:
    return t


REGISTRY: dict[str, Instance] = {
    "leader": Instance(
        name="leader",
        default_graph="random-connected",
        prepare=_same,
        make_spec=lambda t, o: leader.make_spec(t, id_space(t)),
        initial=lambda t, rng, o: leader.initial(t, rng, id_space(t)),
        validate_stable=leader.validate_stable,
        round_bound=lambda t, o: t.diameter,
    ),
    "bfs": Instance(
        name="bfs",
        default_graph="random-connected",
        prepare=port_labeled,
        make_spec=lambda t, o: bfs.make_spec(t),
        initial=lambda t, rng, o: bfs.initial(t, rng),
        validate_stable=bfs.validate_stable,
        round_bound=lambda t, o: t.diameter,
    ),
    "color3": Instance(
        name="color3",
        default_graph="oriented-ring",
        prepare=_same,
        make_spec=lambda t, o: color3.make_spec(t, o.get("c", 2)),
        initial=lambda t, rng, o: color3.initial(t, rng, o.get("c", 2)),
        validate_stable=color3.validate_stable,
        round_bound=lambda t, o: color3.round_bound(t.n, o.get("c", 2)),
    ),
    "cluster-front": Instance(
        name="cluster-front",
        default_graph="random-connected",
        prepare=_same,
        make_spec=lambda t, o: cluster_front.make_spec(t, id_space(t), o.get("literal", False)),
        initial=lambda t, rng, o: cluster_front.initial(t, rng, id_space(t)),
        validate_stable=cluster_front.validate_stable,
        round_bound=lambda t, o: max(2 * t.diameter - 1, 0),
        extra_bounds=lambda t, o: {"composite": 4 * t.diameter + 2},
    ),
}

NAMES = tuple(REGISTRY)


def get(name: str) -> Instance:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown instance {name!r}; expected one of {', '.join(NAMES)}") from None
