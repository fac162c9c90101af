"""Eventually stable synchronous algorithms and their fault-free oracle."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .topology import NodeId, Topology, neighbor_view

State = Any
View = frozenset


def _identity(x: Any) -> Any:
    return x


@dataclass(frozen=True)
class SyncAlgorithmSpec:
    """A pluggable synchronous algorithm.

    ``algo`` maps (own state, set of (label, neighbor state)) to the next
    state and must be pure.  ``is_valid`` decides whether a per-node
    initial map is a legal starting configuration on a topology.
    ``sample_state`` draws an arbitrary state of the right type; it is
    only used to corrupt history cells when fuzzing.
    """

    name: str
    algo: Callable[[State, View], State]
    is_valid: Callable[[Topology, Mapping[NodeId, State]], bool]
    sample_state: Callable[[random.Random], State]
    encode: Callable[[State], Any] = _identity
    decode: Callable[[Any], State] = _identity
    meta: dict[str, Any] = field(default_factory=dict, compare=False)


class SyncModelError(RuntimeError):
    pass


class AlgoFailure(SyncModelError):
    def __init__(self, node: NodeId, cause: BaseException):
        super().__init__(f"algo failed on node {node!r}: {cause!r}")
        self.node = node
        self.cause = cause


class NotStableError(SyncModelError):
    pass


class InvalidInitialConfiguration(SyncModelError):
    pass


@dataclass(frozen=True)
class SyncHistory:
    """Rounds 0..T of a fault-free synchronous execution."""

    rounds: tuple[dict[NodeId, State], ...]
    stability_time: int

    def row(self, i: int) -> dict[NodeId, State]:
        """States at round i; rounds after T repeat the stable row."""
        return self.rounds[min(i, self.stability_time)]

    @property
    def final(self) -> dict[NodeId, State]:
        return self.rounds[self.stability_time]


def sync_round(
    t: Topology, spec: SyncAlgorithmSpec, states: Mapping[NodeId, State]
) -> dict[NodeId, State]:
    out = {}
    for p in t.node_ids:
        try:
            out[p] = spec.algo(states[p], neighbor_view(t, p, states))
        except Exception as exc:  # noqa: BLE001 - re-raised with the node attached
            raise AlgoFailure(p, exc) from exc
    return out


def default_max_rounds(t: Topology) -> int:
    return 4 * t.n + 16


def run_to_stability(
    t: Topology,
    spec: SyncAlgorithmSpec,
    init: Mapping[NodeId, State],
    max_rounds: int | None = None,
) -> SyncHistory:
    if not spec.is_valid(t, init):
        raise InvalidInitialConfiguration(f"invalid initial configuration for {spec.name}")
    if max_rounds is None:
        max_rounds = default_max_rounds(t)
    rounds = [dict(init)]
    for _ in range(max_rounds + 1):
        nxt = sync_round(t, spec, rounds[-1])
        if nxt == rounds[-1]:
            return SyncHistory(rounds=tuple(rounds), stability_time=len(rounds) - 1)
        rounds.append(nxt)
    raise NotStableError(f"{spec.name}: not stable within {max_rounds} rounds")
