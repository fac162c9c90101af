"""3-coloring of oriented rings by color-width reduction (Cole-Vishkin style).

Phase 0 repeatedly replaces a color by its position of first difference
with the right neighbor's color, shrinking the bit width bound until it
reaches its fixed point.  Phase 1 then spends three rounds removing the
colors 5, 4 and 3.
"""

from __future__ import annotations

import random
from typing import Mapping, NamedTuple

from ..graphs import LEFT, RIGHT
from ..sync_model import SyncAlgorithmSpec
from ..topology import NodeId, Topology
from ..transformer import log_star


class ColorState(NamedTuple):
    ID: int
    ph: int
    maxColSize: int
    nbRds: int
    color: int


def ceil_log2(m: int) -> int:
    # total on corrupted inputs: m <= 1 gives 0
    return (m - 1).bit_length() if m > 1 else 0


def bit(c: int, i: int) -> int:
    return (c >> i) & 1


def bit_d(c1: int, c2: int) -> int:
    """Lowest little-endian bit index where c1 and c2 differ (0 if equal)."""
    diff = c1 ^ c2
    if diff == 0:
        return 0
    return (diff & -diff).bit_length() - 1


def pos_d(c1: int, c2: int) -> int:
    i = bit_d(c1, c2)
    return 2 * i + bit(c1, i)


def color3_algo(state: ColorState, view: frozenset) -> ColorState:
    if state.ph == 0:
        right = [s.color for label, s in view if label == RIGHT]
        col_s = right[0] if right else state.color
        old_c = state.color
        old_mcs = state.maxColSize
        new_mcs = 1 + ceil_log2(old_mcs)
        if new_mcs == old_mcs:
            return ColorState(state.ID, 1, old_mcs, state.nbRds, pos_d(old_c, col_s))
        return ColorState(state.ID, 0, new_mcs, state.nbRds, pos_d(old_c, col_s))
    if state.nbRds > 0:
        if state.color == 2 + state.nbRds:
            used = {s.color for _, s in view}
            nc = 0
            while nc in used:
                nc += 1
            return ColorState(state.ID, 1, state.maxColSize, state.nbRds - 1, nc)
        return ColorState(state.ID, 1, state.maxColSize, state.nbRds - 1, state.color)
    return state


def is_oriented_ring(t: Topology) -> bool:
    if t.n < 3:
        return False
    label_of = {(s, d): lbl for s, d, lbl in t.arcs}
    for p in t.node_ids:
        chans = t.incoming[p]
        if len(chans) != 2 or {lbl for lbl, _ in chans} != {LEFT, RIGHT}:
            return False
        for lbl, q in chans:
            if label_of[(p, q)] == lbl:
                return False
    return True


def initial_state(identifier: int, n: int, c: int) -> ColorState:
    return ColorState(identifier, 0, ceil_log2(n**c), 3, identifier)


def make_spec(t: Topology, c: int = 2) -> SyncAlgorithmSpec:
    n = t.n
    space = n**c
    mcs0 = ceil_log2(space)

    def is_valid(t2: Topology, init: Mapping[NodeId, ColorState]) -> bool:
        if not is_oriented_ring(t2) or set(init) != set(t2.node_ids):
            return False
        ids = [init[p].ID for p in t2.node_ids]
        if len(set(ids)) != len(ids) or not all(0 <= i < t2.n**c for i in ids):
            return False
        return all(init[p] == initial_state(init[p].ID, t2.n, c) for p in t2.node_ids)

    def sample_state(rng: random.Random) -> ColorState:
        return ColorState(
            rng.randrange(space),
            rng.randrange(2),
            rng.randint(1, mcs0),
            rng.randrange(4),
            rng.randrange(space),
        )

    return SyncAlgorithmSpec(
        name="color3",
        algo=color3_algo,
        is_valid=is_valid,
        sample_state=sample_state,
        encode=list,
        decode=lambda obj: ColorState(*obj),
        meta={"c": c},
    )


def initial(t: Topology, rng: random.Random, c: int = 2) -> dict[NodeId, ColorState]:
    ids = rng.sample(range(t.n**c), t.n)
    return {p: initial_state(i, t.n, c) for p, i in zip(t.node_ids, ids)}


def round_bound(n: int, c: int = 2) -> int:
    return log_star(n**c) + 7


def validate_stable(t: Topology, states: Mapping[NodeId, ColorState]) -> list[str]:
    problems = []
    for p in t.node_ids:
        if states[p].color not in (0, 1, 2):
            problems.append(f"node {p!r}: color {states[p].color} outside {{0,1,2}}")
        for q in t.neighbors[p]:
            if states[p].color == states[q].color:
                problems.append(f"nodes {p!r},{q!r} share color {states[p].color}")
    return problems
