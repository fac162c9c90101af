"""Communication graphs: validation, neighbor views and hop distances.

A topology is a symmetric, simple, connected digraph whose arcs carry
channel labels.  Node identifiers here are simulator handles only; any
identifier an algorithm relies on lives inside its state.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Hashable, Iterable, Mapping

NodeId = Hashable
Label = str
Arc = tuple[NodeId, NodeId, Label]

#: The label used when channels are indistinguishable (the singleton label set).
BOTTOM: Label = ""


class TopologyError(ValueError):
    """Raised when a graph description is not a valid topology."""


class AsymmetricArcError(TopologyError):
    pass


class SelfLoopError(TopologyError):
    pass


class DuplicateArcError(TopologyError):
    pass


class DisconnectedGraphError(TopologyError):
    pass


class UnknownNodeError(TopologyError, KeyError):
    pass


@dataclass(frozen=True, eq=False)
class Topology:
    node_ids: tuple[NodeId, ...]
    arcs: tuple[Arc, ...]
    distances: tuple[tuple[int, ...], ...]
    diameter: int
    # derived lookups, filled by build_topology
    index: dict[NodeId, int] = field(repr=False)
    neighbors: dict[NodeId, tuple[NodeId, ...]] = field(repr=False)
    incoming: dict[NodeId, tuple[tuple[Label, NodeId], ...]] = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def dist(self, p: NodeId, q: NodeId) -> int:
        return self.distances[self.index[p]][self.index[q]]

    def edges(self) -> list[tuple[NodeId, NodeId]]:
        """Undirected edges, each once, in node order."""
        out = []
        for p in self.node_ids:
            ip = self.index[p]
            for q in self.neighbors[p]:
                if ip < self.index[q]:
                    out.append((p, q))
        return out

    def to_json(self) -> dict[str, Any]:
        return {"nodes": list(self.node_ids), "arcs": [list(a) for a in self.arcs]}


def build_topology(nodes: Iterable[NodeId], arcs: Iterable[Arc]) -> Topology:
    """Validate a labeled arc list and precompute all-pairs hop distances."""
    node_ids = tuple(nodes)
    index: dict[NodeId, int] = {}
    for i, p in enumerate(node_ids):
        if p in index:
            raise TopologyError(f"duplicate node id {p!r}")
        index[p] = i
    arc_list: list[Arc] = []
    seen: dict[tuple[NodeId, NodeId], Label] = {}
    for arc in arcs:
        src, dst, label = arc
        for end in (src, dst):
            if end not in index:
                raise UnknownNodeError(f"arc {arc!r} references unknown node {end!r}")
        if src == dst:
            raise SelfLoopError(f"self-loop on node {src!r}")
        if (src, dst) in seen:
            raise DuplicateArcError(f"duplicate arc ({src!r}, {dst!r})")
        seen[(src, dst)] = label
        arc_list.append((src, dst, label))
    for src, dst in seen:
        if (dst, src) not in seen:
            raise AsymmetricArcError(
                f"asymmetric: arc ({src!r}, {dst!r}) has no reverse arc"
            )

    neighbor_sets: dict[NodeId, list[NodeId]] = {p: [] for p in node_ids}
    incoming: dict[NodeId, list[tuple[Label, NodeId]]] = {p: [] for p in node_ids}
    for src, dst, label in arc_list:
        neighbor_sets[src].append(dst)
        incoming[dst].append((label, src))
    neighbors = {
        p: tuple(sorted(qs, key=index.__getitem__)) for p, qs in neighbor_sets.items()
    }
    incoming_t = {
        p: tuple(sorted(cs, key=lambda c: index[c[1]])) for p, cs in incoming.items()
    }

    n = len(node_ids)
    rows = []
    for p in node_ids:
        row = [-1] * n
        row[index[p]] = 0
        queue = deque([p])
        while queue:
            u = queue.popleft()
            du = row[index[u]]
            for v in neighbors[u]:
                if row[index[v]] < 0:
                    row[index[v]] = du + 1
                    queue.append(v)
        if min(row, default=0) < 0:
            missing = node_ids[row.index(-1)]
            raise DisconnectedGraphError(
                f"disconnected: node {missing!r} unreachable from {p!r}"
            )
        rows.append(tuple(row))
    diameter = max((max(r) for r in rows), default=0)
    return Topology(
        node_ids=node_ids,
        arcs=tuple(arc_list),
        distances=tuple(rows),
        diameter=diameter,
        index=index,
        neighbors=neighbors,
        incoming=incoming_t,
    )


def from_edges(
    nodes: Iterable[NodeId], edges: Iterable[tuple[NodeId, NodeId]], label: Label = BOTTOM
) -> Topology:
    """Symmetric topology with one label on every arc."""
    arcs = []
    for p, q in edges:
        arcs.append((p, q, label))
        arcs.append((q, p, label))
    return build_topology(nodes, arcs)


def neighbor_view(t: Topology, p: NodeId, states: Mapping[NodeId, Any]) -> frozenset:
    """The set of (channel label, source state) pairs over the incoming arcs of p.

    Multiplicities are lost on purpose: two channels with the same label
    carrying the same state contribute a single element.
    """
    try:
        channels = t.incoming[p]
    except KeyError:
        raise UnknownNodeError(f"unknown node {p!r}") from None
    return frozenset((label, states[q]) for label, q in channels)


def _decode_id(raw: Any) -> NodeId:
    return tuple(raw) if isinstance(raw, list) else raw


def load_graph(path: str | Path) -> tuple[Topology, dict[str, Any]]:
    """Load ``{"nodes": [...], "arcs": [[src, dst, label], ...]}``.

    Returns the validated topology and the raw document (callers may read
    optional extra keys such as ``init``).
    """
    doc = json.loads(Path(path).read_text())
    return topology_from_json(doc), doc


def topology_from_json(doc: Mapping[str, Any]) -> Topology:
    if "nodes" not in doc or "arcs" not in doc:
        raise TopologyError("graph document needs 'nodes' and 'arcs'")
    nodes = [_decode_id(v) for v in doc["nodes"]]
    arcs = []
    for arc in doc["arcs"]:
        if len(arc) != 3:
            raise TopologyError(f"arc {arc!r} must be [src, dst, label]")
        src, dst, label = arc
        arcs.append((_decode_id(src), _decode_id(dst), str(label)))
    return build_topology(nodes, arcs)


def dump_graph(t: Topology, path: str | Path, **extra: Any) -> None:
    doc = t.to_json()
    doc.update(extra)
    Path(path).write_text(json.dumps(doc))
