"""Topology generators used by the CLI and the campaigns."""

from __future__ import annotations

import random

from .topology import BOTTOM, Topology, build_topology, from_edges

LEFT = "L"
RIGHT = "R"


def path_graph(n: int) -> Topology:
    return from_edges(range(n), [(i, i + 1) for i in range(n - 1)])


def ring_graph(n: int) -> Topology:
    if n < 3:
        raise ValueError("a simple ring needs at least 3 nodes")
    return from_edges(range(n), [(i, (i + 1) % n) for i in range(n)])


def oriented_ring(n: int) -> Topology:
    """Ring whose channels are labeled L/R consistently.

    Node i's right neighbor is i+1.  The arc entering i from its right
    neighbor carries R and the arc entering i from its left neighbor
    carries L, so each node's two incoming channels differ and the two
    arcs of every edge differ.
    """
    if n < 3:
        raise ValueError("a simple ring needs at least 3 nodes")
    arcs = []
    for i in range(n):
        right = (i + 1) % n
        arcs.append((right, i, RIGHT))
        arcs.append((i, right, LEFT))
    return build_topology(range(n), arcs)


def star_graph(n: int) -> Topology:
    """Node 0 is the center."""
    return from_edges(range(n), [(0, i) for i in range(1, n)])


def complete_graph(n: int) -> Topology:
    return from_edges(range(n), [(i, j) for i in range(n) for j in range(i + 1, n)])


def random_tree_edges(n: int, rng: random.Random) -> list[tuple[int, int]]:
    """Uniform random labeled tree via a random Pruefer sequence."""
    if n <= 1:
        return []
    if n == 2:
        return [(0, 1)]
    seq = [rng.randrange(n) for _ in range(n - 2)]
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    edges = []
    for v in seq:
        leaf = min(u for u in range(n) if degree[u] == 1)
        edges.append((leaf, v))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = (i for i in range(n) if degree[i] == 1)
    edges.append((u, w))
    return edges


def random_connected(n: int, rng: random.Random, edge_prob: float | None = None) -> Topology:
    """Uniform spanning tree plus independent extra edges.

    ``edge_prob`` defaults to 1.5/n, which keeps the diameter well above
    1 on desk-scale graphs.
    """
    if edge_prob is None:
        edge_prob = min(1.0, 1.5 / max(n, 1))
    edges = {tuple(sorted(e)) for e in random_tree_edges(n, rng)}
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < edge_prob:
                edges.add((i, j))
    return from_edges(range(n), sorted(edges))


def port_labeled(t: Topology) -> Topology:
    """Relabel incoming channels with locally distinct port numbers.

    The label of the arc q -> p is q's rank among p's neighbors, zero
    padded so that string order matches numeric order.
    """
    max_degree = max((len(v) for v in t.neighbors.values()), default=0)
    width = max(2, len(str(max_degree)))
    arcs = []
    for p in t.node_ids:
        for rank, q in enumerate(t.neighbors[p]):
            arcs.append((q, p, f"{rank:0{width}d}"))
    return build_topology(t.node_ids, arcs)


GENERATORS = ("path", "ring", "oriented-ring", "star", "complete", "random-connected")


def generate(kind: str, n: int, rng: random.Random, edge_prob: float | None = None) -> Topology:
    if kind == "path":
        return path_graph(n)
    if kind == "ring":
        return ring_graph(n)
    if kind == "oriented-ring":
        return oriented_ring(n)
    if kind == "star":
        return star_graph(n)
    if kind == "complete":
        return complete_graph(n)
    if kind == "random-connected":
        return random_connected(n, rng, edge_prob)
    raise ValueError(f"unknown generator {kind!r}; expected one of {', '.join(GENERATORS)}")


def relabel_bottom(t: Topology) -> Topology:
    """Same graph with every channel labeled by the singleton label."""
    return build_topology(t.node_ids, [(s, d, BOTTOM) for s, d, _ in t.arcs])
