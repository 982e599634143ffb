"""Undirected simple graphs: construction, generators, and JSON I/O.

Nodes are integers 0..n_nodes-1. Edges are stored canonically as sorted
(i, j) pairs with i < j, deduplicated and ordered, so two graphs with the
same edge set compare equal and hash identically regardless of how their
edges were listed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

from . import rng


@dataclass(frozen=True)
class Graph:
    """Immutable undirected simple graph on nodes 0..n_nodes-1."""

    n_nodes: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if self.n_nodes < 1:
            raise ValueError(f"graph needs at least one node, got {self.n_nodes}")
        seen = set()
        canon = []
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ValueError(f"edge ({i},{j}) out of range for n={self.n_nodes}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            canon.append(key)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        """Per-node neighbor tuples in ascending order."""
        nbrs: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(tuple(sorted(v)) for v in nbrs)

    @cached_property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.neighbors)

    @property
    def max_degree(self) -> int:
        return max(self.degrees)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def directed_pairs(self) -> tuple[tuple[int, int], ...]:
        """All (receiver, sender) pairs, lexicographically ordered."""
        pairs = []
        for i in range(self.n_nodes):
            for j in self.neighbors[i]:
                pairs.append((i, j))
        return tuple(pairs)

    @cached_property
    def distances(self) -> tuple[tuple[int, ...], ...]:
        """All-pairs hop distances by BFS; -1 marks unreachable pairs."""
        out = []
        for src in range(self.n_nodes):
            dist = [-1] * self.n_nodes
            dist[src] = 0
            frontier = [src]
            while frontier:
                nxt = []
                for v in frontier:
                    for u in self.neighbors[v]:
                        if dist[u] < 0:
                            dist[u] = dist[v] + 1
                            nxt.append(u)
                frontier = nxt
            out.append(tuple(dist))
        return tuple(out)

    @cached_property
    def is_connected(self) -> bool:
        return all(d >= 0 for d in self.distances[0])

    @cached_property
    def diameter(self) -> int:
        """Longest shortest path; raises on disconnected graphs."""
        if not self.is_connected:
            raise ValueError("diameter of a disconnected graph is undefined")
        return max(max(row) for row in self.distances)

    def edge_distance(self, v: int, edge: tuple[int, int]) -> int:
        """Distance from node v to an edge: min over the two endpoints."""
        i, j = edge
        return min(self.distances[v][i], self.distances[v][j])

    def to_json(self) -> dict:
        return {"n": self.n_nodes, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_json(cls, obj: dict) -> "Graph":
        return cls(int(obj["n"]), tuple((int(i), int(j)) for i, j in obj["edges"]))


def path_graph(n: int) -> Graph:
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise ValueError("cycle needs at least 3 nodes")
    return Graph(n, tuple((i, (i + 1) % n) for i in range(n)))


def complete_graph(n: int) -> Graph:
    return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def star_graph(n: int) -> Graph:
    """Hub node 0 connected to nodes 1..n-1."""
    if n < 2:
        raise ValueError("star needs at least 2 nodes")
    return Graph(n, tuple((0, i) for i in range(1, n)))


def grid_graph(rows: int, cols: int) -> Graph:
    """2D lattice, row-major node ids."""
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return Graph(rows * cols, tuple(edges))


def erdos_renyi_graph(
    n: int,
    q: float,
    seed: int,
    require_connected: bool = True,
    max_attempts: int = 1000,
) -> Graph:
    """G(n, q) with deterministic edge draws; resamples until connected.

    Each attempt uses an independent sub-seed, so the result depends only
    on (n, q, seed), not on draw order.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"edge probability must be in [0,1], got {q}")
    thr = rng.threshold(q)
    for attempt in range(max_attempts):
        aseed = rng.derive_seed(seed, rng.TAG_GRAPH, attempt)
        edges = tuple(
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if rng.mix(aseed, i, j) < thr
        )
        g = Graph(n, edges)
        if not require_connected or g.is_connected:
            return g
    raise ValueError(
        f"no connected sample in {max_attempts} attempts (n={n}, q={q}); "
        "raise q or pass require_connected=False"
    )


def graph_from_spec(spec: str) -> Graph:
    """Parse a compact graph descriptor.

    Forms: "path:N", "cycle:N", "complete:N", "star:N", "grid:RxC",
    "er:N:Q:SEED", or a path to a JSON file (anything containing a '/'
    or ending in ".json").
    """
    if "/" in spec or spec.endswith(".json"):
        return load_graph(spec)
    parts = spec.split(":")
    kind = parts[0]
    try:
        if kind == "path":
            return path_graph(int(parts[1]))
        if kind == "cycle":
            return cycle_graph(int(parts[1]))
        if kind == "complete":
            return complete_graph(int(parts[1]))
        if kind == "star":
            return star_graph(int(parts[1]))
        if kind == "grid":
            r, c = parts[1].lower().split("x")
            return grid_graph(int(r), int(c))
        if kind == "er":
            return erdos_renyi_graph(int(parts[1]), float(parts[2]), int(parts[3]))
    except (IndexError, ValueError) as exc:
        raise ValueError(f"bad graph spec {spec!r}: {exc}") from exc
    raise ValueError(f"unknown graph kind {kind!r} in spec {spec!r}")


def load_graph(path: str) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return Graph.from_json(json.load(fh))


def save_graph(g: Graph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(g.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
