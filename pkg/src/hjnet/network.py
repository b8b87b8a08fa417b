"""Metric graphs: junctions and finite networks with oriented edges.

Every edge is parametrised by an offset in ``[0, length]``; offset 0 sits at
the tail vertex and offset ``length`` at the head vertex. Half-lines have
infinite length and no head. A vertex stores the edges leaving it (tail
incidence, ``incoming_minus``) and the edges arriving at it (head incidence,
``incoming_plus``).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

from .errors import InvalidArgument

#: Finite edges shorter than this are rejected.
MIN_EDGE_LENGTH = 1e-9


@dataclass(frozen=True)
class Edge:
    id: str
    length: float
    tail_vertex: str
    head_vertex: str | None = None

    def __post_init__(self) -> None:
        if not (self.length > 0):
            raise InvalidArgument(f"edge {self.id!r}: length must be positive, got {self.length}")
        if math.isinf(self.length):
            if self.head_vertex is not None:
                raise InvalidArgument(f"edge {self.id!r}: a half-line cannot have a head vertex")
        else:
            if self.length < MIN_EDGE_LENGTH:
                raise InvalidArgument(f"edge {self.id!r}: length below {MIN_EDGE_LENGTH}")
            if self.head_vertex is None:
                raise InvalidArgument(f"edge {self.id!r}: a finite edge needs a head vertex")

    @property
    def is_half_line(self) -> bool:
        return math.isinf(self.length)


@dataclass(frozen=True)
class Vertex:
    id: str
    incoming_minus: tuple[str, ...] = ()
    incoming_plus: tuple[str, ...] = ()

    @property
    def degree(self) -> int:
        return len(self.incoming_minus) + len(self.incoming_plus)


@dataclass(frozen=True)
class NetworkPoint:
    edge: str
    offset: float


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable finite network. Build it with :meth:`from_edges`."""

    edges: Mapping[str, Edge]
    vertices: Mapping[str, Vertex]
    _order: tuple[str, ...] = field(default=(), repr=False)

    @classmethod
    def from_edges(cls, edges: Iterable[Edge], *, require_connected: bool = True) -> "Network":
        edge_map: dict[str, Edge] = {}
        minus: dict[str, list[str]] = {}
        plus: dict[str, list[str]] = {}
        vertex_order: list[str] = []

        def touch(v: str) -> None:
            if v not in minus:
                minus[v] = []
                plus[v] = []
                vertex_order.append(v)

        for e in edges:
            if e.id in edge_map:
                raise InvalidArgument(f"duplicate edge id {e.id!r}")
            edge_map[e.id] = e
            touch(e.tail_vertex)
            minus[e.tail_vertex].append(e.id)
            if e.head_vertex is not None:
                touch(e.head_vertex)
                plus[e.head_vertex].append(e.id)
        if not edge_map:
            raise InvalidArgument("a network needs at least one edge")
        vertices = {
            v: Vertex(v, tuple(minus[v]), tuple(plus[v])) for v in vertex_order
        }
        net = cls(edge_map, vertices, tuple(edge_map))
        if require_connected and not net.is_connected():
            raise InvalidArgument("network is not connected")
        return net

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return self._order

    def edge(self, edge_id: str) -> Edge:
        try:
            return self.edges[edge_id]
        except KeyError:
            raise InvalidArgument(f"unknown edge {edge_id!r}") from None

    def vertex(self, vertex_id: str) -> Vertex:
        try:
            return self.vertices[vertex_id]
        except KeyError:
            raise InvalidArgument(f"unknown vertex {vertex_id!r}") from None

    def is_connected(self) -> bool:
        ids = list(self.vertices)
        seen = {ids[0]}
        stack = [ids[0]]
        while stack:
            v = stack.pop()
            for w, _ in self._neighbours[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(ids)

    @cached_property
    def _neighbours(self) -> dict[str, list[tuple[str, float]]]:
        adj: dict[str, list[tuple[str, float]]] = {v: [] for v in self.vertices}
        for eid in sorted(self.edges):
            e = self.edges[eid]
            if e.head_vertex is None or e.head_vertex == e.tail_vertex:
                continue
            adj[e.tail_vertex].append((e.head_vertex, e.length))
            adj[e.head_vertex].append((e.tail_vertex, e.length))
        return adj

    def _dijkstra(self, source: str) -> dict[str, float]:
        dist = {source: 0.0}
        heap = [(0.0, source)]
        while heap:
            d, v = heapq.heappop(heap)
            if d > dist.get(v, math.inf):
                continue
            for w, length in self._neighbours[v]:
                nd = d + length
                if nd < dist.get(w, math.inf):
                    dist[w] = nd
                    heapq.heappush(heap, (nd, w))
        return dist

    @cached_property
    def vertex_distances(self) -> dict[str, dict[str, float]]:
        return {v: self._dijkstra(v) for v in self.vertices}

    def validate_point(self, x: NetworkPoint) -> None:
        e = self.edge(x.edge)
        if not (0.0 <= x.offset <= e.length) or math.isinf(x.offset):
            raise InvalidArgument(f"offset {x.offset} outside edge {x.edge!r}")

    def _exits(self, x: NetworkPoint) -> list[tuple[str, float]]:
        """Vertices reachable from ``x`` along its own edge, with the distance."""
        e = self.edges[x.edge]
        out = [(e.tail_vertex, x.offset)]
        if e.head_vertex is not None:
            out.append((e.head_vertex, e.length - x.offset))
        return out


def build_junction(n_branches: int) -> Network:
    """One vertex ``"o"`` with ``n_branches`` half-lines ``e1 .. eN`` leaving it."""
    if not isinstance(n_branches, int) or n_branches < 1:
        raise InvalidArgument(f"a junction needs at least one branch, got {n_branches!r}")
    return Network.from_edges(Edge(f"e{i + 1}", math.inf, "o") for i in range(n_branches))


def geodesic_distance(net: Network, x: NetworkPoint, y: NetworkPoint) -> float:
    """Length of a shortest path; ``math.inf`` when the points are disconnected."""
    net.validate_point(x)
    net.validate_point(y)
    best = math.inf
    if x.edge == y.edge:
        best = abs(x.offset - y.offset)
    table = net.vertex_distances
    for u, du in net._exits(x):
        if math.isinf(du):
            continue
        row = table[u]
        for w, dw in net._exits(y):
            if math.isinf(dw) or w not in row:
                continue
            best = min(best, du + row[w] + dw)
    return best


def incident_partition(net: Network, vertex_id: str) -> tuple[list[str], list[str]]:
    v = net.vertex(vertex_id)
    return list(v.incoming_minus), list(v.incoming_plus)
