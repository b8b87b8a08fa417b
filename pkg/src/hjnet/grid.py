"""Uniform discretisation of a network into one flat array of nodes.

Vertex nodes come first (one per vertex, shared by all incident edges),
followed by the interior nodes of each edge in edge order and, for every
truncated half-line, one end node. Ends and vertices are both "junction
rows": a node whose update is a limited flux over its incidences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidArgument, InvalidState
from .network import Network, NetworkPoint

#: orientation tags of an incidence (see :class:`Grid`)
TAIL = 1   # the node is the edge's offset-0 end: flux term H-(s)
HEAD = -1  # the node is the edge's far end: flux term H+(-s)


@dataclass(frozen=True)
class JunctionRow:
    key: str              # vertex id, or "<edge>:end" for a truncated half-line
    node: int
    edges: tuple[str, ...]
    orient: tuple[int, ...]

    @property
    def is_truncation(self) -> bool:
        return self.key.endswith(":end") and len(self.edges) == 1


@dataclass(eq=False)
class Grid:
    """Node layout for ``network`` with target spacing ``dx``.

    Every finite edge gets ``max(2, round(length / dx))`` cells, so the
    realised spacing ``edge_dx[e]`` is uniform per edge and close to ``dx``.
    """

    network: Network
    dx: float
    truncation: Mapping[str, float] | float | None = None
    edge_nodes: dict[str, np.ndarray] = field(init=False)
    edge_offsets: dict[str, np.ndarray] = field(init=False)
    edge_dx: dict[str, float] = field(init=False)
    edge_length: dict[str, float] = field(init=False)
    rows: list[JunctionRow] = field(init=False)
    n_nodes: int = field(init=False)

    def __post_init__(self) -> None:
        if not (self.dx > 0):
            raise InvalidArgument("dx must be positive")
        net = self.network
        vertex_node = {v: k for k, v in enumerate(net.vertices)}
        count = len(vertex_node)
        self.edge_nodes, self.edge_offsets, self.edge_dx, self.edge_length = {}, {}, {}, {}
        ends: list[tuple[str, int]] = []
        for eid in net.edge_ids:
            e = net.edges[eid]
            length = e.length
            if e.is_half_line:
                length = self._truncated_length(eid)
            cells = max(2, int(round(length / self.dx)))
            h = length / cells
            interior = np.arange(count, count + cells - 1)
            count += cells - 1
            first = vertex_node[e.tail_vertex]
            if e.is_half_line:
                last = count
                ends.append((eid, last))
                count += 1
            else:
                last = vertex_node[e.head_vertex]
            self.edge_nodes[eid] = np.concatenate([[first], interior, [last]]).astype(np.int64)
            self.edge_offsets[eid] = np.arange(cells + 1) * h
            self.edge_offsets[eid][-1] = length
            self.edge_dx[eid] = h
            self.edge_length[eid] = length
        self.n_nodes = count
        self.rows = []
        for vid, v in net.vertices.items():
            edges = tuple(v.incoming_minus) + tuple(v.incoming_plus)
            orient = (TAIL,) * len(v.incoming_minus) + (HEAD,) * len(v.incoming_plus)
            self.rows.append(JunctionRow(vid, vertex_node[vid], edges, orient))
        for eid, node in ends:
            self.rows.append(JunctionRow(f"{eid}:end", node, (eid,), (HEAD,)))
        self._build_arrays()

    def _truncated_length(self, eid: str) -> float:
        tr = self.truncation
        if tr is None:
            raise InvalidArgument(f"half-line {eid!r} needs a truncation length")
        value = tr.get(eid) if isinstance(tr, Mapping) else tr
        if value is None or not (math.isfinite(value) and value > 0):
            raise InvalidArgument(f"invalid truncation for half-line {eid!r}: {value!r}")
        return float(value)

    def _build_arrays(self) -> None:
        node, left, right, inv_dx, edge_idx = [], [], [], [], []
        for k, eid in enumerate(self.network.edge_ids):
            nodes = self.edge_nodes[eid]
            node.append(nodes[1:-1])
            left.append(nodes[:-2])
            right.append(nodes[2:])
            inv_dx.append(np.full(nodes.size - 2, 1.0 / self.edge_dx[eid]))
            edge_idx.append(np.full(nodes.size - 2, k))
        self.int_node = np.concatenate(node).astype(np.int64)
        self.int_left = np.concatenate(left).astype(np.int64)
        self.int_right = np.concatenate(right).astype(np.int64)
        self.int_inv_dx = np.concatenate(inv_dx)
        self.int_edge = np.concatenate(edge_idx).astype(np.int64)

        eindex = {eid: k for k, eid in enumerate(self.network.edge_ids)}
        rnode, nb, rinv, orient, redge, rrow = [], [], [], [], [], []
        for r, row in enumerate(self.rows):
            for eid, o in zip(row.edges, row.orient):
                nodes = self.edge_nodes[eid]
                rnode.append(row.node)
                nb.append(nodes[1] if o == TAIL else nodes[-2])
                rinv.append(1.0 / self.edge_dx[eid])
                orient.append(o)
                redge.append(eindex[eid])
                rrow.append(r)
        self.inc_node = np.array(rnode, dtype=np.int64)
        self.inc_nb = np.array(nb, dtype=np.int64)
        self.inc_inv_dx = np.array(rinv)
        self.inc_orient = np.array(orient, dtype=np.int64)
        self.inc_edge = np.array(redge, dtype=np.int64)
        self.inc_row = np.array(rrow, dtype=np.int64)
        self.row_node = np.array([row.node for row in self.rows], dtype=np.int64)

    # -- helpers ---------------------------------------------------------
    @property
    def min_dx(self) -> float:
        return min(self.edge_dx.values())

    def row_index(self, key: str) -> int:
        for r, row in enumerate(self.rows):
            if row.key == key:
                return r
        raise InvalidArgument(f"unknown vertex {key!r}")

    def vertex_node(self, vertex_id: str) -> int:
        return self.rows[self.row_index(vertex_id)].node

    def sample(self, fn: Callable[[str, np.ndarray], np.ndarray]) -> np.ndarray:
        """Evaluate ``fn(edge_id, offsets)`` on every node."""
        values = np.full(self.n_nodes, np.nan)
        for eid in self.network.edge_ids:
            vals = np.asarray(fn(eid, self.edge_offsets[eid]), dtype=float)
            vals = np.broadcast_to(vals, self.edge_offsets[eid].shape)
            nodes = self.edge_nodes[eid]
            fresh = np.isnan(values[nodes])
            values[nodes[fresh]] = vals[fresh]
        if not np.all(np.isfinite(values)):
            raise InvalidState("initial data is not finite on every node")
        return values

    def node_points(self) -> list[tuple[str, float, int]]:
        """``(edge_id, offset, node)`` for every edge position, endpoints included."""
        out = []
        for eid in self.network.edge_ids:
            for off, node in zip(self.edge_offsets[eid], self.edge_nodes[eid]):
                out.append((eid, float(off), int(node)))
        return out


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray
    time: float = 0.0
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise InvalidState(
                f"expected {self.grid.n_nodes} values, got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidState("grid function has non-finite values")

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy(), self.time)

    def on_edge(self, edge_id: str) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.edge_offsets[edge_id], self.values[self.grid.edge_nodes[edge_id]]

    def at(self, edge_id: str, offsets) -> np.ndarray:
        x, v = self.on_edge(edge_id)
        return np.interp(np.asarray(offsets, dtype=float), x, v)

    def __call__(self, point: NetworkPoint) -> float:
        return float(self.at(point.edge, point.offset))
