"""Undirected road graphs: 2-D vertices, edge bookkeeping, text format,
and uniform arc-length resampling used by the oracle and the evaluator.

Coordinates are float pixel units, x to the right and y up; raster row
order is flipped only when reading or writing PNG files.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DataError

GRAPH_FORMAT_TAG = "ROADGRAPH 1"


class RoadGraph:
    """Growable set of 2-D vertices plus undirected, deduplicated edges."""

    def __init__(self):
        self._pos = np.empty((16, 2), dtype=np.float64)
        self._n = 0
        self.edges = []          # (i, j) with i < j, insertion order
        self._edge_set = set()
        self._adj = {}           # vertex -> list of neighbours

    def __len__(self):
        return self._n

    @property
    def n_vertices(self) -> int:
        return self._n

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def positions(self) -> np.ndarray:
        """View of vertex positions, shape (n, 2)."""
        return self._pos[:self._n]

    def vertex(self, i: int) -> np.ndarray:
        if not 0 <= i < self._n:
            raise IndexError(f"vertex {i} out of range")
        return self._pos[i]

    def add_vertex(self, pos) -> int:
        if self._n == self._pos.shape[0]:
            grown = np.empty((2 * self._n, 2), dtype=np.float64)
            grown[:self._n] = self._pos[:self._n]
            self._pos = grown
        self._pos[self._n] = (float(pos[0]), float(pos[1]))
        self._adj[self._n] = []
        self._n += 1
        return self._n - 1

    def add_edge(self, i: int, j: int) -> bool:
        """Insert edge (i, j); returns False for self-loops and duplicates."""
        if not (0 <= i < self._n and 0 <= j < self._n):
            raise IndexError(f"edge ({i}, {j}) references missing vertex")
        if i == j:
            return False
        key = (i, j) if i < j else (j, i)
        if key in self._edge_set:
            return False
        self._edge_set.add(key)
        self.edges.append(key)
        self._adj[i].append(j)
        self._adj[j].append(i)
        return True

    def has_edge(self, i: int, j: int) -> bool:
        return ((i, j) if i < j else (j, i)) in self._edge_set

    def neighbors(self, i: int) -> list:
        return self._adj[i]

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    def nearest_vertex(self, pos, radius: float):
        """Index of the closest vertex within radius (lowest index on ties),
        or None."""
        if self._n == 0:
            return None
        d = self._pos[:self._n] - np.asarray(pos, dtype=np.float64)
        dist2 = np.einsum("ij,ij->i", d, d)
        best = int(np.argmin(dist2))
        if dist2[best] <= radius * radius:
            return best
        return None

    def components(self) -> list:
        """Connected components as lists of vertex indices."""
        seen = [False] * self._n
        out = []
        for start in range(self._n):
            if seen[start]:
                continue
            comp = []
            todo = [start]
            seen[start] = True
            while todo:
                v = todo.pop()
                comp.append(v)
                for w in self._adj[v]:
                    if not seen[w]:
                        seen[w] = True
                        todo.append(w)
            out.append(comp)
        return out

    def total_length(self) -> float:
        pos = self.positions()
        return float(sum(np.linalg.norm(pos[i] - pos[j]) for i, j in self.edges))

    def copy(self) -> "RoadGraph":
        g = RoadGraph()
        for i in range(self._n):
            g.add_vertex(self._pos[i])
        for i, j in self.edges:
            g.add_edge(i, j)
        return g


def drop_isolated(graph: RoadGraph) -> RoadGraph:
    """Copy without degree-0 vertices.

    Multi-seed searches leave a probe vertex wherever a seed stopped on
    its first decision; those carry no road evidence and would otherwise
    count against precision."""
    keep = [i for i in range(graph.n_vertices) if graph.degree(i) > 0]
    remap = {old: new for new, old in enumerate(keep)}
    out = RoadGraph()
    for old in keep:
        out.add_vertex(graph.vertex(old))
    for i, j in graph.edges:
        out.add_edge(remap[i], remap[j])
    return out


def save_graph(graph: RoadGraph, path):
    """Write the ROADGRAPH 1 text format (lossless float round-trip)."""
    with open(path, "w") as fh:
        fh.write(f"{GRAPH_FORMAT_TAG}\n")
        pos = graph.positions()
        for i in range(len(graph)):
            fh.write(f"V {i} {float(pos[i, 0])!r} {float(pos[i, 1])!r}\n")
        for i, j in graph.edges:
            fh.write(f"E {i} {j}\n")


def load_graph(path) -> RoadGraph:
    """Read a ROADGRAPH 1 file; vertex ids must be dense from 0."""
    graph = RoadGraph()
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != GRAPH_FORMAT_TAG:
        raise DataError(f"missing '{GRAPH_FORMAT_TAG}' header", path=path, line=1)
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "V" and len(parts) == 4:
            try:
                vid = int(parts[1])
                x, y = float(parts[2]), float(parts[3])
            except ValueError:
                raise DataError("bad vertex line", path=path, line=lineno)
            if vid != len(graph):
                raise DataError(f"vertex id {vid} not dense", path=path, line=lineno)
            graph.add_vertex((x, y))
        elif parts[0] == "E" and len(parts) == 3:
            try:
                i, j = int(parts[1]), int(parts[2])
            except ValueError:
                raise DataError("bad edge line", path=path, line=lineno)
            if not (0 <= i < len(graph) and 0 <= j < len(graph)):
                raise DataError(f"edge ({i}, {j}) references missing vertex",
                                path=path, line=lineno)
            graph.add_edge(i, j)
        else:
            raise DataError(f"unrecognized line {line!r}", path=path, line=lineno)
    return graph


def _chains(graph: RoadGraph):
    """Decompose the edge set into maximal chains between vertices of
    degree != 2 (plus leftover degree-2 cycles)."""
    visited = set()

    def walk(start, first):
        chain = [start, first]
        visited.add((min(start, first), max(start, first)))
        prev, cur = start, first
        while graph.degree(cur) == 2:
            a, b = graph.neighbors(cur)
            nxt = b if a == prev else a
            key = (min(cur, nxt), max(cur, nxt))
            if key in visited:
                break
            visited.add(key)
            chain.append(nxt)
            prev, cur = cur, nxt
        return chain

    chains = []
    for v in range(len(graph)):
        if graph.degree(v) == 2:
            continue
        for w in graph.neighbors(v):
            key = (min(v, w), max(v, w))
            if key not in visited:
                chains.append(walk(v, w))
    # leftover: pure cycles where every vertex has degree 2
    for i, j in graph.edges:
        key = (i, j)
        if key not in visited:
            chains.append(walk(i, j))
    return chains


def resample_uniform(graph: RoadGraph, spacing: float) -> np.ndarray:
    """Points spaced ~`spacing` apart along every chain of the graph.

    Chain endpoints are always emitted (shared junctions once); interior
    points are placed by arc length.  Isolated vertices are kept as-is.
    Returns an (n, 2) array.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    pos = graph.positions()
    points = []
    emitted_vertices = set()

    def emit_vertex(v):
        if v not in emitted_vertices:
            emitted_vertices.add(v)
            points.append(pos[v])

    for chain in _chains(graph):
        emit_vertex(chain[0])
        # cumulative arc length along the chain polyline
        segs = [np.linalg.norm(pos[b] - pos[a]) for a, b in zip(chain, chain[1:])]
        total = float(sum(segs))
        n_interior = int(math.floor(total / spacing))
        targets = [k * spacing for k in range(1, n_interior + 1)]
        # drop an interior point that would coincide with the far endpoint
        if targets and total - targets[-1] < 0.5 * spacing:
            targets.pop()
        acc = 0.0
        seg_idx = 0
        for t in targets:
            while seg_idx < len(segs) and acc + segs[seg_idx] < t:
                acc += segs[seg_idx]
                seg_idx += 1
            if seg_idx >= len(segs):
                break
            a, b = chain[seg_idx], chain[seg_idx + 1]
            frac = (t - acc) / segs[seg_idx] if segs[seg_idx] > 0 else 0.0
            points.append(pos[a] + frac * (pos[b] - pos[a]))
        emit_vertex(chain[-1])

    for v in range(len(graph)):
        if graph.degree(v) == 0:
            emit_vertex(v)

    if not points:
        return np.empty((0, 2), dtype=np.float64)
    return np.array(points, dtype=np.float64)
