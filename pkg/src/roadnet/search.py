"""Iterative graph construction.

A stack of frontier vertices drives the loop: the decision callable
looks at the graph, the stack top, and the image, and answers
(action, angle).  A walk proposes u = top + (D cos a, D sin a); u
outside the bounding box pops instead, u near an existing vertex merges
into it (edge added, top popped), and otherwise u becomes a new vertex
and the new stack top.  A stop pops.  Every iteration therefore either
pushes a fresh in-box vertex or pops, so the loop always terminates.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graph import RoadGraph

TRACE_FORMAT_TAG = "SEARCHTRACE 1"

WALK = "walk"
STOP = "stop"

DEFAULT_STEP_BUDGET = 100_000


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned box in pixel coordinates."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"degenerate box {self}")

    def contains(self, p) -> bool:
        return (self.x0 <= p[0] <= self.x1) and (self.y0 <= p[1] <= self.y1)

    @staticmethod
    def of_image(image) -> "Rect":
        h, w = image.shape[:2]
        return Rect(0.0, 0.0, float(w - 1), float(h - 1))


@dataclass
class SearchConfig:
    bbox: Rect
    step_distance: float = 12.0
    snap_radius: float = None
    step_budget: int = DEFAULT_STEP_BUDGET

    def __post_init__(self):
        if self.step_distance <= 0:
            raise ValueError("step distance must be positive")
        if self.snap_radius is None:
            self.snap_radius = 0.5 * self.step_distance
        if not 0 < self.snap_radius < self.step_distance:
            raise ValueError("snap radius must sit in (0, D)")
        if self.step_budget < 1:
            raise ValueError("step budget must be positive")


def step_position(p, step_distance, alpha):
    """Destination of one walk move from p at angle alpha
    (counterclockwise from +x)."""
    return (p[0] + step_distance * math.cos(alpha),
            p[1] + step_distance * math.sin(alpha))


def grid_seeds(bbox: Rect, spacing, margin=0.0):
    """Regular seed lattice inside bbox, inset by margin on all sides.

    Used to start searches without prior knowledge of where roads are;
    off-road seeds cost one stop decision each."""
    if spacing <= 0:
        raise ValueError("seed spacing must be positive")
    xs = np.arange(bbox.x0 + margin, bbox.x1 - margin + 1e-9, spacing)
    ys = np.arange(bbox.y0 + margin, bbox.y1 - margin + 1e-9, spacing)
    return [(float(x), float(y)) for y in ys for x in xs]


def snap(graph: RoadGraph, u, snap_radius):
    """Merge u into the nearest existing vertex within snap_radius
    (lowest index on ties); otherwise keep u as a fresh position."""
    idx = graph.nearest_vertex(u, snap_radius)
    return u if idx is None else idx


def _run(image, graph, stack, config, decide, trace):
    """Drain the stack, growing graph in place.  Appends one
    (x, y, action, alpha) row to trace per decision."""
    steps = 0
    while stack and steps < config.step_budget:
        steps += 1
        top = stack[-1]
        pos = graph.vertex(top)
        p = (float(pos[0]), float(pos[1]))
        action, alpha = decide(graph, p, image)
        if trace is not None:
            trace.append((p[0], p[1], action, alpha if action == WALK else None))
        if action == STOP:
            stack.pop()
            continue
        u = step_position(p, config.step_distance, alpha)
        if not config.bbox.contains(u):
            stack.pop()
            continue
        hit = snap(graph, u, config.snap_radius)
        if isinstance(hit, int):
            graph.add_edge(top, hit)
            stack.pop()
        else:
            v = graph.add_vertex(u)
            graph.add_edge(top, v)
            stack.append(v)
    return steps


def search(image, v0, config: SearchConfig, decide):
    """Build a road graph outward from v0.

    decide(graph, position, image) -> (action, alpha) with alpha in
    radians for walks and ignored for stops.  Returns the graph and the
    decision trace.
    """
    if not config.bbox.contains(v0):
        raise ValueError(f"start {v0} outside bounding box {config.bbox}")
    graph = RoadGraph()
    stack = [graph.add_vertex(v0)]
    trace = []
    _run(image, graph, stack, config, decide, trace)
    return graph, trace


def search_multi(image, seeds, config: SearchConfig, decide, trace=None):
    """Union of searches from several seeds on one shared graph.
    Seeds landing within the snap radius of earlier work reuse that
    vertex, so re-seeding explored ground is a cheap no-op."""
    graph = RoadGraph()
    for v0 in seeds:
        if not config.bbox.contains(v0):
            raise ValueError(f"seed {v0} outside bounding box {config.bbox}")
        hit = snap(graph, v0, config.snap_radius)
        start = hit if isinstance(hit, int) else graph.add_vertex(v0)
        _run(image, graph, [start], config, decide, trace)
    return graph


def save_trace(trace, path):
    """One line per decision: `<x> <y> <walk|stop> <alpha|->`."""
    with open(path, "w") as fh:
        fh.write(f"{TRACE_FORMAT_TAG}\n")
        for x, y, action, alpha in trace:
            tail = repr(float(alpha)) if action == WALK else "-"
            fh.write(f"{float(x)!r} {float(y)!r} {action} {tail}\n")


def load_trace(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != TRACE_FORMAT_TAG:
        raise DataError(f"missing '{TRACE_FORMAT_TAG}' header", path=path, line=1)
    trace = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != 4 or parts[2] not in (WALK, STOP):
            raise DataError(f"bad trace line {line!r}", path=path, line=lineno)
        try:
            x, y = float(parts[0]), float(parts[1])
            alpha = float(parts[3]) if parts[3] != "-" else None
        except ValueError:
            raise DataError(f"bad trace line {line!r}", path=path, line=lineno)
        if (alpha is None) != (parts[2] == STOP):
            raise DataError("alpha must be '-' exactly for stops",
                            path=path, line=lineno)
        trace.append((x, y, parts[2], alpha))
    return trace
