"""Procedural worlds for desk-scale experiments.

A world is a planar road graph grown by seeded random walkers plus a
rendered map image: textured background, clutter blobs and streaks,
roads stroked on top.  The oracle decision function replays the
ground truth as walk/stop labels, which makes full training sets
without any hand annotation.
"""

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .decision import DecisionLabel, STOP, WALK, angle_to_bin, bin_center, encode_input
from .errors import DataError
from .graph import RoadGraph, load_graph, save_graph
from .raster import draw_disk, draw_segment, imread, imwrite
from .search import Rect, SearchConfig, search_multi

DATASET_FORMAT_TAG = "DECISIONSET 1"

ROAD_COLOR = (0.82, 0.80, 0.76)
BACKGROUND_COLOR = (0.42, 0.46, 0.38)
MIN_CLUTTER_COLOR_GAP = 0.25


@dataclass(frozen=True)
class WorldSpec:
    size: int = 512
    seed: int = 0
    density: float = 0.8
    branch_prob: float = 0.12
    curvature: float = 0.35
    road_width: float = 3.0
    noise: float = 0.5
    segment_len: float = 12.0
    road_color: tuple = ROAD_COLOR
    background: tuple = BACKGROUND_COLOR

    def __post_init__(self):
        if self.size < 4 * self.segment_len:
            raise ValueError(
                f"size {self.size} below 4 steps of {self.segment_len}")
        if self.road_width < 1:
            raise ValueError("road width must be at least 1 pixel")
        for name in ("density", "branch_prob", "noise"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.curvature < 0:
            raise ValueError("curvature must be nonnegative")


def _grow_graph(spec: WorldSpec, rng) -> RoadGraph:
    """Random-walk road growth.  Every vertex keeps at least 0.7 steps
    of clearance from the rest, and edges span 0.7 to 1.3 steps, so a
    tracer stepping one segment at a time always lands near its target."""
    d = spec.segment_len
    margin = 1.5 * d
    lo, hi = margin, spec.size - 1 - margin
    graph = RoadGraph()
    cap = int(spec.size ** 2 / (4 * d * d))
    n_walkers = max(1, round(spec.density * spec.size / 32))

    queue = deque()
    for _ in range(n_walkers):
        for _ in range(40):
            pos = (rng.uniform(lo, hi), rng.uniform(lo, hi))
            if graph.nearest_vertex(pos, 0.7 * d) is None:
                break
        else:
            continue
        heading = rng.uniform(0, 2 * math.pi)
        v = graph.add_vertex(pos)
        queue.append((v, heading, int(rng.integers(15, 45))))

    while queue and graph.n_vertices < cap:
        v, heading, steps_left = queue.popleft()
        p = graph.vertex(v)
        heading += rng.uniform(-spec.curvature, spec.curvature)
        nxt = (p[0] + d * math.cos(heading), p[1] + d * math.sin(heading))
        if steps_left <= 0 or not (lo <= nxt[0] <= hi and lo <= nxt[1] <= hi):
            continue
        w = graph.nearest_vertex(nxt, 0.7 * d)
        if w is not None:
            gap = float(np.hypot(*(graph.vertex(w) - p)))
            to_w = math.atan2(graph.vertex(w)[1] - p[1],
                              graph.vertex(w)[0] - p[0])
            turn = abs((to_w - heading + math.pi) % (2 * math.pi) - math.pi)
            if w != v and 0.7 * d <= gap <= 1.3 * d and turn <= math.pi / 3:
                graph.add_edge(v, w)
            continue
        u = graph.add_vertex(nxt)
        graph.add_edge(v, u)
        queue.append((u, heading, steps_left - 1))
        if rng.random() < spec.branch_prob:
            side = 1.0 if rng.random() < 0.5 else -1.0
            branch = heading + side * (math.pi / 2 + rng.uniform(-0.4, 0.4))
            queue.append((u, branch, int(rng.integers(10, 30))))
    return graph


def _clutter_color(rng, road_color):
    """Random color kept visibly apart from the road color."""
    while True:
        c = rng.uniform(0.05, 0.95, size=3)
        if np.abs(c - np.asarray(road_color)).max() >= MIN_CLUTTER_COLOR_GAP:
            return tuple(c)


def _render(spec: WorldSpec, graph: RoadGraph, rng) -> np.ndarray:
    size = spec.size
    coarse = rng.normal(0.0, 1.0, size=(size // 32 + 2, size // 32 + 2, 3))
    texture = ndimage.zoom(coarse, (size / coarse.shape[0],
                                    size / coarse.shape[1], 1), order=1)
    image = np.clip(np.asarray(spec.background) + 0.05 * texture, 0.0, 1.0)

    n_blobs = round(spec.noise * (size / 64) ** 2 * 4)
    for _ in range(n_blobs):
        center = rng.uniform(0, size - 1, size=2)
        draw_disk(image, center, float(rng.uniform(2, 9)),
                  _clutter_color(rng, spec.road_color))
    for _ in range(n_blobs // 3):
        a = rng.uniform(0, size - 1, size=2)
        angle = rng.uniform(0, 2 * math.pi)
        length = rng.uniform(20, 80)
        b = (a[0] + length * math.cos(angle), a[1] + length * math.sin(angle))
        draw_segment(image, a, b, float(rng.uniform(2, 5)),
                     _clutter_color(rng, spec.road_color))

    pos = graph.positions()
    for i, j in graph.edges:
        draw_segment(image, pos[i], pos[j], spec.road_width, spec.road_color)
    return image


def generate_world(spec: WorldSpec):
    """Ground-truth graph and rendered image, deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    if spec.density == 0.0:
        graph = RoadGraph()
    else:
        graph = _grow_graph(spec, rng)
    return graph, _render(spec, graph, rng)


def save_world(spec: WorldSpec, graph: RoadGraph, image, stem):
    """Write the triple <stem>.png, <stem>.graph.txt, <stem>.spec.txt."""
    imwrite(f"{stem}.png", image)
    save_graph(graph, f"{stem}.graph.txt")
    with open(f"{stem}.spec.txt", "w") as fh:
        for key in ("size", "seed", "density", "branch_prob", "curvature",
                    "road_width", "noise", "segment_len"):
            fh.write(f"{key} = {getattr(spec, key)!r}\n")


def load_world(stem):
    image = imread(f"{stem}.png")
    graph = load_graph(f"{stem}.graph.txt")
    fields = {}
    path = f"{stem}.spec.txt"
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"expected 'key = value', got {line!r}",
                                path=path, line=lineno)
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    try:
        spec = WorldSpec(size=int(fields["size"]), seed=int(fields["seed"]),
                         density=float(fields["density"]),
                         branch_prob=float(fields["branch_prob"]),
                         curvature=float(fields["curvature"]),
                         road_width=float(fields["road_width"]),
                         noise=float(fields["noise"]),
                         segment_len=float(fields["segment_len"]))
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad world spec: {exc}", path=path)
    return spec, graph, image


def component_seeds(graph: RoadGraph):
    """One representative position per connected component."""
    pos = graph.positions()
    return [(float(pos[comp[0], 0]), float(pos[comp[0], 1]))
            for comp in graph.components()]


class OracleContext:
    """Ground truth plus per-edge coverage flags; feeding its decisions
    to the search replays the whole reachable network exactly once."""

    def __init__(self, truth: RoadGraph, anchor_radius, n_bins=64):
        self.truth = truth
        self.anchor_radius = anchor_radius
        self.n_bins = n_bins
        self.covered = set()

    def reset(self):
        self.covered.clear()

    def coverage(self) -> float:
        if self.truth.n_edges == 0:
            return 1.0
        return len(self.covered) / self.truth.n_edges


def oracle_decision(ctx: OracleContext, graph: RoadGraph, position) -> DecisionLabel:
    """Walk along an uncovered ground-truth edge at the anchored vertex,
    aiming at the edge's far endpoint; stop off-road or when everything
    incident is covered.  Edges whose far end is not yet in the traced
    graph are preferred, so merges that retire the stack top are saved
    for last; remaining ties go to the lowest angle bin."""
    truth = ctx.truth
    anchor = truth.nearest_vertex(position, ctx.anchor_radius)
    if anchor is None:
        return DecisionLabel(STOP)
    best = None
    for m in truth.neighbors(anchor):
        key = (anchor, m) if anchor < m else (m, anchor)
        if key in ctx.covered:
            continue
        target = truth.vertex(m)
        alpha = math.atan2(target[1] - position[1], target[0] - position[0])
        b = angle_to_bin(alpha, ctx.n_bins)
        is_merge = graph is not None and graph.nearest_vertex(
            target, ctx.anchor_radius) is not None
        rank = (is_merge, b, m)
        if best is None or rank < best[0]:
            best = (rank, key, b)
    if best is None:
        return DecisionLabel(STOP)
    ctx.covered.add(best[1])
    return DecisionLabel(WALK, best[2])


def oracle_decision_fn(ctx: OracleContext):
    """Adapt the oracle to the search protocol (bin-center angles, the
    same quantization a learned head goes through)."""

    def decide(graph, position, image):
        label = oracle_decision(ctx, graph, position)
        if label.action == WALK:
            return WALK, bin_center(label.angle_bin, ctx.n_bins)
        return STOP, None

    return decide


class _WorldRef:
    """One world's image plus its traced graph flattened to arrays, so
    dataset rows can re-encode windows without touching RoadGraph."""

    def __init__(self, image, traced: RoadGraph):
        from .decision import GRAPH_CHANNEL_WIDTH

        self.image = image
        self.traced = traced
        self.pos = traced.positions().copy()
        if traced.n_edges:
            self.edge_idx = np.asarray(traced.edges, dtype=np.int64)
            a = self.pos[self.edge_idx[:, 0]]
            b = self.pos[self.edge_idx[:, 1]]
            m = GRAPH_CHANNEL_WIDTH
            self.seg_lo = np.minimum(a, b) - m
            self.seg_hi = np.maximum(a, b) + m
        else:
            self.edge_idx = np.zeros((0, 2), dtype=np.int64)
            self.seg_lo = np.zeros((0, 2))
            self.seg_hi = np.zeros((0, 2))


class DecisionDataset:
    """Labeled decisions stored as (world, center, graph-prefix) rows.

    Windows re-encode on demand from the referenced world image and the
    first nv vertices / ne edges of that world's traced graph, which is
    exactly what the decision saw live because the search only appends.
    A uint8 cache built on first use trades one encode pass for fast
    epochs.
    """

    def __init__(self, worlds, d, n_bins):
        self.worlds = [w if isinstance(w, _WorldRef) else _WorldRef(*w)
                       for w in worlds]
        self.d = d
        self.n_bins = n_bins
        self.world_idx = np.zeros(0, dtype=np.int32)
        self.centers = np.zeros((0, 2))
        self.prefixes = np.zeros((0, 2), dtype=np.int32)
        self.actions = np.zeros(0, dtype=np.int8)
        self.bins = np.zeros(0, dtype=np.int16)
        self._cache = None

    def __len__(self):
        return len(self.world_idx)

    def add(self, world_idx, center, nv, ne, label: DecisionLabel):
        self.world_idx = np.append(self.world_idx, np.int32(world_idx))
        self.centers = np.vstack([self.centers, [center[0], center[1]]])
        self.prefixes = np.vstack([self.prefixes, [nv, ne]]).astype(np.int32)
        self.actions = np.append(self.actions,
                                 np.int8(0 if label.action == WALK else 1))
        self.bins = np.append(self.bins, np.int16(label.angle_bin))
        self._cache = None

    def _bulk(self, world_idx, centers, prefixes, actions, bins):
        self.world_idx = np.asarray(world_idx, dtype=np.int32)
        self.centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
        self.prefixes = np.asarray(prefixes, dtype=np.int32).reshape(-1, 2)
        self.actions = np.asarray(actions, dtype=np.int8)
        self.bins = np.asarray(bins, dtype=np.int16)
        self._cache = None

    def encode_row(self, k):
        from .decision import GRAPH_CHANNEL_WIDTH, DecisionInput
        from .raster import crop_window, window_origin

        world = self.worlds[self.world_idx[k]]
        nv, ne = self.prefixes[k]
        center = self.centers[k]
        window = crop_window(world.image, center, self.d)
        ox, oy = window_origin(center, self.d)
        channel = np.zeros((self.d, self.d))
        if ne:
            lo = world.seg_lo[:ne]
            hi = world.seg_hi[:ne]
            live = np.flatnonzero((hi[:, 0] >= ox) & (lo[:, 0] <= ox + self.d - 1)
                                  & (hi[:, 1] >= oy) & (lo[:, 1] <= oy + self.d - 1))
            for e in live:
                i, j = world.edge_idx[e]
                a = world.pos[i]
                b = world.pos[j]
                draw_segment(channel, (a[0] - ox, a[1] - oy),
                             (b[0] - ox, b[1] - oy), GRAPH_CHANNEL_WIDTH, 1.0)
        return DecisionInput(window, channel)

    def reference_row(self, k):
        """Same window via the plain graph encoder; slow but canonical."""
        world = self.worlds[self.world_idx[k]]
        nv, ne = self.prefixes[k]
        sub = RoadGraph()
        for i in range(nv):
            sub.add_vertex(world.pos[i])
        for i, j in world.traced.edges[:ne]:
            sub.add_edge(i, j)
        return encode_input(world.image, sub, self.centers[k], self.d)

    def build_cache(self):
        if self._cache is not None:
            return
        n = len(self)
        self._cache = np.empty((n, self.d * self.d * 4), dtype=np.uint8)
        for k in range(n):
            vec = self.encode_row(k).flatten()
            self._cache[k] = np.round(vec * 255.0).astype(np.uint8)

    def encode_batch(self, idx):
        self.build_cache()
        x = self._cache[idx].astype(np.float64) / 255.0
        return x, self.actions[idx].astype(np.int64), self.bins[idx].astype(np.int64)

    def marginals(self):
        walks = int((self.actions == 0).sum())
        return {"walk": walks, "stop": len(self) - walks}

    def subset(self, idx):
        out = DecisionDataset(self.worlds, self.d, self.n_bins)
        out._bulk(self.world_idx[idx], self.centers[idx], self.prefixes[idx],
                  self.actions[idx], self.bins[idx])
        return out


def trace_world(image, truth, d, n_bins, config, collector=None):
    """Run the oracle-driven search over every component of truth.
    Returns the traced graph; collector(center, nv, ne, label) fires at
    each decision when given."""
    ctx = OracleContext(truth, anchor_radius=config.snap_radius, n_bins=n_bins)
    inner = oracle_decision_fn(ctx)

    def decide(graph, position, img):
        if collector is None:
            return inner(graph, position, img)
        label = oracle_decision(ctx, graph, position)
        collector(position, graph.n_vertices, graph.n_edges, label)
        if label.action == WALK:
            return WALK, bin_center(label.angle_bin, n_bins)
        return STOP, None

    traced = search_multi(image, component_seeds(truth), config, decide)
    return traced, ctx


def make_training_set(specs, d, samples_per_world, seed=0, n_bins=64,
                      off_road_fraction=0.15, max_walk_stop_ratio=3.0):
    """Oracle-labeled dataset over the given worlds.

    Every search decision becomes one row; off-road stop probes are
    mixed in so the model learns to reject non-road windows; walks are
    subsampled if they outnumber stops beyond the given ratio."""
    if not specs:
        raise ValueError("no worlds requested")
    rng = np.random.default_rng(seed)
    worlds = []
    rows = []  # (world_idx, cx, cy, nv, ne, action, bin)

    for widx, spec in enumerate(specs):
        truth, image = generate_world(spec)
        config = SearchConfig(bbox=Rect.of_image(image),
                              step_distance=spec.segment_len)
        collected = []

        def collect(center, nv, ne, label):
            collected.append((widx, center[0], center[1], nv, ne,
                              0 if label.action == WALK else 1,
                              label.angle_bin))

        traced, _ = trace_world(image, truth, d, n_bins, config, collect)
        worlds.append((image, traced))

        n_off = round(off_road_fraction * len(collected))
        nv, ne = traced.n_vertices, traced.n_edges
        placed = 0
        guard = 0
        while placed < n_off and guard < 50 * n_off + 100:
            guard += 1
            p = rng.uniform(0, spec.size - 1, size=2)
            if truth.nearest_vertex(p, config.snap_radius) is not None:
                continue
            collected.append((widx, p[0], p[1], nv, ne, 1, -1))
            placed += 1

        if samples_per_world and len(collected) > samples_per_world:
            pick = rng.choice(len(collected), size=samples_per_world,
                              replace=False)
            collected = [collected[i] for i in sorted(pick)]
        rows.extend(collected)

    arr = np.array([(r[5], r[6]) for r in rows], dtype=np.int64)
    walk_idx = np.flatnonzero(arr[:, 0] == 0)
    stop_idx = np.flatnonzero(arr[:, 0] == 1)
    limit = int(max_walk_stop_ratio * max(1, len(stop_idx)))
    if len(walk_idx) > limit:
        keep_walk = rng.choice(walk_idx, size=limit, replace=False)
        keep = np.sort(np.concatenate([keep_walk, stop_idx]))
        rows = [rows[i] for i in keep]

    ds = DecisionDataset(worlds, d, n_bins)
    ds._bulk([r[0] for r in rows], [(r[1], r[2]) for r in rows],
             [(r[3], r[4]) for r in rows], [r[5] for r in rows],
             [r[6] for r in rows])
    return ds


def save_decision_set(ds: DecisionDataset, path):
    """Record stream only; world images/graphs are stored separately."""
    with open(path, "w") as fh:
        fh.write(f"{DATASET_FORMAT_TAG}\n")
        fh.write(f"{len(ds)} {ds.d} {ds.n_bins}\n")
        for k in range(len(ds)):
            action = WALK if ds.actions[k] == 0 else STOP
            fh.write(f"{ds.world_idx[k]} {float(ds.centers[k, 0])!r} "
                     f"{float(ds.centers[k, 1])!r} {ds.prefixes[k, 0]} "
                     f"{ds.prefixes[k, 1]} {action} {ds.bins[k]}\n")


def load_decision_set(path, worlds):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != DATASET_FORMAT_TAG:
        raise DataError(f"missing '{DATASET_FORMAT_TAG}' header",
                        path=path, line=1)
    try:
        n, d, n_bins = (int(t) for t in lines[1].split())
    except (IndexError, ValueError):
        raise DataError("bad dataset size line", path=path, line=2)
    ds = DecisionDataset(worlds, d, n_bins)
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        parts = line.split()
        if len(parts) != 7 or parts[5] not in (WALK, STOP):
            raise DataError(f"bad record {line!r}", path=path, line=lineno)
        try:
            rows.append((int(parts[0]), float(parts[1]), float(parts[2]),
                         int(parts[3]), int(parts[4]),
                         0 if parts[5] == WALK else 1, int(parts[6])))
        except ValueError:
            raise DataError(f"bad record {line!r}", path=path, line=lineno)
    if len(rows) != n:
        raise DataError(f"expected {n} records, found {len(rows)}", path=path)
    for r in rows:
        if not 0 <= r[0] < len(worlds):
            raise DataError(f"world index {r[0]} out of range", path=path)
    ds._bulk([r[0] for r in rows], [(r[1], r[2]) for r in rows],
             [(r[3], r[4]) for r in rows], [r[5] for r in rows],
             [r[6] for r in rows])
    return ds
