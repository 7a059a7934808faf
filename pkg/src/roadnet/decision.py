"""Walk/stop decision model.

Encodes a map window plus the graph drawn around the current position
into a d*d*4 input, runs it through the layer stack, and reads a head
with two action logits (softmax) and one sigmoid unit per angle bin.
Training updates the head and, unless frozen, the stack below it.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .adaptive import DbnStack, HeadParams, dbn_forward
from .errors import ConfigError, DataError, DimensionError
from .graph import RoadGraph
from .raster import crop_window, draw_segment, window_origin
from .rbm import sigmoid

ALLOWED_WINDOW_SIZES = (8, 16, 32, 64, 128)
GRAPH_CHANNEL_WIDTH = 3.0

WALK = "walk"
STOP = "stop"


@dataclass
class DecisionInput:
    """One model input: RGB window and rasterized-graph channel."""

    window: np.ndarray        # (d, d, 3) in [0, 1]
    graph_channel: np.ndarray  # (d, d) in [0, 1]

    def __post_init__(self):
        self.window = np.asarray(self.window, dtype=np.float64)
        self.graph_channel = np.asarray(self.graph_channel, dtype=np.float64)
        d = self.graph_channel.shape[0]
        if self.window.shape != (d, d, 3) or self.graph_channel.shape != (d, d):
            raise DimensionError(
                f"window {self.window.shape} does not pair with "
                f"graph channel {self.graph_channel.shape}")

    @property
    def d(self):
        return self.graph_channel.shape[0]

    def flatten(self):
        """Stack window and graph channel into a length d*d*4 vector."""
        d = self.d
        out = np.empty(d * d * 4)
        out[:d * d * 3] = self.window.ravel()
        out[d * d * 3:] = self.graph_channel.ravel()
        return out


@dataclass
class DecisionOutput:
    o_action: np.ndarray  # (o_walk, o_stop), sums to 1
    o_angle: np.ndarray   # one sigmoid activation per bin

    @property
    def o_walk(self):
        return float(self.o_action[0])

    @property
    def o_stop(self):
        return float(self.o_action[1])

    @property
    def n_bins(self):
        return len(self.o_angle)


@dataclass
class DecisionLabel:
    action: str
    angle_bin: int = -1

    def __post_init__(self):
        if self.action not in (WALK, STOP):
            raise ValueError(f"unknown action {self.action!r}")
        if self.action == WALK and self.angle_bin < 0:
            raise ValueError("walk label needs an angle bin")


def bin_center(i, n_bins):
    """Angle of bin i's center, counterclockwise from +x."""
    return 2.0 * math.pi * (i + 0.5) / n_bins


def angle_to_bin(alpha, n_bins):
    """Index of the bin containing alpha (wrapped into [0, 2pi))."""
    frac = (alpha / (2.0 * math.pi)) % 1.0
    return min(int(frac * n_bins), n_bins - 1)


def encode_input(image, graph: RoadGraph, center, d) -> DecisionInput:
    if d not in ALLOWED_WINDOW_SIZES:
        raise ConfigError(
            f"window size {d} not in {ALLOWED_WINDOW_SIZES}")
    window = crop_window(image, center, d)
    ox, oy = window_origin(center, d)
    channel = np.zeros((d, d))
    if graph.n_vertices:
        pos = graph.positions()
        for i, j in graph.edges:
            a = pos[i]
            b = pos[j]
            lo_x = min(a[0], b[0]) - GRAPH_CHANNEL_WIDTH
            hi_x = max(a[0], b[0]) + GRAPH_CHANNEL_WIDTH
            lo_y = min(a[1], b[1]) - GRAPH_CHANNEL_WIDTH
            hi_y = max(a[1], b[1]) + GRAPH_CHANNEL_WIDTH
            if hi_x < ox or lo_x > ox + d - 1 or hi_y < oy or lo_y > oy + d - 1:
                continue
            draw_segment(channel, (a[0] - ox, a[1] - oy),
                         (b[0] - ox, b[1] - oy),
                         GRAPH_CHANNEL_WIDTH, 1.0)
    return DecisionInput(window, channel)


def head_logits(head: HeadParams, top: np.ndarray) -> np.ndarray:
    return head.b + top @ head.W


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def infer_decision(stack: DbnStack, inp: DecisionInput) -> DecisionOutput:
    if stack.head is None:
        raise ConfigError("stack has no decision head")
    top = dbn_forward(stack, inp.flatten())[-1]
    z = head_logits(stack.head, top)
    na = stack.head.n_action
    return DecisionOutput(softmax(z[:na]), sigmoid(z[na:]))


def select_action(out: DecisionOutput, walk_threshold):
    """Resolve an output to (action, angle); walk iff o_walk exceeds
    the threshold strictly. Angle is the argmax bin's center, first
    index winning ties; None when stopping."""
    if not 0.0 < walk_threshold < 1.0:
        raise ConfigError(f"walk threshold {walk_threshold} not in (0, 1)")
    if out.o_walk > walk_threshold:
        i = int(np.argmax(out.o_angle))
        return WALK, bin_center(i, out.n_bins)
    return STOP, None


def decision_fn(stack: DbnStack, d, walk_threshold):
    """Close a trained stack over the search protocol: the returned
    callable maps (graph, position, image) to (action, angle)."""
    if not 0.0 < walk_threshold < 1.0:
        raise ConfigError(f"walk threshold {walk_threshold} not in (0, 1)")

    def decide(graph, position, image):
        inp = encode_input(image, graph, position, d)
        return select_action(infer_decision(stack, inp), walk_threshold)

    return decide


@dataclass
class TrainSchedule:
    epochs: int = 10
    lr: float = 1.0
    momentum: float = 0.9
    batch_size: int = 64
    seed: int = 0
    freeze_lower: bool = False
    scale_by_fan_in: bool = True
    log_every: int = 0
    log: list = field(default_factory=list)


class _ListBatcher:
    """Adapts a list of (DecisionInput, DecisionLabel) pairs to the
    batch interface a dataset object provides natively."""

    def __init__(self, pairs):
        if not pairs:
            raise ValueError("empty dataset")
        self.x = np.stack([p.flatten() for p, _ in pairs])
        self.actions = np.array(
            [0 if lab.action == WALK else 1 for _, lab in pairs], dtype=np.int64)
        self.bins = np.array([lab.angle_bin for _, lab in pairs], dtype=np.int64)

    def __len__(self):
        return len(self.x)

    def encode_batch(self, idx):
        return self.x[idx], self.actions[idx], self.bins[idx]


def _as_batcher(dataset):
    if hasattr(dataset, "encode_batch"):
        if len(dataset) == 0:
            raise ValueError("empty dataset")
        return dataset
    return _ListBatcher(list(dataset))


def init_head(stack: DbnStack, n_angle, seed, scale=0.01, n_action=2):
    """Attach a fresh head sized to the stack's top layer."""
    rng = np.random.default_rng(seed)
    j = stack.rbms[-1].n_hidden
    w = rng.uniform(-scale, scale, size=(j, n_action + n_angle))
    stack.head = HeadParams(w, np.zeros(n_action + n_angle), n_action=n_action)
    return stack


def _forward_batch(stack, x):
    """Layer activations for a batch; acts[0] is the input matrix."""
    acts = [x]
    for p in stack.rbms:
        acts.append(sigmoid(p.c + acts[-1] @ p.W))
    return acts


def decision_loss(stack: DbnStack, x, actions, bins):
    """Mean loss: action cross-entropy plus per-bin angle binary
    cross-entropy, the latter only on walk rows."""
    acts = _forward_batch(stack, x)
    head = stack.head
    z = head.b + acts[-1] @ head.W
    na = head.n_action
    pa = softmax(z[:, :na])
    qa = sigmoid(z[:, na:])
    eps = 1e-12
    n = len(x)
    ce = -np.log(pa[np.arange(n), actions] + eps)
    walk_rows = actions == 0
    bce = np.zeros(n)
    if walk_rows.any():
        t = np.zeros((walk_rows.sum(), head.n_angle))
        t[np.arange(len(t)), bins[walk_rows]] = 1.0
        q = qa[walk_rows]
        bce[walk_rows] = -(t * np.log(q + eps)
                           + (1 - t) * np.log(1 - q + eps)).sum(axis=1)
    return float((ce + bce).mean())


def train_head(stack: DbnStack, dataset, schedule: TrainSchedule) -> DbnStack:
    """Fine-tune the head (and lower layers unless frozen) on labeled
    decisions with momentum SGD.  Returns a new stack."""
    batcher = _as_batcher(dataset)
    n = len(batcher)
    stack = stack.copy()
    if stack.head is None:
        raise ConfigError("attach a head before training")
    head = stack.head
    na = head.n_action
    vel_w = [np.zeros_like(p.W) for p in stack.rbms]
    vel_c = [np.zeros_like(p.c) for p in stack.rbms]
    vel_hw = np.zeros_like(head.W)
    vel_hb = np.zeros_like(head.b)
    # a layer's step size in activation space grows with its input
    # dimension, so divide the shared rate by fan-in per layer
    if schedule.scale_by_fan_in:
        layer_lr = [schedule.lr / p.n_visible for p in stack.rbms]
        head_lr = schedule.lr / head.W.shape[0]
    else:
        layer_lr = [schedule.lr] * len(stack.rbms)
        head_lr = schedule.lr
    rng = np.random.default_rng(schedule.seed)
    for epoch in range(schedule.epochs):
        perm = rng.permutation(n)
        for s in range(0, n, schedule.batch_size):
            idx = perm[s:s + schedule.batch_size]
            x, actions, bins = batcher.encode_batch(idx)
            m = len(x)
            acts = _forward_batch(stack, x)
            z = head.b + acts[-1] @ head.W
            pa = softmax(z[:, :na])
            qa = sigmoid(z[:, na:])

            dz = np.empty_like(z)
            dz[:, :na] = pa
            dz[np.arange(m), actions] -= 1.0
            walk_rows = actions == 0
            targets = np.zeros((m, head.n_angle))
            targets[walk_rows, bins[walk_rows]] = 1.0
            dz[:, na:] = np.where(walk_rows[:, None], qa - targets, 0.0)
            dz /= m

            g_hw = acts[-1].T @ dz
            g_hb = dz.sum(axis=0)
            delta = dz @ head.W.T
            grads = []
            for li in range(len(stack.rbms) - 1, -1, -1):
                a = acts[li + 1]
                delta = delta * a * (1.0 - a)
                grads.append((acts[li].T @ delta, delta.sum(axis=0)))
                if li > 0:
                    delta = delta @ stack.rbms[li].W.T
            grads.reverse()

            vel_hw = schedule.momentum * vel_hw - head_lr * g_hw
            vel_hb = schedule.momentum * vel_hb - head_lr * g_hb
            head.W += vel_hw
            head.b += vel_hb
            if not schedule.freeze_lower:
                for li, (gw, gc) in enumerate(grads):
                    vel_w[li] = schedule.momentum * vel_w[li] - layer_lr[li] * gw
                    vel_c[li] = schedule.momentum * vel_c[li] - layer_lr[li] * gc
                    stack.rbms[li].W += vel_w[li]
                    stack.rbms[li].c += vel_c[li]
        if schedule.log_every and (epoch + 1) % schedule.log_every == 0:
            idx = np.arange(min(n, 2048))
            x, actions, bins = batcher.encode_batch(idx)
            schedule.log.append(
                f"epoch={epoch + 1} loss={decision_loss(stack, x, actions, bins):.6f}")
    return stack


def action_accuracy(stack: DbnStack, dataset) -> float:
    """Fraction of examples whose higher-probability action matches the
    label (threshold-free)."""
    batcher = _as_batcher(dataset)
    n = len(batcher)
    hits = 0
    for s in range(0, n, 512):
        idx = np.arange(s, min(s + 512, n))
        x, actions, _ = batcher.encode_batch(idx)
        acts = _forward_batch(stack, x)
        z = stack.head.b + acts[-1] @ stack.head.W
        pred = np.argmax(z[:, :stack.head.n_action], axis=1)
        hits += int((pred == actions).sum())
    return hits / n


def validate_labels(dataset, n_bins):
    """Raise DataError on any walk label whose bin is out of range."""
    batcher = _as_batcher(dataset)
    idx = np.arange(len(batcher))
    _, actions, bins = batcher.encode_batch(idx)
    bad = (actions == 0) & ((bins < 0) | (bins >= n_bins))
    if bad.any():
        k = int(np.argmax(bad))
        raise DataError(f"angle bin {bins[k]} out of range at record {k}")
