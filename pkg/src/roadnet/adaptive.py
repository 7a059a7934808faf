"""Adaptive structure learning for stacked RBMs.

Hidden neurons are generated by copying when their parameters keep
fluctuating across epochs (measured by exponentially smoothed deltas of
bias and weight-column magnitudes), annihilated when their batch-mean
activation is pinned near 0 or 1, and a fresh RBM layer is appended when
the whole layer still shows both high fluctuation and high energy after
its training budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, DataError, DimensionError
from .rbm import (
    RbmParams,
    cd_update,
    format_floats,
    hidden_conditional,
    init_rbm,
    reconstruction_error,
)

STACK_FORMAT_TAG = "DBNSTACK 1"

GENERATION_PERTURBATION = 1e-3


@dataclass
class WdTrace:
    """Per-hidden-neuron smoothed magnitudes of successive parameter
    changes (bias delta and weight-column delta norm)."""

    dc: np.ndarray
    dW: np.ndarray
    epoch: int
    gamma: float

    @classmethod
    def zeros(cls, n_hidden: int, gamma: float) -> "WdTrace":
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        return cls(np.zeros(n_hidden), np.zeros(n_hidden), 0, gamma)

    @property
    def n_hidden(self) -> int:
        return self.dc.size

    def total(self) -> float:
        """Sum over neurons of dc_j * dW_j."""
        return float(np.sum(self.dc * self.dW))


@dataclass
class StructureThresholds:
    """Thresholds and caps steering generation, annihilation, and layer
    growth.  layer_wd=None means 0.1 * J, evaluated at check time."""

    gen: float = 0.05
    ann: float = 0.05
    layer_wd: float | None = None
    layer_energy: float = 0.0
    j_max: int = 1024
    l_max: int = 8

    def __post_init__(self):
        if self.gen <= 0 or self.ann <= 0:
            raise ValueError("generation/annihilation thresholds must be > 0")
        if self.layer_wd is not None and self.layer_wd <= 0:
            raise ValueError("layer_wd must be > 0 when given")
        if self.j_max < 1 or self.l_max < 1:
            raise ValueError("caps must be >= 1")

    def layer_wd_for(self, n_hidden: int) -> float:
        return self.layer_wd if self.layer_wd is not None else 0.1 * n_hidden


@dataclass
class HeadParams:
    """Supervised output head on top of the last hidden layer: the first
    n_action logits feed a softmax, the rest are per-bin sigmoids."""

    W: np.ndarray
    b: np.ndarray
    n_action: int = 2

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.ndim != 1 or self.W.shape[1] != self.b.size:
            raise DimensionError("head W must be (J, n_out) with matching bias")
        if self.b.size < self.n_action:
            raise DimensionError("head narrower than its action block")

    @property
    def n_out(self) -> int:
        return self.b.size

    @property
    def n_angle(self) -> int:
        return self.b.size - self.n_action

    def copy(self) -> "HeadParams":
        return HeadParams(self.W.copy(), self.b.copy(), self.n_action)


@dataclass
class DbnStack:
    """Ordered pre-trained RBMs (layer l feeds layer l+1), an optional
    supervised head, and the structure-event log."""

    rbms: list
    head: HeadParams | None = None
    log: list = field(default_factory=list)

    def __post_init__(self):
        if not self.rbms:
            raise DimensionError("a stack needs at least one RBM")
        self.validate_chaining()

    def validate_chaining(self):
        for lower, upper in zip(self.rbms, self.rbms[1:]):
            if upper.n_visible != lower.n_hidden:
                raise DimensionError(
                    f"layer chaining broken: {lower.n_hidden} -> {upper.n_visible}")
        if self.head is not None and self.head.W.shape[0] != self.rbms[-1].n_hidden:
            raise DimensionError("head does not match top hidden layer")

    @property
    def n_input(self) -> int:
        return self.rbms[0].n_visible

    def layer_sizes(self) -> list:
        """Hidden-layer sizes from the first RBM to the top."""
        return [r.n_hidden for r in self.rbms]

    def copy(self) -> "DbnStack":
        return DbnStack([r.copy() for r in self.rbms],
                        None if self.head is None else self.head.copy(),
                        list(self.log))


def update_wd(trace: WdTrace, prev: RbmParams, curr: RbmParams) -> WdTrace:
    """Fold one epoch's parameter movement into the smoothed trace."""
    if prev.n_hidden != curr.n_hidden or prev.n_visible != curr.n_visible:
        raise DimensionError("prev/curr parameter shapes differ")
    if trace.n_hidden != curr.n_hidden:
        raise DimensionError("trace length does not match J")
    g = trace.gamma
    dc = g * trace.dc + (1 - g) * np.abs(curr.c - prev.c)
    dW = g * trace.dW + (1 - g) * np.linalg.norm(curr.W - prev.W, axis=0)
    return WdTrace(dc, dW, trace.epoch + 1, g)


def check_generation(trace: WdTrace, th: StructureThresholds) -> list:
    """Neurons whose fluctuation product exceeds the generation threshold
    (empty once the neuron cap is reached)."""
    if trace.n_hidden >= th.j_max:
        return []
    score = trace.dc * trace.dW
    return [int(j) for j in np.nonzero(score > th.gen)[0]]


def generate_neuron(params: RbmParams, trace: WdTrace, j: int, rng_seed: int,
                    j_max: int | None = None) -> tuple:
    """Append a perturbed copy of hidden neuron j; its trace entries start
    at zero."""
    if not 0 <= j < params.n_hidden:
        raise IndexError(f"neuron {j} out of range")
    if j_max is not None and params.n_hidden >= j_max:
        raise CapacityError(f"neuron cap {j_max} reached")
    rng = np.random.default_rng(rng_seed)
    new_c = params.c[j] + rng.uniform(-GENERATION_PERTURBATION,
                                      GENERATION_PERTURBATION)
    new_col = params.W[:, j] + rng.uniform(-GENERATION_PERTURBATION,
                                           GENERATION_PERTURBATION,
                                           size=params.n_visible)
    out = RbmParams(params.b.copy(),
                    np.append(params.c, new_c),
                    np.hstack([params.W, new_col[:, None]]))
    new_trace = WdTrace(np.append(trace.dc, 0.0), np.append(trace.dW, 0.0),
                        trace.epoch, trace.gamma)
    return out, new_trace


def check_annihilation(params: RbmParams, batch, th: StructureThresholds) -> list:
    """Neurons whose batch-mean activation is pinned below th.ann or above
    1 - th.ann.  Never flags the whole layer."""
    acts = hidden_conditional(params, np.atleast_2d(np.asarray(batch, dtype=np.float64)))
    mean = acts.mean(axis=0)
    flagged = (mean < th.ann) | (mean > 1.0 - th.ann)
    if flagged.all() and flagged.size:
        keep = int(np.argmin(np.abs(mean - 0.5)))
        flagged[keep] = False
    return [int(j) for j in np.nonzero(flagged)[0]]


def annihilate_neuron(params: RbmParams, trace: WdTrace, j: int) -> tuple:
    """Remove hidden neuron j from the parameters and the trace."""
    if params.n_hidden < 2:
        raise DimensionError("cannot annihilate the last hidden neuron")
    if not 0 <= j < params.n_hidden:
        raise IndexError(f"neuron {j} out of range")
    out = RbmParams(params.b.copy(),
                    np.delete(params.c, j),
                    np.delete(params.W, j, axis=1))
    new_trace = WdTrace(np.delete(trace.dc, j), np.delete(trace.dW, j),
                        trace.epoch, trace.gamma)
    return out, new_trace


def dbn_forward(stack: DbnStack, v) -> list:
    """Per-layer activations: entry 0 is the input itself, entry l the
    conditional means of layer l.  Accepts a vector or an (N, I) batch."""
    acts = [np.asarray(v, dtype=np.float64)]
    for rbm in stack.rbms:
        acts.append(hidden_conditional(rbm, acts[-1]))
    return acts


def top_input(stack: DbnStack, batch) -> np.ndarray:
    """Activations feeding the top RBM (the input itself for a 1-layer
    stack)."""
    acts = np.asarray(batch, dtype=np.float64)
    for rbm in stack.rbms[:-1]:
        acts = hidden_conditional(rbm, acts)
    return acts


def mean_top_energy(stack: DbnStack, batch) -> float:
    """Mean energy of the batch under the top RBM with hidden units at
    their conditional means."""
    v = np.atleast_2d(top_input(stack, batch))
    top = stack.rbms[-1]
    hbar = hidden_conditional(top, v)
    e = -(v @ top.b) - (hbar @ top.c) - np.einsum("ni,ij,nj->n", v, top.W, hbar)
    return float(e.mean())


def check_layer_generation(stack: DbnStack, trace: WdTrace, batch,
                           th: StructureThresholds) -> bool:
    """True when total fluctuation and mean top-layer energy both exceed
    their thresholds and the layer cap allows another RBM."""
    if len(stack.rbms) >= th.l_max:
        return False
    if trace.total() <= th.layer_wd_for(trace.n_hidden):
        return False
    return mean_top_energy(stack, batch) > th.layer_energy


def push_layer(stack: DbnStack, n_hidden_new: int, rng_seed: int,
               init_scale: float = 0.01) -> DbnStack:
    """Append a freshly initialized RBM on top.  Any supervised head is
    dropped because its input layer changes."""
    if n_hidden_new < 1:
        raise ValueError("new layer size must be >= 1")
    top = stack.rbms[-1]
    new = init_rbm(top.n_hidden, n_hidden_new, seed=rng_seed, scale=init_scale)
    return DbnStack(stack.rbms + [new], None, list(stack.log))


@dataclass
class PretrainSchedule:
    """Timing, step sizes, and seeding for adaptive greedy pretraining."""

    initial_hidden: int
    epochs_per_layer: int
    lr: float = 0.1
    cd_k: int = 1
    gamma: float = 0.9
    batch_size: int = 64
    seed: int = 0
    new_layer_size: int | None = None
    init_scale: float = 0.01
    annihilation_sample: int = 512
    # called after each epoch with (epoch, layer, recon_error, wd_total);
    # purely observational, never touches the RNG streams
    progress: object = None


def _event(epoch, kind, j, n_hidden, n_layers):
    jtxt = "-" if j is None else str(j)
    return f"epoch={epoch} event={kind} j={jtxt} J={n_hidden} L={n_layers}"


def pretrain_adaptive(data, th: StructureThresholds,
                      schedule: PretrainSchedule) -> DbnStack:
    """Greedy layer-wise pretraining with structure adaptation.

    Each layer trains for schedule.epochs_per_layer epochs of CD; after
    every epoch the fluctuation trace is updated and neuron generation
    then annihilation are applied.  When a layer's budget ends, the layer
    generation criterion decides whether to stack another RBM (which then
    trains on this layer's activations) or stop.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("pretraining data must be a non-empty (N, I) array")
    shuffle_rng = np.random.default_rng(schedule.seed)
    seed_rng = np.random.default_rng(schedule.seed + 1)

    def next_seed():
        return int(seed_rng.integers(0, 2 ** 63 - 1))

    stack = DbnStack([init_rbm(data.shape[1], schedule.initial_hidden,
                               seed=next_seed(), scale=schedule.init_scale)])
    log = []
    layer_input = data
    global_epoch = 0

    while True:
        params = stack.rbms[-1]
        trace = WdTrace.zeros(params.n_hidden, schedule.gamma)
        n = layer_input.shape[0]
        diag = layer_input[:min(n, schedule.annihilation_sample)]
        for _ in range(schedule.epochs_per_layer):
            global_epoch += 1
            prev = params
            order = shuffle_rng.permutation(n)
            for lo in range(0, n, schedule.batch_size):
                batch = layer_input[order[lo:lo + schedule.batch_size]]
                params = cd_update(params, batch, k=schedule.cd_k,
                                   lr=schedule.lr, rng_seed=next_seed())
            trace = update_wd(trace, prev, params)
            for j in check_generation(trace, th):
                if params.n_hidden >= th.j_max:
                    break
                params, trace = generate_neuron(params, trace, j, next_seed(),
                                                j_max=th.j_max)
                log.append(_event(global_epoch, "gen", j, params.n_hidden,
                                  len(stack.rbms)))
            for j in sorted(check_annihilation(params, diag, th), reverse=True):
                if params.n_hidden < 2:
                    break
                params, trace = annihilate_neuron(params, trace, j)
                log.append(_event(global_epoch, "ann", j, params.n_hidden,
                                  len(stack.rbms)))
            stack.rbms[-1] = params
            stack.validate_chaining()
            if schedule.progress is not None:
                schedule.progress(global_epoch, len(stack.rbms),
                                  reconstruction_error(params, diag),
                                  trace.total())
        if check_layer_generation(stack, trace, data, th):
            size = schedule.new_layer_size or params.n_hidden
            stack = push_layer(stack, size, next_seed(),
                               init_scale=schedule.init_scale)
            log.append(_event(global_epoch, "layer", None,
                              size, len(stack.rbms)))
            layer_input = hidden_conditional(stack.rbms[-2], layer_input)
        else:
            break

    stack.log = log
    return stack


def replay_structure_log(initial_sizes, log_lines) -> list:
    """Re-derive the final hidden-layer sizes from a structure log.

    Raises DataError if a logged size disagrees with the replayed state.
    """
    sizes = list(initial_sizes)
    for lineno, line in enumerate(log_lines, start=1):
        fields = dict(tok.split("=", 1) for tok in line.split())
        kind = fields.get("event")
        logged_j = int(fields["J"])
        if kind == "gen":
            sizes[-1] += 1
        elif kind == "ann":
            sizes[-1] -= 1
        elif kind == "layer":
            sizes.append(logged_j)
        else:
            raise DataError(f"unknown event {kind!r}", line=lineno)
        if sizes[-1] != logged_j:
            raise DataError(
                f"log inconsistent: replayed J={sizes[-1]}, logged J={logged_j}",
                line=lineno)
    return sizes


def format_layer_sizes(sizes) -> str:
    """Comma list in report style, e.g. '542, 502, and 474 neurons'."""
    sizes = [str(s) for s in sizes]
    if len(sizes) == 1:
        return f"{sizes[0]} neurons"
    if len(sizes) == 2:
        return f"{sizes[0]} and {sizes[1]} neurons"
    return f"{', '.join(sizes[:-1])}, and {sizes[-1]} neurons"


def save_stack(stack: DbnStack, path):
    """Write a stack checkpoint: every RBM, the head, and the log."""
    with open(path, "w") as fh:
        fh.write(f"{STACK_FORMAT_TAG}\n")
        fh.write(f"layers {len(stack.rbms)}\n")
        for rbm in stack.rbms:
            fh.write(f"rbm {rbm.n_visible} {rbm.n_hidden}\n")
            fh.write(format_floats(rbm.b) + "\n")
            fh.write(format_floats(rbm.c) + "\n")
            for row in rbm.W:
                fh.write(format_floats(row) + "\n")
        if stack.head is None:
            fh.write("head none\n")
        else:
            head = stack.head
            fh.write(f"head {head.W.shape[0]} {head.n_action} {head.n_angle}\n")
            for row in head.W:
                fh.write(format_floats(row) + "\n")
            fh.write(format_floats(head.b) + "\n")
        fh.write(f"log {len(stack.log)}\n")
        for line in stack.log:
            fh.write(line + "\n")


def _floats_line(lines, idx, count, path):
    parts = lines[idx].split()
    if len(parts) != count:
        raise DataError(f"expected {count} floats, got {len(parts)}",
                        path=path, line=idx + 1)
    return np.array([float(p) for p in parts])


def load_stack(path) -> DbnStack:
    """Read a checkpoint written by save_stack."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != STACK_FORMAT_TAG:
        raise DataError(f"missing '{STACK_FORMAT_TAG}' header", path=path, line=1)
    try:
        idx = 1
        n_layers = int(lines[idx].split()[1])
        idx += 1
        rbms = []
        for _ in range(n_layers):
            _, vis_s, hid_s = lines[idx].split()
            n_vis, n_hid = int(vis_s), int(hid_s)
            idx += 1
            b = _floats_line(lines, idx, n_vis, path)
            c = _floats_line(lines, idx + 1, n_hid, path)
            idx += 2
            W = np.empty((n_vis, n_hid))
            for i in range(n_vis):
                W[i] = _floats_line(lines, idx + i, n_hid, path)
            idx += n_vis
            rbms.append(RbmParams(b, c, W))
        head_parts = lines[idx].split()
        idx += 1
        head = None
        if head_parts[1] != "none":
            j_top, n_action, n_angle = (int(p) for p in head_parts[1:4])
            n_out = n_action + n_angle
            W = np.empty((j_top, n_out))
            for i in range(j_top):
                W[i] = _floats_line(lines, idx + i, n_out, path)
            idx += j_top
            b = _floats_line(lines, idx, n_out, path)
            idx += 1
            head = HeadParams(W, b, n_action)
        n_log = int(lines[idx].split()[1])
        log = lines[idx + 1: idx + 1 + n_log]
        if len(log) != n_log:
            raise DataError("truncated log section", path=path, line=len(lines))
    except (IndexError, ValueError) as exc:
        raise DataError(f"malformed stack checkpoint: {exc}", path=path)
    return DbnStack(rbms, head, list(log))
