"""Binary restricted Boltzmann machine: energy, exact probabilities for
tiny models, Gibbs sampling, and contrastive-divergence updates.

Parameters follow the usual triple (b, c, W): visible biases, hidden
biases, and an I x J weight matrix.  Visible and hidden units are binary;
real-valued inputs in [0, 1] are treated as Bernoulli activation
probabilities when a chain needs a binary sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DataError, DimensionError

# Exact enumeration is limited to 2^22 joint configurations so the
# brute-force oracles stay sub-second.
ENUM_MAX_UNITS = 22

# Logits are clamped before exponentiation; the sigmoid error introduced
# at +-30 is below 1e-13.
LOGIT_CLAMP = 30.0

PARAMS_FORMAT_TAG = "RBMPARAMS 1"


def sigmoid(z):
    """Logistic function with clamped logits, elementwise."""
    z = np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class RbmParams:
    """Parameter triple of one RBM: b (I,), c (J,), W (I, J)."""

    b: np.ndarray
    c: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.b.ndim != 1 or self.c.ndim != 1 or self.W.ndim != 2:
            raise DimensionError("b and c must be vectors, W a matrix")
        if self.W.shape != (self.b.size, self.c.size):
            raise DimensionError(
                f"W shape {self.W.shape} does not match |b|={self.b.size}, |c|={self.c.size}"
            )
        if not (np.isfinite(self.b).all() and np.isfinite(self.c).all()
                and np.isfinite(self.W).all()):
            raise ValueError("RBM parameters must be finite")

    @property
    def n_visible(self) -> int:
        return self.b.size

    @property
    def n_hidden(self) -> int:
        return self.c.size

    def copy(self) -> "RbmParams":
        return RbmParams(self.b.copy(), self.c.copy(), self.W.copy())


def init_rbm(n_visible: int, n_hidden: int, seed: int, scale: float = 0.01) -> RbmParams:
    """Fresh RBM: zero biases, weights uniform in [-scale, scale]."""
    rng = np.random.default_rng(seed)
    W = rng.uniform(-scale, scale, size=(n_visible, n_hidden))
    return RbmParams(np.zeros(n_visible), np.zeros(n_hidden), W)


def _check_vector(x, n, name) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != n:
        raise DimensionError(f"{name} has length {x.shape[-1]}, expected {n}")
    return x


def energy(params: RbmParams, v, h) -> float:
    """E(v, h) = -b.v - c.h - v W h for one configuration."""
    v = _check_vector(v, params.n_visible, "v")
    h = _check_vector(h, params.n_hidden, "h")
    return float(-params.b @ v - params.c @ h - v @ params.W @ h)


def all_binary_vectors(n: int) -> np.ndarray:
    """All 2^n binary vectors of length n, row k = binary digits of k."""
    ks = np.arange(2 ** n, dtype=np.uint32)
    bits = (ks[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return bits.astype(np.float64)


def _check_enum_bound(params: RbmParams):
    total = params.n_visible + params.n_hidden
    if total > ENUM_MAX_UNITS:
        raise CapacityError(
            f"I+J={total} exceeds the exact-enumeration bound {ENUM_MAX_UNITS}"
        )


def _energy_table(params: RbmParams) -> np.ndarray:
    """Energies for every (v, h) pair; rows index v, columns index h."""
    V = all_binary_vectors(params.n_visible)
    H = all_binary_vectors(params.n_hidden)
    return (-(V @ params.b)[:, None] - (H @ params.c)[None, :]
            - V @ params.W @ H.T)


def log_partition_exact(params: RbmParams) -> float:
    """log Z by enumerating all joint configurations (stable via max-shift)."""
    _check_enum_bound(params)
    neg_e = -_energy_table(params)
    m = neg_e.max()
    return float(m + np.log(np.exp(neg_e - m).sum()))


def partition_exact(params: RbmParams) -> float:
    """Z = sum over all 2^(I+J) configurations of exp(-E(v, h))."""
    return float(np.exp(log_partition_exact(params)))


def joint_prob_exact(params: RbmParams, v, h) -> float:
    """p(v, h) = exp(-E(v, h)) / Z, by exact enumeration of Z."""
    log_z = log_partition_exact(params)
    return float(np.exp(-energy(params, v, h) - log_z))


def visible_marginal_exact(params: RbmParams) -> np.ndarray:
    """p(v) for every visible configuration, ordered like all_binary_vectors."""
    _check_enum_bound(params)
    neg_e = -_energy_table(params)
    m = neg_e.max()
    w = np.exp(neg_e - m)
    return w.sum(axis=1) / w.sum()


def hidden_conditional(params: RbmParams, v) -> np.ndarray:
    """p(h_j = 1 | v) = sigmoid(c_j + sum_i v_i W_ij); supports batched v."""
    v = _check_vector(v, params.n_visible, "v")
    return sigmoid(v @ params.W + params.c)


def visible_conditional(params: RbmParams, h) -> np.ndarray:
    """p(v_i = 1 | h) = sigmoid(b_i + sum_j W_ij h_j); supports batched h."""
    h = _check_vector(h, params.n_hidden, "h")
    return sigmoid(h @ params.W.T + params.b)


def _as_batch(batch) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ValueError("batch must be a non-empty (N, I) array")
    if batch.min() < 0.0 or batch.max() > 1.0:
        raise ValueError("batch values must lie in [0, 1]")
    return batch


def _bernoulli(p, rng) -> np.ndarray:
    return (rng.random(p.shape) < p).astype(np.float64)


def cd_update(params: RbmParams, batch, k: int = 1, lr: float = 0.1,
              rng_seed: int = 0) -> RbmParams:
    """One contrastive-divergence (CD-k) parameter update over a batch.

    Positive phase uses the data (real-valued rows are sampled as
    Bernoulli probabilities); negative phase runs k Gibbs steps.
    Deterministic for a fixed seed.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if lr < 0:
        raise ValueError("lr must be >= 0")
    batch = _as_batch(batch)
    if batch.shape[1] != params.n_visible:
        raise DimensionError(
            f"batch width {batch.shape[1]} != I={params.n_visible}")
    rng = np.random.default_rng(rng_seed)

    v0 = batch
    if not np.isin(batch, (0.0, 1.0)).all():
        v0 = _bernoulli(batch, rng)
    ph0 = hidden_conditional(params, v0)
    h = _bernoulli(ph0, rng)
    for step in range(k):
        pv = visible_conditional(params, h)
        vk = _bernoulli(pv, rng)
        phk = hidden_conditional(params, vk)
        if step < k - 1:
            h = _bernoulli(phk, rng)

    n = v0.shape[0]
    grad_W = (v0.T @ ph0 - vk.T @ phk) / n
    grad_b = (v0 - vk).mean(axis=0)
    grad_c = (ph0 - phk).mean(axis=0)
    return RbmParams(params.b + lr * grad_b,
                     params.c + lr * grad_c,
                     params.W + lr * grad_W)


def reconstruction_error(params: RbmParams, batch) -> float:
    """Mean squared difference between the batch and its one-step
    mean-field reconstruction."""
    batch = _as_batch(batch)
    if batch.shape[1] != params.n_visible:
        raise DimensionError(
            f"batch width {batch.shape[1]} != I={params.n_visible}")
    recon = visible_conditional(params, hidden_conditional(params, batch))
    return float(np.mean((batch - recon) ** 2))


def format_floats(values) -> str:
    """Space-separated shortest round-trip decimal forms."""
    return " ".join(repr(float(x)) for x in np.asarray(values).ravel())


def save_params(params: RbmParams, path):
    """Write a lossless text checkpoint (RBMPARAMS 1 format)."""
    with open(path, "w") as fh:
        fh.write(f"{PARAMS_FORMAT_TAG}\n")
        fh.write(f"{params.n_visible} {params.n_hidden}\n")
        fh.write(format_floats(params.b) + "\n")
        fh.write(format_floats(params.c) + "\n")
        for row in params.W:
            fh.write(format_floats(row) + "\n")


def _parse_floats(line, count, path, lineno) -> np.ndarray:
    parts = line.split()
    if len(parts) != count:
        raise DataError(f"expected {count} values, got {len(parts)}",
                        path=path, line=lineno)
    try:
        return np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"bad float: {exc}", path=path, line=lineno)


def load_params(path) -> RbmParams:
    """Read a checkpoint written by save_params."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != PARAMS_FORMAT_TAG:
        raise DataError(f"missing '{PARAMS_FORMAT_TAG}' header", path=path, line=1)
    try:
        n_vis, n_hid = (int(t) for t in lines[1].split())
    except (IndexError, ValueError):
        raise DataError("bad dimension line", path=path, line=2)
    if len(lines) < 4 + n_vis:
        raise DataError("truncated checkpoint", path=path, line=len(lines))
    b = _parse_floats(lines[2], n_vis, path, 3)
    c = _parse_floats(lines[3], n_hid, path, 4)
    W = np.empty((n_vis, n_hid))
    for i in range(n_vis):
        W[i] = _parse_floats(lines[4 + i], n_hid, path, 5 + i)
    return RbmParams(b, c, W)
