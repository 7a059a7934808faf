"""Tests for the RBM core against brute-force oracles."""

import itertools
import math

import numpy as np
import pytest

from roadnet.errors import CapacityError, DataError, DimensionError
from roadnet.rbm import (
    RbmParams,
    all_binary_vectors,
    cd_update,
    energy,
    hidden_conditional,
    init_rbm,
    joint_prob_exact,
    load_params,
    log_partition_exact,
    partition_exact,
    reconstruction_error,
    save_params,
    visible_conditional,
    visible_marginal_exact,
)


def brute_energy(params, v, h):
    """Independent oracle: term-by-term triple sum in pure Python."""
    e = 0.0
    for i in range(params.n_visible):
        e -= params.b[i] * v[i]
    for j in range(params.n_hidden):
        e -= params.c[j] * h[j]
    for i in range(params.n_visible):
        for j in range(params.n_hidden):
            e -= v[i] * params.W[i, j] * h[j]
    return e


def brute_partition(params):
    """Independent oracle: explicit double enumeration."""
    z = 0.0
    for v in itertools.product((0.0, 1.0), repeat=params.n_visible):
        for h in itertools.product((0.0, 1.0), repeat=params.n_hidden):
            z += math.exp(-brute_energy(params, v, h))
    return z


def random_params(rng, n_vis, n_hid, scale=1.0):
    return RbmParams(rng.normal(0, scale, n_vis),
                     rng.normal(0, scale, n_hid),
                     rng.normal(0, scale, (n_vis, n_hid)))


class TestEnergy:
    def test_zero_params_zero_energy(self):
        p = RbmParams(np.zeros(3), np.zeros(2), np.zeros((3, 2)))
        assert energy(p, [1, 0, 1], [1, 1]) == 0.0

    def test_worked_example(self):
        # b=(1,-1), c=(0.5), W=((2),(-1)), v=(1,0), h=(1):
        # E = -(1) - (0.5) - (2) = -3.5
        p = RbmParams([1.0, -1.0], [0.5], [[2.0], [-1.0]])
        assert energy(p, [1, 0], [1]) == pytest.approx(-3.5, abs=1e-15)

    def test_negating_params_negates_energy(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            p = random_params(rng, 3, 4)
            neg = RbmParams(-p.b, -p.c, -p.W)
            v = rng.integers(0, 2, 3).astype(float)
            h = rng.integers(0, 2, 4).astype(float)
            assert energy(neg, v, h) == pytest.approx(-energy(p, v, h), abs=1e-12)

    def test_matches_brute_force_1000_draws(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            n_vis = int(rng.integers(1, 5))
            n_hid = int(rng.integers(1, 5))
            p = random_params(rng, n_vis, n_hid)
            v = rng.integers(0, 2, n_vis).astype(float)
            h = rng.integers(0, 2, n_hid).astype(float)
            assert abs(energy(p, v, h) - brute_energy(p, v, h)) < 1e-12

    def test_dimension_mismatch(self):
        p = RbmParams(np.zeros(3), np.zeros(2), np.zeros((3, 2)))
        with pytest.raises(DimensionError):
            energy(p, [1, 0], [1, 1])
        with pytest.raises(DimensionError):
            energy(p, [1, 0, 1], [1])


class TestPartition:
    def test_free_params_count_configs(self):
        p = RbmParams(np.zeros(1), np.zeros(1), np.zeros((1, 1)))
        assert partition_exact(p) == pytest.approx(4.0, abs=1e-12)
        p = RbmParams(np.zeros(2), np.zeros(1), np.zeros((2, 1)))
        assert partition_exact(p) == pytest.approx(8.0, abs=1e-12)

    def test_matches_double_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            p = random_params(rng, 3, 3)
            assert partition_exact(p) == pytest.approx(brute_partition(p), rel=1e-10)

    def test_enumeration_bound(self):
        p = init_rbm(16, 8, seed=0)
        with pytest.raises(CapacityError):
            partition_exact(p)

    def test_joint_probs_sum_to_one(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            p = random_params(rng, 3, 2)
            total = 0.0
            for v in itertools.product((0.0, 1.0), repeat=3):
                for h in itertools.product((0.0, 1.0), repeat=2):
                    total += joint_prob_exact(p, np.array(v), np.array(h))
            assert abs(total - 1.0) < 1e-9


class TestJointProb:
    def test_uniform_when_params_zero(self):
        p = RbmParams(np.zeros(1), np.zeros(1), np.zeros((1, 1)))
        for v, h in itertools.product((0.0, 1.0), repeat=2):
            assert joint_prob_exact(p, [v], [h]) == pytest.approx(0.25, abs=1e-12)

    def test_raising_bias_raises_marginal(self):
        rng = np.random.default_rng(9)
        p = random_params(rng, 3, 2)
        V = all_binary_vectors(3)
        on = V[:, 0] == 1.0

        def marginal_v1(params):
            return visible_marginal_exact(params)[on].sum()

        boosted = RbmParams(p.b + np.array([2.0, 0, 0]), p.c, p.W)
        assert marginal_v1(boosted) > marginal_v1(p)

    def test_marginal_matches_brute_force(self):
        rng = np.random.default_rng(13)
        p = random_params(rng, 3, 2)
        marg = visible_marginal_exact(p)
        z = brute_partition(p)
        for idx, v in enumerate(itertools.product((0.0, 1.0), repeat=3)):
            pv = sum(math.exp(-brute_energy(p, v, h))
                     for h in itertools.product((0.0, 1.0), repeat=2)) / z
            assert marg[idx] == pytest.approx(pv, rel=1e-10)


class TestConditionals:
    def test_zero_params_half(self):
        p = RbmParams(np.zeros(2), np.zeros(3), np.zeros((2, 3)))
        np.testing.assert_allclose(hidden_conditional(p, [1, 0]), 0.5)
        np.testing.assert_allclose(visible_conditional(p, [1, 0, 1]), 0.5)

    def test_large_bias_monotone_to_one(self):
        vals = []
        for c in (0.0, 2.0, 5.0, 10.0, 25.0):
            p = RbmParams(np.zeros(1), np.array([c]), np.zeros((1, 1)))
            vals.append(hidden_conditional(p, [0.0])[0])
        assert all(a < b for a, b in zip(vals, vals[1:]))
        assert vals[-1] > 1 - 1e-10

    def test_scalar_sigmoid_value(self):
        p = RbmParams(np.zeros(1), np.zeros(1), np.array([[2.0]]))
        expected = 1.0 / (1.0 + math.exp(-2.0))
        assert hidden_conditional(p, [1.0])[0] == pytest.approx(expected, abs=1e-12)
        q = RbmParams(np.zeros(1), np.zeros(1), np.array([[2.0]]))
        assert visible_conditional(q, [1.0])[0] == pytest.approx(expected, abs=1e-12)

    def test_outputs_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(17)
        for scale in (0.1, 10.0, 1e6):
            p = random_params(rng, 4, 3, scale=scale)
            v = rng.integers(0, 2, 4).astype(float)
            h = rng.integers(0, 2, 3).astype(float)
            ph = hidden_conditional(p, v)
            pv = visible_conditional(p, h)
            assert np.all(ph > 0) and np.all(ph < 1)
            assert np.all(pv > 0) and np.all(pv < 1)


def empirical_kl(params, patterns):
    """KL(data || model) with the empirical distribution over patterns."""
    marg = visible_marginal_exact(params)
    V = all_binary_vectors(params.n_visible)
    kl = 0.0
    uniq, counts = np.unique(np.asarray(patterns), axis=0, return_counts=True)
    for pat, cnt in zip(uniq, counts):
        p_hat = cnt / len(patterns)
        idx = int(np.where((V == pat).all(axis=1))[0][0])
        kl += p_hat * math.log(p_hat / marg[idx])
    return kl


class TestCdUpdate:
    def test_zero_lr_is_identity(self):
        p = init_rbm(4, 3, seed=2, scale=0.5)
        batch = np.array([[1, 0, 1, 0], [0, 1, 0, 1]], dtype=float)
        q = cd_update(p, batch, k=1, lr=0.0, rng_seed=0)
        assert np.array_equal(p.b, q.b)
        assert np.array_equal(p.c, q.c)
        assert np.array_equal(p.W, q.W)

    def test_fixed_seed_is_deterministic(self):
        p = init_rbm(4, 3, seed=2)
        batch = np.array([[1, 0, 1, 0], [0, 1, 0, 1]], dtype=float)
        q1 = cd_update(p, batch, k=2, lr=0.1, rng_seed=42)
        q2 = cd_update(p, batch, k=2, lr=0.1, rng_seed=42)
        assert np.array_equal(q1.W, q2.W)
        assert np.array_equal(q1.b, q2.b)
        assert np.array_equal(q1.c, q2.c)

    def test_empty_batch_rejected(self):
        p = init_rbm(4, 3, seed=2)
        with pytest.raises(ValueError):
            cd_update(p, np.zeros((0, 4)), k=1, lr=0.1, rng_seed=0)

    def test_training_reduces_exact_kl(self):
        patterns = np.array([[1, 1, 0, 0], [0, 0, 1, 1]], dtype=float)
        params = init_rbm(4, 3, seed=0)
        kl_before = empirical_kl(params, patterns)
        for epoch in range(500):
            params = cd_update(params, patterns, k=1, lr=0.1, rng_seed=epoch)
        kl_after = empirical_kl(params, patterns)
        assert kl_after < kl_before


class TestReconstructionError:
    def test_memorized_patterns_near_zero(self):
        # Saturated detector pair: h1 codes (1,0), h2 codes (0,1).
        p = RbmParams([-15.0, -15.0], [-15.0, -15.0],
                      [[30.0, -30.0], [-30.0, 30.0]])
        batch = np.array([[1, 0], [0, 1]], dtype=float)
        assert reconstruction_error(p, batch) < 0.01

    def test_fixed_point_is_exact_zero(self):
        p = RbmParams(np.zeros(3), np.zeros(2), np.zeros((3, 2)))
        batch = np.full((4, 3), 0.5)
        assert reconstruction_error(p, batch) == 0.0

    def test_empty_batch_rejected(self):
        p = init_rbm(3, 2, seed=0)
        with pytest.raises(ValueError):
            reconstruction_error(p, np.zeros((0, 3)))


class TestCheckpoint:
    def test_round_trip_is_lossless(self, tmp_path):
        rng = np.random.default_rng(23)
        p = random_params(rng, 5, 4)
        # Include extreme but finite magnitudes.
        p.W[0, 0] = 1e-300
        p.W[1, 1] = -1.2345678901234567e300
        p.b[0] = 3.141592653589793
        path = tmp_path / "rbm.txt"
        save_params(p, path)
        q = load_params(path)
        assert np.array_equal(p.b, q.b)
        assert np.array_equal(p.c, q.c)
        assert np.array_equal(p.W, q.W)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("NOTAFILE\n1 1\n0\n0\n0\n")
        with pytest.raises(DataError):
            load_params(path)

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "trunc.txt"
        path.write_text("RBMPARAMS 1\n3 2\n0.0 0.0 0.0\n")
        with pytest.raises(DataError):
            load_params(path)


def test_log_partition_consistent_with_partition():
    rng = np.random.default_rng(29)
    p = random_params(rng, 4, 4, scale=0.5)
    assert math.log(partition_exact(p)) == pytest.approx(
        log_partition_exact(p), abs=1e-10)
