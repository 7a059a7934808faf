"""Tests for procedural worlds, the labeling oracle, and the decision
dataset's lazy window encoding."""

import numpy as np
import pytest
from scipy.spatial import cKDTree

from roadnet.decision import STOP, WALK, angle_to_bin
from roadnet.errors import DataError
from roadnet.graph import RoadGraph
from roadnet.search import Rect, SearchConfig
from roadnet.world import (
    DecisionDataset,
    OracleContext,
    WorldSpec,
    component_seeds,
    generate_world,
    load_decision_set,
    load_world,
    make_training_set,
    oracle_decision,
    save_decision_set,
    save_world,
    trace_world,
)

D = 12.0


def small_spec(seed=0, **kw):
    return WorldSpec(size=192, seed=seed, **kw)


def search_config(spec):
    return SearchConfig(bbox=Rect(0.0, 0.0, spec.size - 1.0, spec.size - 1.0),
                        step_distance=spec.segment_len)


class TestWorldSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            WorldSpec(size=40)
        with pytest.raises(ValueError):
            WorldSpec(road_width=0.5)
        with pytest.raises(ValueError):
            WorldSpec(density=1.5)
        with pytest.raises(ValueError):
            WorldSpec(branch_prob=-0.1)


class TestGenerateWorld:
    def test_zero_density_clutter_only(self):
        graph, image = generate_world(small_spec(density=0.0))
        assert graph.n_vertices == 0
        road = np.asarray(small_spec().road_color)
        exact = np.abs(image - road).max(axis=2) < 1e-12
        assert exact.sum() == 0

    def test_deterministic_per_seed(self):
        g1, im1 = generate_world(small_spec(seed=7))
        g2, im2 = generate_world(small_spec(seed=7))
        assert np.array_equal(im1, im2)
        assert np.array_equal(g1.positions(), g2.positions())
        assert g1.edges == g2.edges

    def test_seeds_differ(self):
        _, im1 = generate_world(small_spec(seed=1))
        _, im2 = generate_world(small_spec(seed=2))
        assert not np.array_equal(im1, im2)

    def test_vertices_on_road_pixels(self):
        spec = small_spec(seed=3)
        graph, image = generate_world(spec)
        assert graph.n_vertices > 10
        road = np.asarray(spec.road_color)
        for v in graph.positions():
            px = image[int(round(v[1])), int(round(v[0]))]
            np.testing.assert_array_equal(px, road)

    def test_geometry_bounds(self):
        for seed in range(3):
            spec = small_spec(seed=seed)
            graph, _ = generate_world(spec)
            pos = graph.positions()
            d = spec.segment_len
            for i, j in graph.edges:
                length = float(np.hypot(*(pos[i] - pos[j])))
                assert 0.7 * d - 1e-9 <= length <= 1.3 * d + 1e-9
            if graph.n_vertices > 1:
                dist, _ = cKDTree(pos).query(pos, k=2)
                assert dist[:, 1].min() >= 0.7 * d - 1e-9

    def test_values_in_unit_range(self):
        _, image = generate_world(small_spec(seed=4))
        assert image.min() >= 0.0 and image.max() <= 1.0


class TestWorldFiles:
    def test_round_trip(self, tmp_path):
        spec = small_spec(seed=5)
        graph, image = generate_world(spec)
        stem = str(tmp_path / "w005")
        save_world(spec, graph, image, stem)
        spec2, graph2, image2 = load_world(stem)
        assert spec2 == spec
        assert np.array_equal(graph2.positions(), graph.positions())
        assert graph2.edges == graph.edges
        # PNG quantizes to 8 bits
        assert np.abs(image2 - image).max() <= 0.5 / 255 + 1e-9

    def test_bad_spec_file(self, tmp_path):
        spec = small_spec(seed=5)
        graph, image = generate_world(spec)
        stem = str(tmp_path / "w")
        save_world(spec, graph, image, stem)
        with open(f"{stem}.spec.txt", "w") as fh:
            fh.write("size 192\n")
        with pytest.raises(DataError):
            load_world(stem)


def two_vertex_truth():
    g = RoadGraph()
    a = g.add_vertex((10.0, 10.0))
    b = g.add_vertex((22.0, 10.0))
    g.add_edge(a, b)
    return g


class TestOracleDecision:
    def test_off_road_stops(self):
        ctx = OracleContext(two_vertex_truth(), anchor_radius=6.0)
        label = oracle_decision(ctx, RoadGraph(), (100.0, 100.0))
        assert label.action == STOP

    def test_east_edge_gives_bin_zero(self):
        ctx = OracleContext(two_vertex_truth(), anchor_radius=6.0, n_bins=64)
        label = oracle_decision(ctx, RoadGraph(), (16.0, 10.0))
        assert label.action == WALK
        assert label.angle_bin == 0

    def test_coverage_marks_edge(self):
        ctx = OracleContext(two_vertex_truth(), anchor_radius=6.0)
        oracle_decision(ctx, RoadGraph(), (10.0, 10.0))
        assert ctx.coverage() == 1.0
        again = oracle_decision(ctx, RoadGraph(), (10.0, 10.0))
        assert again.action == STOP

    def test_new_target_preferred_over_merge(self):
        # junction at origin: east edge target already traced, north not
        truth = RoadGraph()
        o = truth.add_vertex((50.0, 50.0))
        e = truth.add_vertex((62.0, 50.0))
        n = truth.add_vertex((50.0, 62.0))
        truth.add_edge(o, e)
        truth.add_edge(o, n)
        traced = RoadGraph()
        traced.add_vertex((62.0, 50.0))
        ctx = OracleContext(truth, anchor_radius=6.0, n_bins=64)
        label = oracle_decision(ctx, traced, (50.0, 50.0))
        assert label.action == WALK
        assert label.angle_bin == angle_to_bin(np.pi / 2, 64)

    def test_lowest_bin_on_plain_ties(self):
        truth = RoadGraph()
        o = truth.add_vertex((50.0, 50.0))
        e = truth.add_vertex((62.0, 50.0))
        n = truth.add_vertex((50.0, 62.0))
        truth.add_edge(o, e)
        truth.add_edge(o, n)
        ctx = OracleContext(truth, anchor_radius=6.0, n_bins=64)
        label = oracle_decision(ctx, RoadGraph(), (50.0, 50.0))
        assert label.angle_bin == 0  # east beats north


class TestTraceWorld:
    def test_full_coverage_and_matching_counts(self):
        for seed in range(3):
            spec = small_spec(seed=seed)
            truth, image = generate_world(spec)
            traced, ctx = trace_world(image, truth, 64, 64,
                                      search_config(spec))
            assert ctx.coverage() == 1.0
            assert traced.n_vertices == truth.n_vertices
            dist, _ = cKDTree(traced.positions()).query(truth.positions())
            assert dist.max() < 0.5 * spec.segment_len

    def test_deterministic(self):
        spec = small_spec(seed=9)
        truth, image = generate_world(spec)
        t1, _ = trace_world(image, truth, 64, 64, search_config(spec))
        t2, _ = trace_world(image, truth, 64, 64, search_config(spec))
        assert np.array_equal(t1.positions(), t2.positions())
        assert t1.edges == t2.edges

    def test_component_seeds_count(self):
        truth, _ = generate_world(small_spec(seed=1))
        assert len(component_seeds(truth)) == len(truth.components())


class TestTrainingSet:
    def test_zero_worlds_rejected(self):
        with pytest.raises(ValueError):
            make_training_set([], d=32, samples_per_world=100)

    def test_reproducible(self):
        specs = [small_spec(seed=11)]
        a = make_training_set(specs, d=32, samples_per_world=200, seed=1)
        b = make_training_set(specs, d=32, samples_per_world=200, seed=1)
        assert np.array_equal(a.centers, b.centers)
        assert np.array_equal(a.actions, b.actions)
        assert np.array_equal(a.bins, b.bins)
        xa, _, _ = a.encode_batch(np.arange(len(a)))
        xb, _, _ = b.encode_batch(np.arange(len(b)))
        assert np.array_equal(xa, xb)

    def test_marginals_and_balance(self):
        ds = make_training_set([small_spec(seed=12)], d=32,
                               samples_per_world=0, seed=2)
        m = ds.marginals()
        assert m["walk"] + m["stop"] == len(ds)
        assert m["walk"] <= 3.0 * m["stop"] + 1
        assert m["stop"] > 0

    def test_ratio_cap_subsamples_walks(self):
        ds = make_training_set([small_spec(seed=12)], d=32,
                               samples_per_world=0, seed=2,
                               max_walk_stop_ratio=0.5)
        m = ds.marginals()
        assert m["walk"] <= 0.5 * m["stop"] + 1

    def test_samples_per_world_cap(self):
        ds = make_training_set([small_spec(seed=13)], d=32,
                               samples_per_world=50, seed=3)
        assert len(ds) <= 50

    def test_walk_rows_have_bins(self):
        ds = make_training_set([small_spec(seed=14)], d=32,
                               samples_per_world=0, seed=4)
        walk = ds.actions == 0
        assert np.all(ds.bins[walk] >= 0)
        assert np.all(ds.bins[walk] < 64)

    def test_fast_encode_matches_reference(self):
        ds = make_training_set([small_spec(seed=15)], d=32,
                               samples_per_world=0, seed=5)
        rng = np.random.default_rng(0)
        for k in rng.choice(len(ds), size=12, replace=False):
            fast = ds.encode_row(int(k))
            ref = ds.reference_row(int(k))
            assert np.array_equal(fast.window, ref.window)
            assert np.array_equal(fast.graph_channel, ref.graph_channel)

    def test_encode_batch_shapes_and_range(self):
        ds = make_training_set([small_spec(seed=16)], d=32,
                               samples_per_world=60, seed=6)
        x, actions, bins = ds.encode_batch(np.arange(10))
        assert x.shape == (10, 32 * 32 * 4)
        assert x.min() >= 0.0 and x.max() <= 1.0
        assert actions.shape == (10,) and bins.shape == (10,)

    def test_subset_keeps_rows(self):
        ds = make_training_set([small_spec(seed=17)], d=32,
                               samples_per_world=80, seed=7)
        idx = np.arange(0, len(ds), 2)
        sub = ds.subset(idx)
        assert len(sub) == len(idx)
        np.testing.assert_array_equal(sub.actions, ds.actions[idx])

    def test_file_round_trip(self, tmp_path):
        ds = make_training_set([small_spec(seed=18)], d=32,
                               samples_per_world=40, seed=8)
        path = tmp_path / "set.txt"
        save_decision_set(ds, path)
        back = load_decision_set(path, ds.worlds)
        assert len(back) == len(ds)
        assert np.array_equal(back.centers, ds.centers)
        assert np.array_equal(back.prefixes, ds.prefixes)
        assert np.array_equal(back.actions, ds.actions)
        assert np.array_equal(back.bins, ds.bins)

    def test_load_rejects_bad_world_index(self, tmp_path):
        ds = make_training_set([small_spec(seed=18)], d=32,
                               samples_per_world=10, seed=8)
        path = tmp_path / "set.txt"
        save_decision_set(ds, path)
        with pytest.raises(DataError):
            load_decision_set(path, [])
