"""Command-line surface: generate, pretrain, train, infer, eval, render.

Every command validates its full configuration before touching the
filesystem, takes an explicit seed, and is bitwise reproducible.  Exit
codes: 0 success, 1 usage or configuration problem, 2 malformed data.
"""

import argparse
import os
import sys
import time

import numpy as np

from .adaptive import (
    PretrainSchedule,
    StructureThresholds,
    format_layer_sizes,
    load_stack,
    pretrain_adaptive,
    save_stack,
)
from .config import (
    RunConfig,
    apply_overrides,
    load_config,
    save_config,
    validate_config,
)
from .decision import TrainSchedule, action_accuracy, decision_fn, init_head, train_head
from .errors import ConfigError, DataError
from .evaluate import match_vertices, report, report_csv
from .graph import drop_isolated, load_graph, save_graph
from .raster import draw_segment, imread, imwrite
from .search import Rect, SearchConfig, grid_seeds, save_trace, search_multi
from .world import (
    WorldSpec,
    generate_world,
    load_world,
    make_training_set,
    save_world,
)

OVERLAY_COLOR = (1.0, 0.85, 0.1)
TRUTH_COLOR = (0.1, 0.8, 0.2)
PRED_COLOR = (0.9, 0.15, 0.1)


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; we reserve 2 for
    data problems, so turn those into ConfigError (exit 1) instead."""

    def error(self, message):
        raise ConfigError(message)


def _world_spec(cfg: RunConfig, seed) -> WorldSpec:
    return WorldSpec(size=cfg.world_size, seed=seed, density=cfg.density,
                     branch_prob=cfg.branch_prob, curvature=cfg.curvature,
                     road_width=cfg.road_width, noise=cfg.noise,
                     segment_len=cfg.step_distance)


def _world_stems(worlds_dir):
    """Sorted stems of complete world triples under a directory."""
    try:
        names = sorted(os.listdir(worlds_dir))
    except OSError as exc:
        raise DataError(f"cannot list {worlds_dir}: {exc}")
    stems = [os.path.join(worlds_dir, n[:-len(".spec.txt")])
             for n in names if n.endswith(".spec.txt")]
    if not stems:
        raise DataError(f"no world files (*.spec.txt) in {worlds_dir}")
    return stems


def cmd_generate(cfg: RunConfig, out_dir) -> int:
    """Write n_worlds deterministic world triples plus a seed manifest."""
    if cfg.n_worlds < 1:
        raise ConfigError(f"n_worlds must be >= 1, got {cfg.n_worlds}")
    os.makedirs(out_dir, exist_ok=True)
    print(f"# world size={cfg.world_size} density={cfg.density} "
          f"segment_len={cfg.step_distance}")
    for k in range(cfg.n_worlds):
        spec = _world_spec(cfg, cfg.seed + k)
        graph, image = generate_world(spec)
        stem = os.path.join(out_dir, f"world_{k:03d}")
        save_world(spec, graph, image, stem)
        print(f"world_{k:03d} seed={spec.seed} vertices={graph.n_vertices} "
              f"edges={graph.n_edges}")
    save_config(cfg, os.path.join(out_dir, "generate.cfg"))
    return 0


def _load_specs(worlds_dir):
    specs = []
    for stem in _world_stems(worlds_dir):
        spec, _, _ = load_world(stem)
        specs.append(spec)
    return specs


def _build_dataset(cfg: RunConfig, worlds_dir):
    """Oracle-labeled decision dataset split by whole worlds."""
    specs = _load_specs(worlds_dir)
    if cfg.holdout_worlds >= len(specs):
        raise ConfigError(
            f"holdout_worlds={cfg.holdout_worlds} leaves no training world "
            f"(found {len(specs)})")
    ds = make_training_set(specs, d=cfg.window,
                           samples_per_world=cfg.samples_per_world,
                           seed=cfg.seed, n_bins=cfg.n_bins,
                           off_road_fraction=cfg.off_road_fraction)
    ds.build_cache()
    split = len(specs) - cfg.holdout_worlds
    train_idx = np.flatnonzero(ds.world_idx < split)
    val_idx = np.flatnonzero(ds.world_idx >= split)
    train = ds.subset(train_idx)
    train._cache = ds._cache[train_idx]
    val = None
    if len(val_idx):
        val = ds.subset(val_idx)
        val._cache = ds._cache[val_idx]
    return train, val


def _thresholds(cfg: RunConfig) -> StructureThresholds:
    return StructureThresholds(gen=cfg.gen_threshold, ann=cfg.ann_threshold,
                               layer_wd=cfg.layer_wd_threshold,
                               layer_energy=cfg.layer_energy_threshold,
                               j_max=cfg.j_max, l_max=cfg.l_max)


def _pretrain(cfg: RunConfig, train):
    rng = np.random.default_rng(cfg.seed + 1)
    sample = min(cfg.pretrain_sample, len(train))
    pick = np.sort(rng.choice(len(train), size=sample, replace=False))
    x, _, _ = train.encode_batch(pick)

    def progress(epoch, layer, err, wd):
        print(f"pretrain epoch={epoch} layer={layer} recon={err:.5f} "
              f"wd_total={wd:.6f}")

    sched = PretrainSchedule(initial_hidden=cfg.initial_hidden,
                             epochs_per_layer=cfg.pretrain_epochs,
                             lr=cfg.pretrain_lr, cd_k=cfg.cd_k,
                             gamma=cfg.wd_gamma, batch_size=cfg.batch_size,
                             seed=cfg.seed + 2, progress=progress)
    stack = pretrain_adaptive(x, _thresholds(cfg), sched)
    for line in stack.log:
        print(f"structure {line}")
    return stack


def _write_stack(stack, out, log_path=None):
    save_stack(stack, out)
    if log_path:
        with open(log_path, "w") as fh:
            for line in stack.log:
                fh.write(line + "\n")
    print(f"layers: {format_layer_sizes(stack.layer_sizes())}")


def cmd_pretrain(cfg: RunConfig, worlds_dir, out, log_path) -> int:
    """Unsupervised stage only: adaptive CD pretraining on window data."""
    train, _ = _build_dataset(cfg, worlds_dir)
    stack = _pretrain(cfg, train)
    _write_stack(stack, out, log_path)
    return 0


def cmd_train(cfg: RunConfig, worlds_dir, out, log_path, resume=None) -> int:
    """Full pipeline: pretrain (or resume from its checkpoint), attach a
    decision head, fine-tune on oracle labels, report accuracies."""
    train, val = _build_dataset(cfg, worlds_dir)
    if resume is None:
        stack = _pretrain(cfg, train)
    else:
        stack = load_stack(resume)
        if stack.n_input != train.d * train.d * 4:
            raise ConfigError(
                f"checkpoint expects {stack.n_input} inputs, dataset windows "
                f"give {train.d * train.d * 4}")
    if stack.head is None:
        stack = init_head(stack, n_angle=cfg.n_bins, seed=cfg.seed + 3,
                          scale=cfg.head_scale)
    sched = TrainSchedule(epochs=cfg.train_epochs, lr=cfg.train_lr,
                          momentum=cfg.momentum, batch_size=cfg.batch_size,
                          seed=cfg.seed + 4, log_every=1)
    stack = train_head(stack, train, sched)
    for line in sched.log:
        print(f"train {line}")
    print(f"train action accuracy: {action_accuracy(stack, train):.4f}")
    if val is not None:
        print(f"holdout action accuracy: {action_accuracy(stack, val):.4f}")
    _write_stack(stack, out, log_path)
    return 0


def cmd_infer(cfg: RunConfig, checkpoint, image_path, graph_out,
              trace_out=None) -> int:
    """Run the trained model's search over an image from a seed lattice.

    Isolated probe seeds are dropped from the saved graph; wall time is
    measured around the search loop only."""
    stack = load_stack(checkpoint)
    if stack.head is None:
        raise DataError(f"{checkpoint} has no decision head; "
                        "run train before infer")
    image = imread(image_path)
    bbox = Rect.of_image(image)
    config = SearchConfig(bbox=bbox, step_distance=cfg.step_distance,
                          snap_radius=cfg.snap_radius,
                          step_budget=cfg.step_budget)
    decide = decision_fn(stack, cfg.window, cfg.walk_threshold)
    seeds = grid_seeds(bbox, cfg.seed_spacing,
                       margin=min(cfg.seed_spacing / 2, 8.0))
    trace = []
    t0 = time.perf_counter()
    graph = search_multi(image, seeds, config, decide, trace=trace)
    minutes = (time.perf_counter() - t0) / 60.0
    graph = drop_isolated(graph)
    save_graph(graph, graph_out)
    if trace_out:
        save_trace(trace, trace_out)
    print(f"vertices={graph.n_vertices} edges={graph.n_edges} "
          f"decisions={len(trace)} minutes={minutes:.1f}")
    return 0


def cmd_eval(cfg: RunConfig, truth_path, pred_paths, names, minutes,
             csv=False) -> int:
    """Vertex-level precision/recall of predictions against one truth."""
    if names and len(names) != len(pred_paths):
        raise ConfigError(
            f"{len(names)} names for {len(pred_paths)} predictions")
    if minutes and len(minutes) != len(pred_paths):
        raise ConfigError(
            f"{len(minutes)} timings for {len(pred_paths)} predictions")
    truth = load_graph(truth_path)
    rows = []
    for k, path in enumerate(pred_paths):
        pred = load_graph(path)
        m = match_vertices(pred, truth, cfg.match_radius)
        name = names[k] if names else os.path.basename(path)
        secs = 60.0 * (minutes[k] if minutes else 0.0)
        rows.append((name, m, secs))
    print(report_csv(rows) if csv else report(rows), end="")
    return 0


def _draw_edges(image, graph, width, color):
    pos = graph.positions()
    for i, j in graph.edges:
        draw_segment(image, pos[i], pos[j], width, color)


def cmd_render(cfg: RunConfig, image_path, graph_path, out,
               truth_path=None) -> int:
    """Stroke detected edges over the raster; with a truth graph, truth
    goes down first in green and the prediction on top in red."""
    image = imread(image_path)
    graph = load_graph(graph_path)
    if truth_path is None:
        _draw_edges(image, graph, cfg.overlay_width, OVERLAY_COLOR)
    else:
        _draw_edges(image, load_graph(truth_path), cfg.overlay_width,
                    TRUTH_COLOR)
        _draw_edges(image, graph, cfg.overlay_width, PRED_COLOR)
    imwrite(out, image)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roadnet",
                     description="road-network extraction from raster maps")
    parser.add_argument("-c", "--config", help="key = value config file")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", dest="overrides",
                        help="override a single config field (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic world triples")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=None, help="number of worlds")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("pretrain", help="unsupervised structure-adaptive CD")
    p.add_argument("--worlds", required=True, help="directory from generate")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", default=None, help="structure log path")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train", help="pretrain plus supervised fine-tune")
    p.add_argument("--worlds", required=True, help="directory from generate")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", default=None, help="structure log path")
    p.add_argument("--resume", default=None,
                   help="skip pretraining, start from this checkpoint")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("infer", help="search an image with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--graph-out", required=True)
    p.add_argument("--trace-out", default=None)
    p.add_argument("-T", "--threshold", type=float, default=None,
                   help="walk threshold")

    p = sub.add_parser("eval", help="precision/recall against ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", action="append", required=True,
                   help="prediction graph (repeatable)")
    p.add_argument("--name", action="append", default=[],
                   help="row label per prediction")
    p.add_argument("--minutes", action="append", type=float, default=[],
                   help="wall time per prediction")
    p.add_argument("--csv", action="store_true")

    p = sub.add_parser("render", help="overlay a graph on an image")
    p.add_argument("--image", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None,
                   help="also draw this graph, truth green / prediction red")
    return parser


def _merge_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    apply_overrides(cfg, args.overrides)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "n", None) is not None:
        cfg.n_worlds = args.n
    if getattr(args, "threshold", None) is not None:
        cfg.walk_threshold = args.threshold
    return validate_config(cfg)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _merge_config(args)
        if args.command == "generate":
            return cmd_generate(cfg, args.out)
        if args.command == "pretrain":
            return cmd_pretrain(cfg, args.worlds, args.out, args.log)
        if args.command == "train":
            return cmd_train(cfg, args.worlds, args.out, args.log,
                             resume=args.resume)
        if args.command == "infer":
            return cmd_infer(cfg, args.checkpoint, args.image,
                             args.graph_out, args.trace_out)
        if args.command == "eval":
            return cmd_eval(cfg, args.truth, args.pred, args.name,
                            args.minutes, csv=args.csv)
        if args.command == "render":
            return cmd_render(cfg, args.image, args.graph, args.out,
                              truth_path=args.truth)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
