"""Vertex-level precision/recall between road graphs.

Both graphs are resampled to a uniform spacing first, making the
metric independent of how densely either was drawn.  Matching is
greedy one-to-one by ascending distance inside the match radius:
leftover predictions are false positives, leftover truth points are
false negatives.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .graph import RoadGraph, resample_uniform


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    r_match: float
    pairs: list = field(default_factory=list)

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("negative match counts")


def match_points(pred_pts, truth_pts, r_match) -> MatchResult:
    """Greedy one-to-one matching of raw point sets."""
    pred_pts = np.asarray(pred_pts, dtype=np.float64).reshape(-1, 2)
    truth_pts = np.asarray(truth_pts, dtype=np.float64).reshape(-1, 2)
    if r_match <= 0:
        raise ValueError("match radius must be positive")
    if len(pred_pts) == 0 or len(truth_pts) == 0:
        return MatchResult(0, len(pred_pts), len(truth_pts), r_match)

    tree = cKDTree(truth_pts)
    candidates = []
    for pi, hits in enumerate(tree.query_ball_point(pred_pts, r_match)):
        for tj in hits:
            dist = float(np.hypot(*(pred_pts[pi] - truth_pts[tj])))
            candidates.append((dist, pi, tj))
    candidates.sort()

    pred_used = np.zeros(len(pred_pts), dtype=bool)
    truth_used = np.zeros(len(truth_pts), dtype=bool)
    pairs = []
    for dist, pi, tj in candidates:
        if pred_used[pi] or truth_used[tj]:
            continue
        pred_used[pi] = True
        truth_used[tj] = True
        pairs.append((pi, tj))
    tp = len(pairs)
    return MatchResult(tp, len(pred_pts) - tp, len(truth_pts) - tp,
                       r_match, pairs)


def match_vertices(pred: RoadGraph, truth: RoadGraph, r_match,
                   spacing=None) -> MatchResult:
    """Resample both graphs (default spacing 2 * r_match) and match."""
    if spacing is None:
        spacing = 2.0 * r_match
    return match_points(resample_uniform(pred, spacing),
                        resample_uniform(truth, spacing), r_match)


def precision(m: MatchResult) -> float:
    if m.tp + m.fp == 0:
        return 1.0
    return m.tp / (m.tp + m.fp)


def recall(m: MatchResult) -> float:
    if m.tp + m.fn == 0:
        return 1.0
    return m.tp / (m.tp + m.fn)


def report(runs) -> str:
    """Aligned text table over (label, MatchResult, wall seconds) rows,
    percentages and minutes to one decimal."""
    header = ("Model", "Precision", "Recall", "Time(minutes)")
    rows = [header]
    for label, m, seconds in runs:
        rows.append((label, f"{100.0 * precision(m):.1f}",
                     f"{100.0 * recall(m):.1f}", f"{seconds / 60.0:.1f}"))
    widths = [max(len(r[c]) for r in rows) for c in range(4)]
    lines = []
    for r in rows:
        lines.append("  ".join(str(r[c]).ljust(widths[c]) for c in range(4)).rstrip())
    return "\n".join(lines) + "\n"


def report_csv(runs) -> str:
    """Machine-readable form: one header line then one row per run."""
    lines = ["model,precision,recall,time_minutes"]
    for label, m, seconds in runs:
        lines.append(f"{label},{precision(m):.4f},{recall(m):.4f},"
                     f"{seconds / 60.0:.1f}")
    return "\n".join(lines) + "\n"
