"""Detection and trajectory metrics.

Precision/recall of predicted loop pairs against radius-based truth,
translational absolute pose error of trajectories, and histograms of the
true heading difference across detected pairs (the viewpoint-disparity
fingerprint: a detector blind to opposite views has no mass near 180).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .se2 import compose, invert, wrap_angle


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class APEReport:
    min: float
    mean: float
    max: float
    rmse: float
    aligned: bool


def _as_pose_array(poses) -> np.ndarray:
    if hasattr(poses, "pose_array"):
        return poses.pose_array()
    arr = np.asarray(
        [p.to_array() if hasattr(p, "to_array") else p for p in poses], dtype=float
    )
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("poses must be (N, 3) [x, y, theta]")
    return arr


def pr_curve(predicted, truth, thresholds, mode: str = "exact", w_tol: int = 2):
    """Precision/recall over a threshold sweep.

    ``predicted`` are scored pairs, ``truth`` an unscored pair set.  At
    each threshold the predictions scoring at or above it are matched:
    exact mode requires the identical (i, j); tolerant mode lets a
    prediction claim one unclaimed truth pair within +-w_tol on both
    indices.  Matching is greedy one-to-one in descending score order
    (ties by pair), each prediction claiming the nearest unclaimed truth
    (ties by offset), so tp is computed once per prediction prefix and
    every threshold reads the same matching.  This keeps tp + fp = |preds
    at t| and tp + fn = |truth|, and makes recall non-increasing in the
    threshold.  Empty denominators give precision/recall 1.0.
    """
    if mode not in ("exact", "tolerant"):
        raise ValueError(f"unknown matching mode {mode!r}")
    truth_keys = {p.key for p in truth}
    order = sorted(predicted, key=lambda p: (-p.score, p.key))
    cum = np.zeros(len(order) + 1, dtype=np.int64)
    if mode == "exact":
        claimed = set()
        tp = 0
        for m, p in enumerate(order, 1):
            if p.key in truth_keys and p.key not in claimed:
                claimed.add(p.key)
                tp += 1
            cum[m] = tp
    else:
        offsets = sorted(
            (abs(di) + abs(dj), di, dj)
            for di in range(-w_tol, w_tol + 1)
            for dj in range(-w_tol, w_tol + 1)
        )
        unclaimed = set(truth_keys)
        tp = 0
        for m, p in enumerate(order, 1):
            i, j = p.key
            for _, di, dj in offsets:
                k = (i + di, j + dj)
                if k in unclaimed:
                    unclaimed.discard(k)
                    tp += 1
                    break
            cum[m] = tp
    neg_scores = np.array([-p.score for p in order], dtype=float)
    n_truth = len(truth_keys)
    points = []
    for t in thresholds:
        m = int(np.searchsorted(neg_scores, -float(t), side="right"))
        tp = int(cum[m])
        fp = m - tp
        fn = n_truth - tp
        precision = tp / (tp + fp) if tp + fp else 1.0
        recall = tp / (tp + fn) if tp + fn else 1.0
        points.append(PRPoint(float(t), precision, recall, tp, fp, fn))
    return points


def operating_point(points, target_precision: float = 0.9) -> PRPoint:
    """Recall-maximizing PR point at or above the target precision.

    Among points with precision >= target, returns the one with the
    highest recall (ties broken by lower threshold), i.e. the knee where
    the curve crosses the target.  If the curve never reaches the target,
    falls back to the most precise point so the result is still the one
    nearest the requested precision from below.
    """
    if not points:
        raise ValueError("empty PR curve")
    at_target = [p for p in points if p.precision >= target_precision]
    if at_target:
        return min(at_target, key=lambda p: (-p.recall, p.threshold))
    return min(points, key=lambda p: (-p.precision, -p.recall, p.threshold))


def ape(estimate, truth, align_first: bool = True) -> APEReport:
    """Translational APE between two equal-length trajectories.

    With ``align_first`` the rigid transform sending estimate[0] onto
    truth[0] is applied first, so dead-reckoned trajectories that start
    at the origin compare fairly against world-frame ground truth.
    """
    est = _as_pose_array(estimate)
    tru = _as_pose_array(truth)
    if est.shape != tru.shape:
        raise ValueError(f"trajectory length mismatch: {est.shape} vs {tru.shape}")
    if align_first:
        offset = compose(tru[0], invert(est[0]))
        est = compose(offset, est)
    err = np.linalg.norm(est[:, :2] - tru[:, :2], axis=1)
    return APEReport(
        min=float(err.min()),
        mean=float(err.mean()),
        max=float(err.max()),
        rmse=float(np.sqrt(np.mean(err**2))),
        aligned=bool(align_first),
    )


def rotation_histogram(pairs, truth_poses, bins: int = 18):
    """Histogram of |wrapped heading difference| in degrees over [0, 180].

    Returns (counts, edges).  Counts sum to len(pairs); the 180-degree
    case lands in the last bin.
    """
    poses = _as_pose_array(truth_poses)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    diffs = []
    for p in pairs:
        if p.j >= len(poses):
            raise ValueError(f"pair ({p.i}, {p.j}) has no pose (N={len(poses)})")
        d = abs(wrap_angle(poses[p.i, 2] - poses[p.j, 2]))
        diffs.append(math.degrees(d))
    edges = np.linspace(0.0, 180.0, bins + 1)
    counts, _ = np.histogram(diffs, bins=edges)
    return counts, edges


def histogram_mass(counts, edges, low_deg: float, high_deg: float) -> float:
    """Total count in the bins lying inside [low_deg, high_deg]."""
    counts = np.asarray(counts)
    keep = (edges[:-1] >= low_deg - 1e-9) & (edges[1:] <= high_deg + 1e-9)
    return float(counts[keep].sum())


# ---------------------------------------------------------------------------
# artifacts


def write_pr(path, points, mode: str = "exact") -> None:
    with open(path, "w") as fh:
        fh.write(f"# matching={mode}\n")
        fh.write("threshold,precision,recall,tp,fp,fn\n")
        for p in points:
            fh.write(
                f"{p.threshold:.6f},{p.precision:.6f},{p.recall:.6f},"
                f"{p.tp},{p.fp},{p.fn}\n"
            )


def read_pr(path):
    points = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line == "threshold,precision,recall,tp,fp,fn":
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise DataFormatError(f"bad pr row: {line!r}")
            points.append(
                PRPoint(
                    float(parts[0]), float(parts[1]), float(parts[2]),
                    int(parts[3]), int(parts[4]), int(parts[5]),
                )
            )
    return points


def write_ape(path, reports: dict) -> None:
    """Write labeled APE rows; ``reports`` maps label -> APEReport."""
    with open(path, "w") as fh:
        fh.write("label,min,mean,max,rmse\n")
        for label, r in reports.items():
            fh.write(f"{label},{r.min:.6f},{r.mean:.6f},{r.max:.6f},{r.rmse:.6f}\n")


def write_hist(path, counts, edges) -> None:
    with open(path, "w") as fh:
        fh.write("bin_low_deg,bin_high_deg,count\n")
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            fh.write(f"{lo:.1f},{hi:.1f},{int(c)}\n")
