"""Precision/recall, trajectory error, and heading-difference reporting."""

import numpy as np
import pytest

from toposlam.dataset import LoopPair
from toposlam.evaluation import (
    ape,
    histogram_mass,
    operating_point,
    pr_curve,
    read_pr,
    rotation_histogram,
    write_ape,
    write_hist,
    write_pr,
)
from toposlam.evaluation import PRPoint
from toposlam.se2 import compose


def pairs(*items):
    return [LoopPair(i, j, s) for i, j, s in items]


def truth_set(*keys):
    return {LoopPair(i, j) for i, j in keys}


# --- precision/recall ---


def test_pr_perfect_predictions():
    truth = truth_set((0, 40), (5, 50))
    preds = pairs((0, 40, 0.9), (5, 50, 0.8))
    (pt,) = pr_curve(preds, truth, [0.5])
    assert pt.precision == 1.0 and pt.recall == 1.0
    assert (pt.tp, pt.fp, pt.fn) == (2, 0, 0)


def test_pr_hand_worked_curve():
    truth = truth_set((0, 40), (5, 50), (9, 90))
    preds = pairs((0, 40, 0.9), (0, 41, 0.8), (5, 50, 0.7))
    lo, hi = pr_curve(preds, truth, [0.65, 0.75])
    assert (hi.tp, hi.fp, hi.fn) == (1, 1, 2)
    assert hi.precision == pytest.approx(0.5)
    assert hi.recall == pytest.approx(1 / 3)
    assert (lo.tp, lo.fp, lo.fn) == (2, 1, 1)
    assert lo.precision == pytest.approx(2 / 3)
    assert lo.recall == pytest.approx(2 / 3)


def test_pr_counting_identities_and_monotone_recall():
    rng = np.random.default_rng(0)
    keys = {(int(i), int(i + 31 + k)) for i, k in
            zip(rng.integers(0, 60, 40), rng.integers(0, 20, 40))}
    truth = truth_set(*list(keys)[:25])
    preds = [LoopPair(i, j, float(rng.random())) for i, j in keys]
    thresholds = np.linspace(0.0, 1.0, 21)
    points = pr_curve(preds, truth, thresholds)
    last_recall = np.inf
    for pt in points:
        n_at = sum(p.score >= pt.threshold for p in preds)
        assert pt.tp + pt.fp == n_at
        assert pt.tp + pt.fn == len(truth)
        assert pt.recall <= last_recall + 1e-12
        last_recall = pt.recall
    # input order must not matter
    shuffled = list(preds)
    rng.shuffle(shuffled)
    again = pr_curve(shuffled, truth, thresholds)
    assert again == points


def test_pr_empty_cases():
    (pt,) = pr_curve([], truth_set((0, 40)), [0.5])
    assert pt.precision == 1.0 and pt.recall == 0.0
    (pt,) = pr_curve(pairs((0, 40, 0.9)), set(), [0.5])
    assert pt.precision == 0.0 and pt.recall == 1.0
    (pt,) = pr_curve([], set(), [0.5])
    assert pt.precision == 1.0 and pt.recall == 1.0


def test_pr_mode_validation():
    with pytest.raises(ValueError):
        pr_curve([], set(), [0.5], mode="fuzzy")


def test_pr_exact_mode_counts_duplicates_once():
    truth = truth_set((0, 40))
    preds = pairs((0, 40, 0.9), (0, 40, 0.8))
    (pt,) = pr_curve(preds, truth, [0.5])
    assert (pt.tp, pt.fp, pt.fn) == (1, 1, 0)


def test_pr_tolerant_matching_is_one_to_one():
    truth = truth_set((0, 40))
    preds = pairs((1, 41, 0.9), (0, 40, 0.8))
    (pt,) = pr_curve(preds, truth, [0.5], mode="tolerant", w_tol=2)
    assert (pt.tp, pt.fp, pt.fn) == (1, 1, 0)


def test_pr_tolerant_claims_nearest_truth():
    truth = truth_set((0, 40), (3, 43))
    preds = pairs((1, 41, 0.9))
    (pt,) = pr_curve(preds, truth, [0.5], mode="tolerant", w_tol=2)
    assert (pt.tp, pt.fn) == (1, 1)
    # a second nearby prediction picks up the remaining truth pair
    preds = pairs((1, 41, 0.9), (2, 42, 0.8))
    (pt,) = pr_curve(preds, truth, [0.5], mode="tolerant", w_tol=2)
    assert (pt.tp, pt.fp, pt.fn) == (2, 0, 0)


def test_pr_tolerant_window_is_hard():
    truth = truth_set((0, 40))
    preds = pairs((0, 43, 0.9))
    (pt,) = pr_curve(preds, truth, [0.5], mode="tolerant", w_tol=2)
    assert pt.tp == 0
    (pt,) = pr_curve(preds, truth, [0.5], mode="tolerant", w_tol=3)
    assert pt.tp == 1


# --- operating point ---


def pr(t, p, r):
    return PRPoint(t, p, r, 0, 0, 0)


def test_operating_point_picks_highest_recall_at_target():
    pts = [pr(0.9, 1.0, 0.2), pr(0.7, 0.95, 0.5), pr(0.5, 0.92, 0.6), pr(0.3, 0.85, 0.8)]
    assert operating_point(pts, 0.9) == pts[2]


def test_operating_point_ties_break_to_lower_threshold():
    pts = [pr(0.7, 0.95, 0.6), pr(0.5, 0.92, 0.6)]
    assert operating_point(pts, 0.9) == pts[1]


def test_operating_point_falls_back_to_most_precise():
    pts = [pr(0.7, 0.6, 0.9), pr(0.5, 0.8, 0.7), pr(0.3, 0.4, 1.0)]
    assert operating_point(pts, 0.9) == pts[1]


def test_operating_point_empty_curve():
    with pytest.raises(ValueError):
        operating_point([], 0.9)


# --- absolute pose error ---


def random_trajectory(rng, n=40):
    deltas = np.column_stack(
        [rng.uniform(0.5, 1.0, n - 1), np.zeros(n - 1), rng.uniform(-0.3, 0.3, n - 1)]
    )
    poses = [np.zeros(3)]
    for d in deltas:
        poses.append(compose(poses[-1], d))
    return np.vstack(poses)


def test_ape_zero_for_identical():
    rng = np.random.default_rng(1)
    traj = random_trajectory(rng)
    rep = ape(traj, traj)
    assert rep.mean == 0.0 and rep.max == 0.0 and rep.rmse == 0.0


def test_ape_constant_offset_without_alignment():
    rng = np.random.default_rng(2)
    traj = random_trajectory(rng)
    shifted = traj + np.array([3.0, 4.0, 0.0])
    rep = ape(shifted, traj, align_first=False)
    assert rep.min == pytest.approx(5.0)
    assert rep.mean == pytest.approx(5.0)
    assert rep.max == pytest.approx(5.0)
    assert rep.rmse == pytest.approx(5.0)
    assert not rep.aligned


def test_ape_alignment_removes_start_frame_mismatch():
    rng = np.random.default_rng(3)
    traj = random_trajectory(rng)
    T = np.array([2.0, -1.0, 0.7])
    moved = compose(T, traj)
    rep = ape(moved, traj, align_first=True)
    assert rep.mean == pytest.approx(0.0, abs=1e-9)
    assert rep.aligned


def test_ape_statistics():
    truth = np.zeros((2, 3))
    est = np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    rep = ape(est, truth, align_first=False)
    assert (rep.min, rep.max) == (0.0, 5.0)
    assert rep.mean == pytest.approx(2.5)
    assert rep.rmse == pytest.approx(np.sqrt(12.5))


def test_ape_length_mismatch():
    with pytest.raises(ValueError):
        ape(np.zeros((3, 3)), np.zeros((4, 3)))


# --- heading-difference histogram ---


def test_rotation_histogram_bins_and_total():
    poses = np.array(
        [[0, 0, 0.0], [0, 0, np.pi], [0, 0, np.pi / 2], [0, 0, 0.05]], dtype=float
    )
    prs = pairs((0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0))
    counts, edges = rotation_histogram(prs, poses, bins=18)
    assert counts.sum() == 3
    assert len(edges) == 19
    assert edges[0] == 0.0 and edges[-1] == 180.0
    # 180 degrees lands in the final bin, not outside the range
    assert counts[-1] == 1
    assert counts[0] == 1  # 0.05 rad is under 10 degrees


def test_rotation_histogram_wraps_heading_difference():
    poses = np.array([[0, 0, 3.0], [0, 0, -3.0]], dtype=float)
    counts, edges = rotation_histogram(pairs((0, 1, 1.0)), poses, bins=18)
    # raw difference is 6 rad; wrapped it is ~0.28 rad (~16 deg)
    assert counts[1] == 1


def test_rotation_histogram_validates_pairs():
    with pytest.raises(ValueError):
        rotation_histogram(pairs((0, 5, 1.0)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        rotation_histogram([], np.zeros((3, 3)), bins=0)


def test_histogram_mass_selects_whole_bins():
    counts = np.ones(18, dtype=int)
    edges = np.linspace(0.0, 180.0, 19)
    assert histogram_mass(counts, edges, 150.0, 180.0) == 3.0
    assert histogram_mass(counts, edges, 0.0, 180.0) == 18.0
    # a window cutting through a bin keeps only fully-covered bins
    assert histogram_mass(counts, edges, 145.0, 180.0) == 3.0


# --- serialization ---


def test_pr_file_roundtrip(tmp_path):
    truth = truth_set((0, 40), (5, 50), (9, 90))
    preds = pairs((0, 40, 0.912345), (0, 41, 0.8), (5, 50, 0.7))
    points = pr_curve(preds, truth, np.linspace(0.5, 1.0, 6))
    path = tmp_path / "pr.csv"
    write_pr(path, points, mode="exact")
    back = read_pr(path)
    assert len(back) == len(points)
    for a, b in zip(back, points):
        assert a.threshold == pytest.approx(b.threshold, abs=5e-7)
        assert a.precision == pytest.approx(b.precision, abs=5e-7)
        assert a.recall == pytest.approx(b.recall, abs=5e-7)
        assert (a.tp, a.fp, a.fn) == (b.tp, b.fp, b.fn)


def test_ape_and_hist_files_written(tmp_path):
    rep = ape(np.zeros((3, 3)), np.zeros((3, 3)))
    ape_path = tmp_path / "ape.csv"
    write_ape(ape_path, {"noisy": rep, "optimized": rep})
    text = ape_path.read_text()
    assert "noisy" in text and "optimized" in text

    counts, edges = rotation_histogram([], np.zeros((2, 3)))
    hist_path = tmp_path / "hist.csv"
    write_hist(hist_path, counts, edges)
    assert hist_path.read_text().count("\n") >= 18
