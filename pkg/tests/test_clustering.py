"""K-means and elbow selection: oracles, spec'd curves, invariants."""

import numpy as np
import pytest

from toposlam.clustering import (
    default_k_range,
    elbow_select_k,
    kmeans,
    read_clusters,
    read_elbow,
    select_elbow,
    write_clusters,
    write_elbow,
)

from _oracles import brute_force_inertia


def test_kmeans_matches_brute_force_on_tiny_instances():
    rng = np.random.default_rng(42)
    for trial in range(10):
        n = int(rng.integers(3, 9))
        d = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        k = min(k, n)
        X = rng.uniform(-5, 5, size=(n, d))
        fit = kmeans(X, k, seed=trial, restarts=20)
        assert fit.inertia <= brute_force_inertia(X, k) + 1e-9


def test_kmeans_two_gap_partition():
    X = np.array([[0.0], [0.1], [10.0], [10.1]])
    fit = kmeans(X, 2, seed=0, restarts=10)
    assert fit.labels[0] == fit.labels[1]
    assert fit.labels[2] == fit.labels[3]
    assert fit.labels[0] != fit.labels[2]
    assert fit.inertia == pytest.approx(2 * (0.05**2) * 2)


def test_kmeans_k1_and_kn():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 2))
    one = kmeans(X, 1, seed=0)
    assert np.allclose(one.centroids[0], X.mean(axis=0))
    assert one.inertia == pytest.approx(float(((X - X.mean(axis=0)) ** 2).sum()))
    full = kmeans(X, 6, seed=0)
    assert full.inertia == pytest.approx(0.0, abs=1e-12)
    assert sorted(full.labels) == list(range(6))


def test_kmeans_argument_errors():
    X = np.ones((3, 2))
    with pytest.raises(ValueError):
        kmeans(X, 0)
    with pytest.raises(ValueError):
        kmeans(X, 4)


def test_kmeans_every_cluster_used():
    # duplicate-heavy data forces the empty-cluster repair path
    X = np.array([[0.0], [0.0], [0.0], [10.0]])
    fit = kmeans(X, 3, seed=1, restarts=10)
    assert set(fit.labels) == {0, 1, 2}


def test_kmeans_deterministic_given_seed():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((40, 5))
    a = kmeans(X, 4, seed=11)
    b = kmeans(X, 4, seed=11)
    assert np.array_equal(a.labels, b.labels)
    assert a.inertia == b.inertia


def test_kmeans_lloyd_cost_non_increasing():
    rng = np.random.default_rng(4)
    for seed in range(5):
        X = rng.standard_normal((60, 4))
        fit = kmeans(X, 5, seed=seed, restarts=1)
        h = np.asarray(fit.history)
        assert np.all(np.diff(h) <= 1e-9)


def test_kmeans_restarts_never_hurt():
    rng = np.random.default_rng(5)
    X = np.vstack(
        [rng.normal(loc, 0.3, size=(15, 3)) for loc in (0.0, 5.0, 10.0, 15.0)]
    )
    weak = kmeans(X, 4, seed=2, restarts=1)
    strong = kmeans(X, 4, seed=2, restarts=20)
    assert strong.inertia <= weak.inertia + 1e-12


def test_kmeans_partition_stable_under_row_permutation():
    rng = np.random.default_rng(6)
    X = np.vstack([rng.normal(loc, 0.2, size=(10, 2)) for loc in (0.0, 8.0, 16.0)])
    perm = rng.permutation(len(X))
    a = kmeans(X, 3, seed=7, restarts=20)
    b = kmeans(X[perm], 3, seed=7, restarts=20)
    # compare partitions as sets of frozensets of original row indices
    def groups(labels, index):
        out = {}
        for row, lab in zip(index, labels):
            out.setdefault(lab, set()).add(int(row))
        return {frozenset(v) for v in out.values()}

    assert groups(a.labels, np.arange(len(X))) == groups(b.labels, perm)


# --- elbow rule ---


def test_select_elbow_reference_curve():
    curve = [(1, 100.0), (2, 20.0), (3, 18.0), (4, 17.5)]
    # drops: 0.8, 0.10, 0.028; 0.10 is not < 0.1, so tau=0.1 lands on k=3
    assert select_elbow(curve, 0.1) == (3, False)
    assert select_elbow(curve, 0.15) == (2, False)


def test_select_elbow_flat_curve_picks_k_min():
    assert select_elbow([(2, 5.0), (3, 5.0), (4, 5.0)], 0.1) == (2, False)


def test_select_elbow_zero_inertia_counts_as_zero_drop():
    assert select_elbow([(1, 0.0), (2, 0.0)], 0.5) == (1, False)


def test_select_elbow_saturates():
    curve = [(2, 100.0), (3, 10.0), (4, 1.0)]
    assert select_elbow(curve, 0.05) == (4, True)


def test_elbow_select_k_finds_well_separated_blobs():
    rng = np.random.default_rng(8)
    centers = np.array([[0, 0, 0], [100, 0, 0], [0, 100, 0], [0, 0, 100]], dtype=float)
    X = np.vstack([rng.normal(c, 0.1, size=(25, 3)) for c in centers])
    # splitting a true blob drops inertia by ~10%; crossing a real boundary
    # drops it by >60%, so a 15% threshold lands on the blob count
    fit, curve, saturated = elbow_select_k(
        X, k_min=2, k_max=8, tau_elbow=0.15, seed=0, restarts=10
    )
    assert not saturated
    assert fit.k == 4


def test_elbow_select_k_curve_non_increasing():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((80, 4))
    _, curve, _ = elbow_select_k(X, k_min=1, k_max=8, tau_elbow=0.0, seed=0, restarts=5)
    inertias = [j for _, j in curve]
    assert all(a >= b - 1e-9 for a, b in zip(inertias[:-1], inertias[1:]))


def test_elbow_select_k_range_validation():
    X = np.ones((5, 2))
    with pytest.raises(ValueError):
        elbow_select_k(X, k_min=3, k_max=3, tau_elbow=0.1)
    with pytest.raises(ValueError):
        elbow_select_k(X, k_min=2, k_max=9, tau_elbow=0.1)


def test_default_k_range():
    assert default_k_range(300) == (2, 30)
    assert default_k_range(1000) == (2, 50)
    assert default_k_range(25) == (2, 3)


# --- CSV round-trips ---


def test_clusters_csv_roundtrip(tmp_path):
    labels = np.array([0, 0, 2, 1, 1, 2])
    path = tmp_path / "clusters.csv"
    write_clusters(path, labels)
    assert np.array_equal(read_clusters(path), labels)


def test_elbow_csv_roundtrip(tmp_path):
    curve = [(2, 12.5), (3, 4.25), (4, 4.0)]
    path = tmp_path / "elbow.csv"
    write_elbow(path, curve)
    out = read_elbow(path)
    assert [k for k, _ in out] == [2, 3, 4]
    assert np.allclose([j for _, j in out], [12.5, 4.25, 4.0])
