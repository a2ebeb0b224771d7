"""K-means over frame descriptors and elbow-based choice of K.

Plain Lloyd iterations with k-means++ seeding and best-of-restarts
selection by inertia.  Distances are squared Euclidean; descriptors are
L2-normalized upstream, where Euclidean and cosine orderings agree.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError


@dataclass
class Clustering:
    """Result of one k-means fit.

    ``centroids[labels[i]]`` is the centroid assigned to point i and every
    cluster id in [0, K) has at least one member.  ``history`` logs the
    assignment cost after each Lloyd iteration.
    """

    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    history: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _plusplus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: spread initial centers by squared distance."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    idx = int(rng.integers(n))
    centers[0] = X[idx]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # All remaining mass at chosen centers; any point works.
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[c] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[c]) ** 2, axis=1))
    return centers


def _assign(X: np.ndarray, centers: np.ndarray):
    """Nearest-center labels and the squared distances to them."""
    # ||x||^2 - 2 x.c + ||c||^2, clipped: roundoff can dip below zero.
    d2 = (
        np.sum(X**2, axis=1)[:, None]
        - 2.0 * (X @ centers.T)
        + np.sum(centers**2, axis=1)[None, :]
    )
    np.clip(d2, 0.0, None, out=d2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(X.shape[0]), labels]


def _repair_empty(labels: np.ndarray, point_d2: np.ndarray, k: int) -> np.ndarray:
    """Give each empty cluster the point currently farthest from its center."""
    counts = np.bincount(labels, minlength=k)
    for cid in np.flatnonzero(counts == 0):
        donor = int(np.argmax(point_d2))
        labels[donor] = cid
        point_d2[donor] = 0.0
        counts = np.bincount(labels, minlength=k)
    return labels


def _lloyd(X: np.ndarray, k: int, rng, max_iters: int, tol: float):
    centers = _plusplus_init(X, k, rng)
    history = []
    prev_cost = np.inf
    for _ in range(max_iters):
        labels, point_d2 = _assign(X, centers)
        labels = _repair_empty(labels, point_d2, k)
        cost = float(point_d2.sum())
        history.append(cost)
        new_centers = np.empty_like(centers)
        for c in range(k):
            new_centers[c] = X[labels == c].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift < tol:
            break
        # Duplicate points can make empty-cluster repair oscillate while the
        # cost stays put; a stalled cost is as converged as we will get.
        if abs(prev_cost - cost) <= 1e-12 * max(1.0, cost):
            break
        prev_cost = cost
    # Make labels/centers/inertia mutually consistent: one last assignment,
    # then centers as the exact member means.
    labels, point_d2 = _assign(X, centers)
    labels = _repair_empty(labels, point_d2, k)
    for c in range(k):
        centers[c] = X[labels == c].mean(axis=0)
    _, point_d2 = _assign(X, centers)
    inertia = float(point_d2.sum())
    return labels, centers, inertia, history


def kmeans(
    descriptors: np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-4,
    restarts: int = 10,
) -> Clustering:
    """Best-of-restarts k-means.

    Each restart runs Lloyd's algorithm from a fresh k-means++ seeding;
    the run with the smallest inertia wins (first winner kept on ties, so
    the result is deterministic given ``seed``).
    """
    X = np.asarray(descriptors, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("descriptors must be a non-empty N x d matrix")
    n = X.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds point count {n}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")

    best = None
    for r in range(restarts):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, r))))
        labels, centers, inertia, history = _lloyd(X, k, rng, max_iters, tol)
        if best is None or inertia < best.inertia:
            best = Clustering(labels, centers, inertia, history)
    return best


def select_elbow(curve, tau_elbow: float):
    """Apply the relative-drop rule to an inertia curve.

    ``curve`` is a list of (k, inertia) with consecutive k.  Returns
    ``(k, saturated)``: the smallest k whose relative drop to the next
    point, (J(k) - J(k+1)) / J(k), falls below ``tau_elbow``.  A zero
    inertia counts as zero drop.  If no k qualifies the curve never
    flattened; the largest k is returned with ``saturated=True``.
    """
    if len(curve) < 2:
        return curve[0][0], False
    for (k, j0), (_, j1) in zip(curve[:-1], curve[1:]):
        drop = (j0 - j1) / j0 if j0 > 0 else 0.0
        if drop < tau_elbow:
            return k, False
    return curve[-1][0], True


def default_k_range(n: int, k_min: int = 2, k_cap: int = 50):
    """Search range for K: [k_min, min(n/10, k_cap)], clamped to valid."""
    k_max = min(max(n // 10, k_min + 1), k_cap, n)
    k_min = min(k_min, k_max - 1) if k_max > 1 else 1
    return k_min, k_max


def elbow_select_k(
    descriptors: np.ndarray,
    k_min: int = 2,
    k_max: int = None,
    tau_elbow: float = 0.1,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-4,
    restarts: int = 10,
):
    """Pick K by running k-means over a range and finding the elbow.

    Returns ``(clustering_at_k, curve, saturated)`` where ``curve`` is the
    list of (k, inertia) actually evaluated.  ``saturated`` flags a curve
    that never flattened below ``tau_elbow``.
    """
    X = np.asarray(descriptors, dtype=float)
    n = X.shape[0]
    if k_max is None:
        k_min, k_max = default_k_range(n, k_min)
    if not (1 <= k_min < k_max <= n):
        raise ValueError(f"need 1 <= k_min < k_max <= N, got [{k_min}, {k_max}], N={n}")

    fits = {}
    curve = []
    for k in range(k_min, k_max + 1):
        fit = kmeans(X, k, seed=seed, max_iters=max_iters, tol=tol, restarts=restarts)
        fits[k] = fit
        curve.append((k, fit.inertia))
    k_sel, saturated = select_elbow(curve, tau_elbow)
    return fits[k_sel], curve, saturated


# ---------------------------------------------------------------------------
# artifacts


def write_clusters(path, labels) -> None:
    with open(path, "w") as fh:
        fh.write("frame_id,cluster_id\n")
        for i, lab in enumerate(labels):
            fh.write(f"{i},{int(lab)}\n")


def read_clusters(path) -> np.ndarray:
    labels = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "frame_id,cluster_id":
            raise DataFormatError(f"bad clusters header: {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DataFormatError(f"line {lineno}: expected 2 fields")
            labels.append(int(parts[1]))
    return np.array(labels, dtype=int)


def write_elbow(path, curve) -> None:
    with open(path, "w") as fh:
        fh.write("k,inertia\n")
        for k, inertia in curve:
            fh.write(f"{k},{inertia:.9f}\n")


def read_elbow(path):
    curve = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "k,inertia":
            raise DataFormatError(f"bad elbow header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            k_s, j_s = line.split(",")
            curve.append((int(k_s), float(j_s)))
    return curve
