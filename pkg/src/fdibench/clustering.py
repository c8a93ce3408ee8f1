"""k-means, silhouette score, and the windowed k-means detector.

Lloyd's algorithm with k-means++ seeding, run to an assignment fixpoint (at
most 300 iterations).  An empty cluster is re-seeded at the point farthest
from its assigned centroid.  The within-cluster sum of squares is checked to
be non-increasing across iterations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import WindowMatrix

MAX_ITER = 300


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class Clustering:
    k: int
    assignments: np.ndarray   # (n,) int
    centroids: np.ndarray     # (k, d)
    objective: float          # within-cluster sum of squares
    n_iter: int


@dataclass(frozen=True)
class SilhouetteReport:
    values: np.ndarray        # per-point s in [-1, 1]
    mean: float


@dataclass(frozen=True)
class DetectionVerdict:
    window_start: float
    fired: bool
    flagged: tuple            # sensor ids in the minority cluster (if fired)
    mean_silhouette: float
    minority_size: int
    tie: bool = False


def wcss(points: np.ndarray, assignments: np.ndarray, centroids: np.ndarray) -> float:
    return float(((points - centroids[assignments]) ** 2).sum())


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    idx = rng.integers(n)
    centroids[0] = points[idx]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans(points: np.ndarray, k: int, seed: int = 0, n_init: int = 10) -> Clustering:
    """Best of ``n_init`` seeded k-means++ Lloyd runs (lowest objective wins)."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if n < k:
        raise ClusteringError(f"{n} points but k={k}")
    if not np.all(np.isfinite(points)):
        raise ClusteringError("non-finite coordinates")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        cand = _lloyd(points, k, rng)
        if best is None or cand.objective < best.objective - 1e-15:
            best = cand
    return best


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator) -> Clustering:
    n = points.shape[0]
    centroids = _kmeanspp_init(points, k, rng)

    assignments = None
    prev_obj = np.inf
    for it in range(1, MAX_ITER + 1):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        # empty cluster: re-seed at the point farthest from its centroid
        for j in range(k):
            if not (new_assign == j).any():
                far = d2[np.arange(n), new_assign].argmax()
                centroids[j] = points[far]
                d2[:, j] = ((points - centroids[j]) ** 2).sum(axis=1)
                new_assign = d2.argmin(axis=1)
        if assignments is not None and np.array_equal(new_assign, assignments):
            assignments = new_assign
            break
        assignments = new_assign
        for j in range(k):
            centroids[j] = points[assignments == j].mean(axis=0)
        obj = wcss(points, assignments, centroids)
        if obj > prev_obj + 1e-9:
            raise ClusteringError("objective increased during Lloyd iteration")
        prev_obj = obj
    return Clustering(
        k=k,
        assignments=assignments,
        centroids=centroids,
        objective=wcss(points, assignments, centroids),
        n_iter=it,
    )


def silhouette(points: np.ndarray, clustering: Clustering) -> SilhouetteReport:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if n < 2:
        raise ClusteringError("silhouette needs at least 2 points")
    labels = clustering.assignments
    present = np.unique(labels)
    if present.size < 2:
        raise ClusteringError("silhouette undefined for a single cluster")
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    s = np.zeros(n)
    for i in range(n):
        own = labels == labels[i]
        n_own = own.sum()
        if n_own == 1:
            s[i] = 0.0  # singleton-cluster convention
            continue
        a = dist[i, own].sum() / (n_own - 1)
        b = min(dist[i, labels == c].mean() for c in present if c != labels[i])
        denom = max(a, b)
        s[i] = 0.0 if denom == 0 else (b - a) / denom
    return SilhouetteReport(values=s, mean=float(s.mean()))


def silhouette_mean(points: np.ndarray, clustering: Clustering) -> float:
    return silhouette(points, clustering).mean


def kmeans_window_detector(
    window: WindowMatrix, threshold: float = 0.8, seed: int = 0
) -> DetectionVerdict:
    """Cluster the window's sensors (rows) with k=2 and gate on silhouette.

    Fires iff the mean silhouette reaches the threshold; the flagged set is
    the minority cluster.  An exact size tie goes to the cluster whose points
    lie farther (on average) from the other cluster's centroid.
    """
    pts = window.data
    if pts.shape[0] < 2:
        raise ClusteringError("detector needs at least 2 sensors")
    if np.allclose(pts, pts[0], rtol=0, atol=0):
        return DetectionVerdict(window.start_time, False, (), 0.0, 0)
    cl = kmeans(pts, 2, seed=seed)
    rep = silhouette(pts, cl)
    sizes = np.bincount(cl.assignments, minlength=2)
    tie = sizes[0] == sizes[1]
    if tie:
        # mean distance of each cluster's points to the *other* centroid
        d = [np.linalg.norm(pts[cl.assignments == j] - cl.centroids[1 - j], axis=1).mean()
             for j in (0, 1)]
        minority = int(np.argmax(d))
    else:
        minority = int(np.argmin(sizes))
    fired = rep.mean >= threshold
    flagged = tuple(
        window.sensor_ids[i] for i in np.where(cl.assignments == minority)[0]
    ) if fired else ()
    return DetectionVerdict(
        window_start=window.start_time,
        fired=bool(fired),
        flagged=flagged,
        mean_silhouette=rep.mean,
        minority_size=int(sizes[minority]),
        tie=bool(tie),
    )
