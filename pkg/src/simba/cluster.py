"""Seeded k-means clustering of the reduced reference vectors and selection
of the most populated, most compact cluster."""

import numpy as np
from dataclasses import dataclass, field


@dataclass
class ClusterAssignment:
    labels: np.ndarray                 # (n_points,) int, in [0, k)
    centroids: np.ndarray              # (k, dim)
    k: int
    inertia: float                     # sum of squared distances to assigned centroids
    largest_cluster: np.ndarray        # point indices of the max-cardinality label
    mean_centroid_distance_largest: float
    inertia_history: np.ndarray = field(default=None, repr=False)
    selection_criteria: dict = None    # k -> compactness value, set by select_k

    @property
    def largest_label(self) -> int:
        return int(self.labels[self.largest_cluster[0]])


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (points ** 2).sum(axis=1)[:, None] + (centroids ** 2).sum(axis=1)[None, :]
    d -= 2.0 * points @ centroids.T
    return np.maximum(d, 0.0)


def kmeans_pp_init(points: np.ndarray, k: int, seed) -> np.ndarray:
    """k-means++ seeding: next centroid drawn with probability proportional to
    the squared distance to the nearest centroid chosen so far."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds number of points {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = rng.integers(n)
    d2 = _squared_distances(points, points[chosen[0]][None, :])[:, 0]
    d2[chosen[0]] = 0.0
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            target = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), target, side="right"))
            idx = min(idx, n - 1)
        else:
            # all remaining points coincide with chosen centroids
            unchosen = np.setdiff1d(np.arange(n), chosen[:j])
            idx = int(unchosen[rng.integers(len(unchosen))])
        chosen[j] = idx
        d2 = np.minimum(d2, _squared_distances(points, points[idx][None, :])[:, 0])
        d2[idx] = 0.0
    return points[chosen].copy()


def _lloyd(points, centroids, max_iter, tol):
    n, _ = points.shape
    k = centroids.shape[0]
    history = []
    labels = None
    prev_inertia = np.inf
    for _ in range(max_iter):
        labels = np.argmin(_squared_distances(points, centroids), axis=1)

        # repair empty clusters: move them onto the currently worst-fit points
        counts = np.bincount(labels, minlength=k)
        if np.any(counts == 0):
            dist_own = ((points - centroids[labels]) ** 2).sum(axis=1)
            order = np.argsort(dist_own)[::-1]
            used = 0
            for e in np.flatnonzero(counts == 0):
                centroids[e] = points[order[used]]
                labels[order[used]] = e
                used += 1
            labels = np.argmin(_squared_distances(points, centroids), axis=1)

        acc = np.zeros_like(centroids)
        np.add.at(acc, labels, points)
        counts = np.bincount(labels, minlength=k)
        centroids = acc / np.maximum(counts, 1)[:, None]

        inertia = float(((points - centroids[labels]) ** 2).sum())
        history.append(inertia)
        if np.isfinite(prev_inertia) and prev_inertia - inertia <= tol * max(prev_inertia, 1e-300):
            break
        prev_inertia = inertia
    return labels, centroids, history[-1], np.asarray(history)


def kmeans(points: np.ndarray, k: int, seed, max_iter: int = 300,
           tol: float = 1e-6, n_init: int = 10) -> ClusterAssignment:
    """Best of ``n_init`` seeded k-means++ / Lloyd runs, by final inertia.

    Restart seeds are spawned deterministically from ``seed``, so identical
    inputs always produce identical assignments.
    """
    points = np.asarray(points, dtype=np.float64)
    if k > points.shape[0]:
        raise ValueError(f"k={k} exceeds number of points {points.shape[0]}")
    ss = seed if isinstance(seed, np.random.SeedSequence) \
        else np.random.SeedSequence(seed)
    children = ss.spawn(n_init)
    best = None
    for child in children:
        init = kmeans_pp_init(points, k, child)
        labels, centroids, inertia, history = _lloyd(points, init, max_iter, tol)
        if best is None or inertia < best[2]:
            best = (labels, centroids, inertia, history)

    labels, centroids, inertia, history = best
    counts = np.bincount(labels, minlength=k)
    largest_label = int(np.argmax(counts))        # ties resolve to lowest label
    largest = np.flatnonzero(labels == largest_label)
    mean_dist = float(np.linalg.norm(points[largest] - centroids[largest_label],
                                     axis=1).mean())
    return ClusterAssignment(labels=labels, centroids=centroids, k=k,
                             inertia=inertia, largest_cluster=largest,
                             mean_centroid_distance_largest=mean_dist,
                             inertia_history=history)


def select_k(points: np.ndarray, k_min: int = 10, k_max: int = 14, seed=0,
             n_init: int = 10):
    """Pick k in [k_min, k_max] minimizing the mean centroid distance of the
    most populated cluster; ties go to the smaller k.

    Returns (k_star, ClusterAssignment); the assignment carries the per-k
    criterion values in ``selection_criteria``.
    """
    points = np.asarray(points, dtype=np.float64)
    if k_max > points.shape[0]:
        raise ValueError(f"k_max={k_max} exceeds number of points {points.shape[0]}")
    if k_min > k_max:
        raise ValueError("k_min must not exceed k_max")
    children = np.random.SeedSequence(seed).spawn(k_max - k_min + 1)
    criteria = {}
    assignments = {}
    for k, child in zip(range(k_min, k_max + 1), children):
        a = kmeans(points, k, child, n_init=n_init)
        criteria[k] = a.mean_centroid_distance_largest
        assignments[k] = a
    k_star = min(criteria, key=lambda k: (criteria[k], k))
    best = assignments[k_star]
    best.selection_criteria = criteria
    return k_star, best


def expand_to_readouts(assignment: ClusterAssignment, traj,
                       exclude_si: bool = True) -> np.ndarray:
    """Flat spoke indices of all readouts in the largest cluster's interleaves.

    Every readout inherits its interleaf's cluster; the SI navigator readouts
    are excluded from the imaging selection by default.
    """
    if assignment.labels.shape[0] != traj.n_interleaves:
        raise ValueError("assignment does not cover the trajectory's interleaves")
    readouts = np.arange(traj.n_readouts)
    if exclude_si:
        readouts = readouts[readouts != traj.si_index]
    idx = (assignment.largest_cluster[:, None] * traj.n_readouts +
           readouts[None, :])
    return np.sort(idx.reshape(-1))
