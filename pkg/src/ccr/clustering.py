"""K-means over joint (x, y) points and elbow-based cluster-count selection.

Lloyd iteration with greedy farthest-point seeding, best-of-restarts by
inertia, and empty-cluster repair. Inertia is the within-cluster sum of
squared Euclidean distances to the assigned centroid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ClusterModel:
    """Fitted centroids (L, m) with the final inertia.

    inertia_history holds the per-iteration inertia of the winning restart,
    measured at each assignment step (monotone non-increasing).
    """

    centroids: np.ndarray
    inertia: float
    inertia_history: tuple[float, ...] = field(default=(), compare=False)

    @property
    def num_clusters(self) -> int:
        return self.centroids.shape[0]

    def to_dict(self) -> dict:
        return {"centroids": self.centroids.tolist(), "inertia": self.inertia}

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        return cls(np.asarray(d["centroids"], dtype=float), float(d["inertia"]))


@dataclass(frozen=True)
class ElbowReport:
    """Inertia curve over candidate cluster counts and the selected elbow."""

    candidate_L: tuple[int, ...]
    inertias: tuple[float, ...]
    chosen_L: int
    no_clear_elbow: bool = False

    def to_dict(self) -> dict:
        return {
            "candidate_L": list(self.candidate_L),
            "inertias": list(self.inertias),
            "chosen_L": self.chosen_L,
            "no_clear_elbow": self.no_clear_elbow,
        }


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # |p - c|^2 = |p|^2 - 2 p.c + |c|^2, clamped at 0 against rounding
    d2 = (
        (points * points).sum(axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + (centroids * centroids).sum(axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _farthest_point_init(points: np.ndarray, L: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    min_d2 = _squared_distances(points, points[chosen[-1]][None, :]).ravel()
    while len(chosen) < L:
        chosen.append(int(np.argmax(min_d2)))
        d2 = _squared_distances(points, points[chosen[-1]][None, :]).ravel()
        np.minimum(min_d2, d2, out=min_d2)
    return points[chosen].copy()


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int):
    n, L = points.shape[0], centroids.shape[0]
    labels = None
    history: list[float] = []
    for _ in range(max_iter):
        d2 = _squared_distances(points, centroids)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=L)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        empties = np.flatnonzero(~nonempty)
        if empties.size:
            own = _squared_distances(points, centroids)[np.arange(n), labels]
            for l in empties:
                far = int(np.argmax(own))
                centroids[l] = points[far]
                own[far] = -1.0  # do not reuse for another empty cluster
    else:
        d2 = _squared_distances(points, centroids)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), labels].sum()))
    return centroids, labels, history


def kmeans_fit(
    points: np.ndarray,
    L: int,
    seed: int = 0,
    restarts: int = 8,
    max_iter: int = 300,
    init_centroids: np.ndarray | None = None,
) -> ClusterModel:
    """Fit L centroids by Lloyd iteration, keeping the best of `restarts` runs.

    Each restart seeds with one uniform-random point followed by greedy
    farthest-point picks. Empty clusters are repaired by reseeding to the
    point farthest from its assigned centroid. `init_centroids` bypasses
    seeding for a single warm-started run (test/nesting hook).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not np.all(np.isfinite(points)):
        raise ValueError("points contain non-finite values")
    n = points.shape[0]
    if not 1 <= L <= n:
        raise ValueError(f"need 1 <= L <= N, got L={L}, N={n}")
    if max_iter < 1 or restarts < 1:
        raise ValueError("max_iter and restarts must be >= 1")

    if init_centroids is not None:
        init = np.atleast_2d(np.asarray(init_centroids, dtype=float)).copy()
        if init.shape != (L, points.shape[1]):
            raise ValueError(f"init_centroids must have shape ({L}, {points.shape[1]})")
        centroids, _, history = _lloyd(points, init, max_iter)
        return ClusterModel(centroids, history[-1], tuple(history))

    best: ClusterModel | None = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        centroids, _, history = _lloyd(points, _farthest_point_init(points, L, rng), max_iter)
        if best is None or history[-1] < best.inertia:
            best = ClusterModel(centroids, history[-1], tuple(history))
    return best


def assign_labels(model: ClusterModel, points: np.ndarray) -> np.ndarray:
    """Nearest-centroid label per point; ties go to the lowest index."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != model.centroids.shape[1]:
        raise ValueError(
            f"points have {points.shape[1]} columns, centroids {model.centroids.shape[1]}"
        )
    return np.argmin(_squared_distances(points, model.centroids), axis=1)


def elbow_select(
    points: np.ndarray,
    L_max: int,
    seed: int = 0,
    restarts: int = 8,
    max_iter: int = 300,
) -> ElbowReport:
    """Run K-means for L = 1..L_max and pick the sharpest kink in the curve.

    The choice maximizes the discrete second difference
    I(L-1) - 2 I(L) + I(L+1) over 2 <= L <= L_max - 1. When the largest
    second difference is below 5% of I(1) the curve has no clear elbow and
    the report flags it (the chosen value is still returned for overriding).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if L_max < 3:
        raise ValueError("L_max must be >= 3 to evaluate a second difference")
    if L_max > points.shape[0]:
        raise ValueError(f"L_max={L_max} exceeds the number of points {points.shape[0]}")
    candidates = list(range(1, L_max + 1))
    inertias = [
        kmeans_fit(points, L, seed=seed, restarts=restarts, max_iter=max_iter).inertia
        for L in candidates
    ]
    curve = np.asarray(inertias)
    second = curve[:-2] - 2.0 * curve[1:-1] + curve[2:]  # indexed by L = 2..L_max-1
    best = int(np.argmax(second))
    chosen = candidates[best + 1]
    no_elbow = bool(second[best] < 0.05 * curve[0])
    return ElbowReport(tuple(candidates), tuple(inertias), chosen, no_elbow)
