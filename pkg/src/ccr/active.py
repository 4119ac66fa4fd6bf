"""Acquisition strategies over a fitted soft classifier.

All strategies target the classifier's decision boundaries, where a
piecewise model is least certain: pick reservoir candidates with the lowest
top-class probability, minimize that probability inside the convex hull of
the initial inputs, bisect segments between differently-classified
neighbors, or perturb chosen centers through a Markov kernel. The driver
loop alternates acquisition, oracle labeling, and periodic pipeline refits.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .data import Dataset
from .pipeline import CcrConfig, CcrModel, ccr_fit, evaluate

log = logging.getLogger(__name__)

SCORE_KINDS = ("uncertainty", "entropy", "margin")


class HullSolverError(RuntimeError):
    """Raised when hull membership could not be decided (distinct from 'outside')."""


@dataclass(frozen=True)
class AcquisitionScore:
    kind: str
    value: float


def _proba_matrix(classifier, X: np.ndarray) -> np.ndarray:
    proba = np.asarray(classifier.predict_proba(np.atleast_2d(X)), dtype=float)
    return np.atleast_2d(proba)


def score_values(classifier, X: np.ndarray, kind: str) -> np.ndarray:
    """Raw score per row: max probability, entropy, or top-two margin."""
    proba = _proba_matrix(classifier, X)
    if kind == "uncertainty":
        return proba.max(axis=1)
    if kind == "entropy":
        p = np.clip(proba, 1e-300, None)
        return -(p * np.log(p)).sum(axis=1)
    if kind == "margin":
        top2 = np.sort(proba, axis=1)[:, -2:]
        return top2[:, 1] - top2[:, 0]
    raise ValueError(f"unknown score kind {kind!r}")


def selection_keys(classifier, X: np.ndarray, kind: str) -> np.ndarray:
    """Scores oriented so that smaller always means more informative."""
    values = score_values(classifier, X, kind)
    return -values if kind == "entropy" else values


def score(classifier, x: np.ndarray, kind: str) -> AcquisitionScore:
    """Score a single point."""
    return AcquisitionScore(kind, float(score_values(classifier, x, kind)[0]))


def needs_refit(classifier, x: np.ndarray, threshold: float = 0.9) -> bool:
    """Online gating: flag a query whose top-class probability is low."""
    return bool(score_values(classifier, x, "uncertainty")[0] < threshold)


@dataclass
class Reservoir:
    """Finite candidate pool; selected points are consumed exactly once."""

    candidates: np.ndarray
    consumed: np.ndarray = field(default=None)

    def __post_init__(self):
        self.candidates = np.atleast_2d(np.asarray(self.candidates, dtype=float))
        if self.consumed is None:
            self.consumed = np.zeros(self.candidates.shape[0], dtype=bool)

    @property
    def remaining(self) -> int:
        return int((~self.consumed).sum())


def select_from_reservoir(classifier, reservoir: Reservoir, batch: int, kind: str = "uncertainty") -> np.ndarray:
    """The `batch` most informative unconsumed candidates, marked consumed."""
    if reservoir.candidates.shape[0] == 0:
        raise ValueError("empty reservoir")
    open_idx = np.flatnonzero(~reservoir.consumed)
    if batch > open_idx.size:
        raise ValueError(f"batch {batch} exceeds {open_idx.size} unconsumed candidates")
    keys = selection_keys(classifier, reservoir.candidates[open_idx], kind)
    order = np.argsort(keys, kind="stable")[:batch]
    chosen = open_idx[order]
    reservoir.consumed[chosen] = True
    return reservoir.candidates[chosen]


@dataclass
class HullDomain:
    """Convex hull of a vertex set, queried through a feasibility solve."""

    vertices: np.ndarray

    def __post_init__(self):
        self.vertices = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        V = self.vertices
        self._stacked = np.vstack([V.T, np.ones(V.shape[0])])
        self._lo = V.min(axis=0)
        self._hi = V.max(axis=0)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]


def hull_contains(domain: HullDomain, z: np.ndarray, tol: float = 1e-8) -> bool:
    """True iff z is a convex combination of the vertices.

    Solves min |A w - b| over w >= 0 with A = [V^T; 1^T], b = [z; 1]; the
    point is inside when the residual vanishes to tolerance.
    """
    z = np.asarray(z, dtype=float).ravel()
    if z.shape[0] != domain.dim:
        raise ValueError(f"point has dimension {z.shape[0]}, hull has {domain.dim}")
    margin = tol * (1.0 + np.abs(z))
    if np.any(z < domain._lo - margin) or np.any(z > domain._hi + margin):
        return False  # cheap reject: hull is inside the bounding box
    b = np.concatenate([z, [1.0]])
    try:
        _, resid = nnls(domain._stacked, b)
    except Exception as exc:  # solver failure is not the same as "outside"
        raise HullSolverError(f"containment solve failed: {exc}") from exc
    return bool(resid <= tol * (1.0 + np.linalg.norm(b)))


def _top_proba(classifier, z: np.ndarray) -> float:
    return float(_proba_matrix(classifier, z[None, :]).max())


def select_in_hull(
    classifier,
    domain: HullDomain,
    starts: int = 8,
    seed: int = 0,
    max_passes: int = 40,
) -> np.ndarray:
    """Minimize the top-class probability inside the hull.

    Multi-start coordinate descent from random convex combinations; moves
    that would leave the hull are rejected. Any local minimizer is an
    acceptable acquisition, so no global search is attempted.
    """
    rng = np.random.default_rng(seed)
    V = domain.vertices
    m, d = V.shape
    span = V.max(axis=0) - V.min(axis=0)
    span = np.where(span > 0, span, 1.0)
    best_z, best_f = None, np.inf
    for _ in range(starts):
        pick = rng.choice(m, size=min(m, d + 2), replace=False)
        weights = rng.dirichlet(np.ones(pick.size))
        z = weights @ V[pick]
        if not hull_contains(domain, z):
            continue
        f = _top_proba(classifier, z)
        step = 0.25
        for _ in range(max_passes):
            improved = False
            for j in range(d):
                for sign in (1.0, -1.0):
                    cand = z.copy()
                    cand[j] += sign * step * span[j]
                    fc = _top_proba(classifier, cand)
                    if fc < f - 1e-12 and hull_contains(domain, cand):
                        z, f = cand, fc
                        improved = True
            if not improved:
                step *= 0.5
                if step < 1e-4:
                    break
        if f < best_f:
            best_z, best_f = z, f
    if best_z is None:
        raise RuntimeError("no admissible start point found inside the hull")
    return best_z


def _golden_section(fn, budget: int = 31):
    """Minimize fn on [0,1] with exactly `budget` evaluations."""
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, 1.0
    x1 = b - inv_phi * (b - a)
    x2 = a + inv_phi * (b - a)
    f1, f2 = fn(x1), fn(x2)
    best_x, best_f = (x1, f1) if f1 <= f2 else (x2, f2)
    for _ in range(budget - 2):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv_phi * (b - a)
            f1 = fn(x1)
            if f1 < best_f:
                best_x, best_f = x1, f1
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv_phi * (b - a)
            f2 = fn(x2)
            if f2 < best_f:
                best_x, best_f = x2, f2
    return best_x, best_f


@dataclass(frozen=True)
class BoundaryPairSet:
    """Index pairs whose endpoints carry distinct hard labels."""

    pairs: tuple[tuple[int, int], ...]
    k: int


def find_boundary_pairs(classifier, data: np.ndarray, k: int) -> BoundaryPairSet:
    """Pairs (i, j) where j is among i's k nearest neighbors with a different
    predicted class; (i, j) and (j, i) are deduplicated."""
    if k < 1:
        raise ValueError("k must be >= 1")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    labels = np.argmax(_proba_matrix(classifier, data), axis=1)
    d2 = (
        (data * data).sum(axis=1)[:, None]
        - 2.0 * data @ data.T
        + (data * data).sum(axis=1)[None, :]
    )
    np.fill_diagonal(d2, np.inf)
    kk = min(k, n - 1)
    neighbor_idx = np.argsort(d2, axis=1, kind="stable")[:, :kk]
    pairs = set()
    for i in range(n):
        for j in neighbor_idx[i]:
            if labels[i] != labels[int(j)]:
                pairs.add((min(i, int(j)), max(i, int(j))))
    return BoundaryPairSet(tuple(sorted(pairs)), k)


def select_boundary_pairs(classifier, data: np.ndarray, k: int, domain: HullDomain) -> np.ndarray:
    """One refined point per cross-class neighbor pair.

    Each segment between a pair is searched by golden section (31
    evaluations) for the lowest top-class probability; minimizers outside
    the hull are dropped. An empty result signals classifier unanimity.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    pair_set = find_boundary_pairs(classifier, data, k)
    out = []
    for i, j in pair_set.pairs:
        x, y = data[i], data[j]

        def along(lam: float) -> float:
            return _top_proba(classifier, lam * x + (1.0 - lam) * y)

        lam_best, _ = _golden_section(along, budget=31)
        z = lam_best * x + (1.0 - lam_best) * y
        if hull_contains(domain, z):
            out.append(z)
    if not out:
        return np.empty((0, data.shape[1]))
    return np.vstack(out)


@dataclass
class PerturbKernel:
    """Markov kernel for candidate generation around a center point.

    kinds: uniform_box (side length `width`), gaussian (isotropic std
    `width`), local_covariance (sample covariance of the `neighbors`
    nearest reference rows; falls back to isotropic when degenerate).
    """

    kind: str = "gaussian"
    width: float = 0.1
    samples_per_center: int = 1
    neighbors: int = 10
    reference: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("uniform_box", "gaussian", "local_covariance"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.samples_per_center < 1:
            raise ValueError("samples_per_center must be >= 1")


def _local_covariance(center: np.ndarray, reference: np.ndarray, k: int) -> np.ndarray | None:
    d2 = ((reference - center) ** 2).sum(axis=1)
    near = reference[np.argsort(d2, kind="stable")[: max(2, k)]]
    cov = np.cov(near, rowvar=False)
    cov = np.atleast_2d(cov)
    if not np.all(np.isfinite(cov)):
        return None
    try:
        return np.linalg.cholesky(cov + 1e-12 * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError:
        return None


def perturb_candidates(kernel: PerturbKernel, centers: np.ndarray, seed: int = 0) -> np.ndarray:
    """samples_per_center draws around each center; deterministic under seed."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    rng = np.random.default_rng(seed)
    n = kernel.samples_per_center
    d = centers.shape[1]
    out = []
    for center in centers:
        if kernel.kind == "uniform_box":
            delta = rng.uniform(-0.5 * kernel.width, 0.5 * kernel.width, size=(n, d))
            out.append(center + delta)
        elif kernel.kind == "gaussian":
            out.append(center + kernel.width * rng.standard_normal((n, d)))
        else:
            if kernel.reference is None:
                raise ValueError("local_covariance kernel needs a reference matrix")
            chol = _local_covariance(center, np.atleast_2d(kernel.reference), kernel.neighbors)
            if chol is None:
                warnings.warn("degenerate local covariance; falling back to isotropic")
                out.append(center + kernel.width * rng.standard_normal((n, d)))
            else:
                out.append(center + rng.standard_normal((n, d)) @ chol.T)
    return np.vstack(out)


@dataclass
class ActiveConfig:
    """Driver configuration for active_loop."""

    strategy: str = "reservoir"
    score_kind: str = "uncertainty"
    reservoir: np.ndarray | None = None
    k_neighbors: int = 5
    kernel: PerturbKernel | None = None
    hull_starts: int = 8
    boundary_regen_every: int = 5
    ccr: CcrConfig = field(default_factory=CcrConfig)
    test_data: Dataset | None = None
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in ("reservoir", "hull", "boundary", "perturb"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.score_kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.score_kind!r}")


def _history_entry(step, train_n, model, cfg, strategy, added):
    entry = {
        "step": step,
        "n_train": train_n,
        "l2": None,
        "r2": None,
        "strategy": strategy,
        "points_added": added,
    }
    if cfg.test_data is not None:
        metrics = evaluate(model, cfg.test_data)
        entry["l2"] = metrics.l2
        entry["r2"] = metrics.r2
    return entry


def _acquire(model, train_inputs, cfg: ActiveConfig, domain, reservoir, batch, step):
    step_seed = int(np.random.SeedSequence([cfg.seed, step]).generate_state(1)[0])
    strategy = cfg.strategy
    if strategy == "reservoir":
        take = min(batch, reservoir.remaining)
        if take == 0:
            return np.empty((0, domain.dim)), strategy
        return select_from_reservoir(model, reservoir, take, cfg.score_kind), strategy

    if strategy == "boundary" and step % cfg.boundary_regen_every != 0:
        points = select_boundary_pairs(model, train_inputs, cfg.k_neighbors, domain)
        if points.shape[0] > 0:
            keys = selection_keys(model, points, cfg.score_kind)
            points = points[np.argsort(keys, kind="stable")[:batch]]
            return points, "boundary"
        strategy = "hull"  # unanimity: regenerate via the hull search
    elif strategy == "boundary":
        strategy = "hull"  # periodic regeneration

    if strategy == "perturb":
        if cfg.kernel is None:
            raise ValueError("perturb strategy needs a kernel")
        keys = selection_keys(model, train_inputs, cfg.score_kind)
        centers = train_inputs[np.argsort(keys, kind="stable")[:batch]]
        kernel = cfg.kernel
        if kernel.kind == "local_covariance" and kernel.reference is None:
            kernel = PerturbKernel(kernel.kind, kernel.width, kernel.samples_per_center,
                                   kernel.neighbors, train_inputs)
        cand = perturb_candidates(kernel, centers, seed=step_seed)
        cand = np.asarray([z for z in cand if hull_contains(domain, z)])
        if cand.shape[0] == 0:
            return centers[:batch], "perturb"  # centers are training points
        keys = selection_keys(model, cand, cfg.score_kind)
        return cand[np.argsort(keys, kind="stable")[:batch]], "perturb"

    points = []
    for i in range(batch):
        sub_seed = int(np.random.SeedSequence([cfg.seed, step, i]).generate_state(1)[0])
        points.append(select_in_hull(model, domain, starts=cfg.hull_starts, seed=sub_seed))
    return np.vstack(points), "hull"


def active_loop(
    oracle,
    initial: Dataset,
    cfg: ActiveConfig,
    budget: int,
    refit_every: int,
) -> tuple[CcrModel, list[dict]]:
    """Alternate acquisition, oracle labeling, and pipeline refits.

    The oracle maps one input point to its scalar label; a failing call
    skips that point (logged). Budget is consumed in floor(budget /
    refit_every) whole batches so the history always holds one entry per
    refit plus the initial fit.
    """
    if refit_every < 1:
        raise ValueError("refit_every must be >= 1")
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if cfg.strategy == "reservoir" and cfg.reservoir is None:
        raise ValueError("reservoir strategy needs cfg.reservoir candidates")

    train = initial
    model = ccr_fit(train, cfg.ccr)
    domain = HullDomain(initial.inputs)
    reservoir = Reservoir(cfg.reservoir) if cfg.reservoir is not None else None
    history = [_history_entry(0, train.n, model, cfg, cfg.strategy, 0)]

    for step in range(1, budget // refit_every + 1):
        points, used = _acquire(model, train.inputs, cfg, domain, reservoir, refit_every, step)
        xs, ys = [], []
        for p in points:
            try:
                ys.append(float(oracle(p)))
                xs.append(p)
            except Exception as exc:
                log.warning("oracle failed at %s: %s", p, exc)
        if xs:
            train = Dataset(
                np.vstack([train.inputs, np.vstack(xs)]),
                np.concatenate([train.outputs, np.asarray(ys)]),
            )
            model = ccr_fit(train, cfg.ccr)
        history.append(_history_entry(step, train.n, model, cfg, used, len(xs)))
    return model, history
