"""Bagged CART forests for classification (Gini) and regression (variance).

Trees grow on bootstrap resamples until leaves are pure or hit min_leaf;
every split draws a fresh random feature subset. When none of the drawn
features admits a valid split the search continues through the remaining
features, so a tree always interpolates distinct training points.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np


@dataclass
class ForestConfig:
    """Forest knobs. features_per_split defaults to ceil(d / 3) when None.
    bootstrap=False is a test hook making a 1-tree forest equal its tree."""

    num_trees: int = 100
    features_per_split: int | None = None
    min_leaf: int = 1
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")

    def resolved_features(self, d: int) -> int:
        k = self.features_per_split if self.features_per_split is not None else ceil(d / 3)
        if not 1 <= k <= d:
            raise ValueError(f"features_per_split must be in [1, {d}], got {k}")
        return k

    def to_dict(self) -> dict:
        return {
            "num_trees": self.num_trees,
            "features_per_split": self.features_per_split,
            "min_leaf": self.min_leaf,
            "seed": self.seed,
            "bootstrap": self.bootstrap,
        }


@dataclass
class _Tree:
    """Flat node arrays; feature == -1 marks a leaf. values holds the leaf
    payload for every node id (class frequencies or the mean target)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    values: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return node

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "_Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=int),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=int),
            right=np.asarray(d["right"], dtype=int),
            values=np.asarray(d["values"], dtype=float),
        )


def _best_split_on_feature(x: np.ndarray, y, min_leaf: int, classes: int | None):
    """Best (score, threshold) on one feature, or None when no valid split.

    Classification minimizes weighted Gini via cumulative class counts;
    regression minimizes total SSE via cumulative sums.
    """
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cut_ok = xs[:-1] < xs[1:]  # split between positions k-1 and k
    k = np.arange(1, n)
    valid = cut_ok & (k >= min_leaf) & (n - k >= min_leaf)
    if not valid.any():
        return None

    if classes is None:
        ys = y[order]
        c1 = np.cumsum(ys)[:-1]
        c2 = np.cumsum(ys * ys)[:-1]
        t1 = ys.sum()
        t2 = (ys * ys).sum()
        left_sse = c2 - c1 * c1 / k
        right_sse = (t2 - c2) - (t1 - c1) ** 2 / (n - k)
        score = left_sse + right_sse
    else:
        onehot = np.zeros((n, classes))
        onehot[np.arange(n), y[order]] = 1.0
        c = np.cumsum(onehot, axis=0)[:-1]
        total = c[-1] + onehot[-1]
        left_sq = (c * c).sum(axis=1)
        right = total[None, :] - c
        right_sq = (right * right).sum(axis=1)
        # weighted Gini = n - sum_l c_l^2/k - sum_l r_l^2/(n-k), up to constants
        score = -(left_sq / k + right_sq / (n - k))

    score = np.where(valid, score, np.inf)
    best = int(np.argmin(score))
    return float(score[best]), float(0.5 * (xs[best] + xs[best + 1]))


def _fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    min_leaf: int,
    n_features: int,
    rng: np.random.Generator,
    classes: int | None,
) -> _Tree:
    n, d = X.shape
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    values: list[np.ndarray | float] = []

    def leaf_value(idx: np.ndarray):
        if classes is None:
            return float(y[idx].mean())
        counts = np.bincount(y[idx], minlength=classes).astype(float)
        return counts / counts.sum()

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        values.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(np.arange(n), root)]
    while stack:
        idx, node = stack.pop()
        y_node = y[idx]
        pure = (y_node == y_node[0]).all()
        if pure or idx.size < max(2, 2 * min_leaf):
            values[node] = leaf_value(idx)
            continue
        best = None
        perm = rng.permutation(d)
        for pos, f in enumerate(perm):
            if pos >= n_features and best is not None:
                break  # drawn subset exhausted and a valid split exists
            found = _best_split_on_feature(X[idx, f], y_node, min_leaf, classes)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], int(f), found[1])
        if best is None:
            values[node] = leaf_value(idx)
            continue
        _, f, thr = best
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        l_id, r_id = new_node(), new_node()
        left[node] = l_id
        right[node] = r_id
        stack.append((idx[go_left], l_id))
        stack.append((idx[~go_left], r_id))

    if classes is None:
        vals = np.asarray([v if np.isscalar(v) else float(v) for v in values])
    else:
        vals = np.zeros((len(feature), classes))
        for i, v in enumerate(values):
            if not np.isscalar(v):
                vals[i] = v
    return _Tree(
        feature=np.asarray(feature, dtype=int),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=int),
        right=np.asarray(right, dtype=int),
        values=vals,
    )


def _fit_forest(X, y, cfg: ForestConfig, classes: int | None) -> list[_Tree]:
    n, d = X.shape
    k = cfg.resolved_features(d)
    trees = []
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.num_trees):
        rng = np.random.default_rng(child)
        if cfg.bootstrap:
            sample = rng.integers(0, n, size=n)
        else:
            sample = np.arange(n)
        trees.append(_fit_tree(X[sample], y[sample], cfg.min_leaf, k, rng, classes))
    return trees


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


class ForestClassifier:
    """Aggregated classification trees; proba is the mean of leaf frequencies."""

    def __init__(self, trees: list[_Tree], num_classes: int, config: ForestConfig | None = None):
        self.trees = trees
        self.num_classes = num_classes
        self.config = config

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        X, single = _as_batch(x)
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite input")
        proba = np.zeros((X.shape[0], self.num_classes))
        for tree in self.trees:
            proba += tree.values[tree.apply(X)]
        proba /= len(self.trees)
        return proba[0] if single else proba

    def classify(self, x: np.ndarray) -> np.ndarray | int:
        X, single = _as_batch(x)
        labels = np.argmax(self.predict_proba(X), axis=1)
        return int(labels[0]) if single else labels

    def to_dict(self) -> dict:
        return {
            "kind": "forest_classifier",
            "num_classes": self.num_classes,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestClassifier":
        return cls([_Tree.from_dict(t) for t in d["trees"]], int(d["num_classes"]))


class ForestRegressor:
    """Aggregated regression trees; prediction is the mean of leaf means."""

    def __init__(self, trees: list[_Tree], config: ForestConfig | None = None):
        self.trees = trees
        self.config = config

    def predict(self, x: np.ndarray) -> np.ndarray | float:
        X, single = _as_batch(x)
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite input")
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            out += tree.values[tree.apply(X)]
        out /= len(self.trees)
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        return {"kind": "forest_regressor", "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "ForestRegressor":
        return cls([_Tree.from_dict(t) for t in d["trees"]])


def fit_forest_classifier(X: np.ndarray, labels: np.ndarray, cfg: ForestConfig | None = None) -> ForestClassifier:
    """Fit bootstrapped Gini trees on integer labels 0..L-1 (all present)."""
    cfg = cfg or ForestConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if labels.shape[0] != X.shape[0]:
        raise ValueError("labels length must match number of rows")
    num_classes = int(labels.max()) + 1 if labels.size else 0
    if num_classes < 2:
        raise ValueError("class count < 2")
    counts = np.bincount(labels, minlength=num_classes)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ValueError(f"class {int(missing[0])} absent from labels")
    trees = _fit_forest(X, labels, cfg, num_classes)
    return ForestClassifier(trees, num_classes, cfg)


def fit_forest_regressor(X: np.ndarray, y: np.ndarray, cfg: ForestConfig | None = None) -> ForestRegressor:
    """Fit bootstrapped variance-reduction trees on a scalar target."""
    cfg = cfg or ForestConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError("y length must match number of rows")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit a regressor")
    trees = _fit_forest(X, y, cfg, None)
    return ForestRegressor(trees, cfg)
