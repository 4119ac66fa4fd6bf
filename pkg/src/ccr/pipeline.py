"""The cluster-classify-regress pipeline and its accuracy metrics.

Fitting proceeds in three stages: (I) scale (x, y) jointly with an amplified
output coordinate and K-means the joint points; (II) train a soft classifier
that predicts the cluster label from the scaled inputs alone; (III) partition
the training rows by the classifier's own hard predictions and fit one
regressor per class on raw x and raw y. Prediction dispatches each query to
the regressor of its predicted class, with no smoothing across classes.
"""

from __future__ import annotations

import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .clustering import ClusterModel, ElbowReport, assign_labels, elbow_select, kmeans_fit
from .data import Dataset, ScalingTransform, apply_scaling, fit_scaling
from .forest import (
    ForestClassifier,
    ForestConfig,
    ForestRegressor,
    fit_forest_classifier,
    fit_forest_regressor,
)
from .mlp import MlpClassifier, MlpConfig, MlpRegressor, fit_classifier, fit_regressor

MODEL_FORMAT_VERSION = 1


def parallelism() -> int:
    """Worker count for per-class regression fits (CCR_PARALLEL overrides)."""
    env = os.environ.get("CCR_PARALLEL")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            warnings.warn(f"ignoring non-integer CCR_PARALLEL={env!r}")
    return max(1, os.cpu_count() or 1)


@dataclass
class CcrConfig:
    """Pipeline configuration; num_clusters None selects L by the elbow rule.

    amplification_cluster defaults to 10 * d at fit time. Stage III trains
    on raw data (amplification_regress is recorded for provenance only).
    """

    num_clusters: int | None = None
    amplification_cluster: float | None = None
    amplification_regress: float = 1.0
    classifier_kind: str = "mlp"
    regressor_kind: str = "mlp"
    mlp: MlpConfig = field(default_factory=MlpConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    elbow_max_clusters: int = 8
    kmeans_restarts: int = 8
    kmeans_max_iter: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.num_clusters is not None and self.num_clusters < 1:
            raise ValueError("num_clusters must be >= 1")
        if self.classifier_kind not in ("mlp", "forest"):
            raise ValueError(f"unknown classifier_kind {self.classifier_kind!r}")
        if self.regressor_kind not in ("mlp", "forest"):
            raise ValueError(f"unknown regressor_kind {self.regressor_kind!r}")

    def to_dict(self) -> dict:
        return {
            "num_clusters": self.num_clusters,
            "amplification_cluster": self.amplification_cluster,
            "amplification_regress": self.amplification_regress,
            "classifier_kind": self.classifier_kind,
            "regressor_kind": self.regressor_kind,
            "mlp": self.mlp.to_dict(),
            "forest": self.forest.to_dict(),
            "elbow_max_clusters": self.elbow_max_clusters,
            "kmeans_restarts": self.kmeans_restarts,
            "kmeans_max_iter": self.kmeans_max_iter,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CcrConfig":
        d = dict(d)
        d["mlp"] = MlpConfig(**d.get("mlp", {}))
        d["forest"] = ForestConfig(**d.get("forest", {}))
        return cls(**d)


class ConstantClassifier:
    """Single-class fallback when clustering finds one label."""

    num_classes = 1

    def predict_proba(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.ones(1)
        return np.ones((x.shape[0], 1))

    def classify(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return 0
        return np.zeros(x.shape[0], dtype=int)

    def to_dict(self) -> dict:
        return {"kind": "constant_classifier"}


class ConstantRegressor:
    """Fallback regressor for empty or singleton classes."""

    def __init__(self, value: float):
        self.value = float(value)

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.value
        return np.full(x.shape[0], self.value)

    def to_dict(self) -> dict:
        return {"kind": "constant_regressor", "value": self.value}


@dataclass
class Metrics:
    """Accuracy scores on one dataset. l2 = 1 - sqrt(sum e^2 / sum y^2);
    r2 = 1 - sum e^2 / sum (y - mean)^2. Missing denominators give None."""

    l2: float | None
    r2: float | None
    per_class_counts: list[int]
    misclassification_rate: float | None = None

    def to_dict(self) -> dict:
        return {
            "l2": self.l2,
            "r2": self.r2,
            "per_class_counts": self.per_class_counts,
            "misclassification_rate": self.misclassification_rate,
        }

    def table(self) -> str:
        rows = [("L2", self.l2), ("R2", self.r2),
                ("misclassification", self.misclassification_rate)]
        lines = [f"{'metric':<20}{'value':>12}"]
        for name, value in rows:
            text = "missing" if value is None else f"{value:.4f}"
            lines.append(f"{name:<20}{text:>12}")
        return "\n".join(lines)


@dataclass
class CcrModel:
    """Fitted scaler, cluster model, classifier, and per-class regressors."""

    scaler: ScalingTransform
    cluster: ClusterModel
    classifier: object
    regressors: list[object]
    config: CcrConfig
    elbow: ElbowReport | None = None

    def __post_init__(self):
        n_classes = getattr(self.classifier, "num_classes")
        if len(self.regressors) != n_classes:
            raise ValueError(
                f"{len(self.regressors)} regressors for {n_classes} classes"
            )

    @property
    def num_classes(self) -> int:
        return len(self.regressors)

    def classify_inputs(self, X: np.ndarray) -> np.ndarray:
        """Hard class per row of raw inputs (scaling applied internally)."""
        return self.classifier.classify(self.scaler.apply_inputs(X))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Class probabilities for raw inputs (scaling applied internally)."""
        return self.classifier.predict_proba(self.scaler.apply_inputs(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return ccr_predict(self, X)


def _make_classifier(kind: str, X, labels, cfg: CcrConfig, seed: int):
    if kind == "mlp":
        return fit_classifier(X, labels, replace(cfg.mlp, seed=seed))
    return fit_forest_classifier(X, labels, replace(cfg.forest, seed=seed))


def _make_regressor(kind: str, X, y, cfg: CcrConfig, seed: int):
    if kind == "mlp":
        return fit_regressor(X, y, replace(cfg.mlp, seed=seed))
    return fit_forest_regressor(X, y, replace(cfg.forest, seed=seed))


def ccr_fit(data: Dataset, cfg: CcrConfig | None = None) -> CcrModel:
    """Fit the full pipeline on a dataset."""
    cfg = cfg or CcrConfig()
    if data.n < 10:
        raise ValueError(f"need at least 10 rows to fit, got {data.n}")
    amplification = cfg.amplification_cluster
    if amplification is None:
        amplification = 10.0 * data.dim
    seeds = np.random.SeedSequence(cfg.seed).generate_state(4)

    # stage I: cluster the scaled joint points
    scaler = fit_scaling(data, amplification)
    joint = apply_scaling(scaler, data, scale_output=True).joint()
    elbow = None
    L = cfg.num_clusters
    if L is None:
        elbow = elbow_select(
            joint,
            L_max=min(cfg.elbow_max_clusters, data.n),
            seed=int(seeds[0]),
            restarts=cfg.kmeans_restarts,
            max_iter=cfg.kmeans_max_iter,
        )
        L = elbow.chosen_L
    if data.n < 2 * L:
        raise ValueError(f"need at least 2L={2 * L} rows for L={L} clusters")
    cluster = kmeans_fit(
        joint, L, seed=int(seeds[1]),
        restarts=cfg.kmeans_restarts, max_iter=cfg.kmeans_max_iter,
    )
    labels = assign_labels(cluster, joint)

    # stage II: classify scaled inputs; outputs are ignored here
    present = np.unique(labels)
    if present.size < labels.max() + 1 or present.size < L:
        # degenerate clustering left gaps; compress to consecutive ids
        remap = -np.ones(L, dtype=int)
        remap[present] = np.arange(present.size)
        labels = remap[labels]
        warnings.warn(f"only {present.size} of {L} clusters are populated")
    scaled_inputs = scaler.apply_inputs(data.inputs)
    if present.size == 1:
        classifier = ConstantClassifier()
    else:
        classifier = _make_classifier(
            cfg.classifier_kind, scaled_inputs, labels, cfg, int(seeds[2])
        )

    # stage III: partition by the classifier's own predictions, regress raw
    predicted = np.asarray(classifier.classify(scaled_inputs)).ravel()
    global_mean = float(data.outputs.mean())
    num_classes = classifier.num_classes

    def fit_one(l: int):
        idx = np.flatnonzero(predicted == l)
        if idx.size == 0:
            warnings.warn(f"class {l} received no training rows; using the global mean")
            return ConstantRegressor(global_mean)
        if idx.size == 1:
            warnings.warn(f"class {l} has a single row; using a constant predictor")
            return ConstantRegressor(float(data.outputs[idx[0]]))
        seed_l = int(np.random.SeedSequence([int(seeds[3]), l]).generate_state(1)[0])
        return _make_regressor(
            cfg.regressor_kind, data.inputs[idx], data.outputs[idx], cfg, seed_l
        )

    workers = min(parallelism(), num_classes)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            regressors = list(pool.map(fit_one, range(num_classes)))
    else:
        regressors = [fit_one(l) for l in range(num_classes)]

    return CcrModel(scaler, cluster, classifier, regressors, cfg, elbow)


def ccr_predict(model: CcrModel, X: np.ndarray) -> np.ndarray:
    """Predict a batch: scale inputs, classify, dispatch to class regressors."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.scaler.dim:
        raise ValueError(f"expected {model.scaler.dim} input columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite input")
    classes = np.asarray(model.classify_inputs(X)).ravel()
    out = np.empty(X.shape[0])
    for l in np.unique(classes):
        mask = classes == l
        out[mask] = model.regressors[l].predict(X[mask])
    return out


def evaluate(model: CcrModel, test: Dataset) -> Metrics:
    """Score the model on a labeled dataset (raw-unit residuals)."""
    if test.n < 1:
        raise ValueError("empty test set")
    pred = ccr_predict(model, test.inputs)
    resid = pred - test.outputs
    sq_err = float(resid @ resid)
    sq_norm = float(test.outputs @ test.outputs)
    centered = test.outputs - test.outputs.mean()
    sq_var = float(centered @ centered)
    l2 = None if sq_norm == 0.0 else 1.0 - float(np.sqrt(sq_err / sq_norm))
    r2 = None if sq_var == 0.0 else 1.0 - sq_err / sq_var

    classes = np.asarray(model.classify_inputs(test.inputs)).ravel()
    counts = np.bincount(classes, minlength=model.num_classes).tolist()

    # cluster-label agreement: assign the scaled joint test points to
    # centroids and compare with the classifier's input-only predictions
    joint = apply_scaling(model.scaler, test, scale_output=True).joint()
    cluster_labels = assign_labels(model.cluster, joint)
    mis = float(np.mean(classes != cluster_labels))
    return Metrics(l2=l2, r2=r2, per_class_counts=counts, misclassification_rate=mis)


def _model_to_dict(model: CcrModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "scaler": model.scaler.to_dict(),
        "cluster": model.cluster.to_dict(),
        "classifier": model.classifier.to_dict(),
        "regressors": [r.to_dict() for r in model.regressors],
        "elbow": model.elbow.to_dict() if model.elbow else None,
    }


_CLASSIFIER_LOADERS = {
    "mlp_classifier": MlpClassifier.from_dict,
    "forest_classifier": ForestClassifier.from_dict,
    "constant_classifier": lambda d: ConstantClassifier(),
}

_REGRESSOR_LOADERS = {
    "mlp_regressor": MlpRegressor.from_dict,
    "forest_regressor": ForestRegressor.from_dict,
    "constant_regressor": lambda d: ConstantRegressor(d["value"]),
}


def _model_from_dict(doc: dict) -> CcrModel:
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    classifier = _CLASSIFIER_LOADERS[doc["classifier"]["kind"]](doc["classifier"])
    regressors = [_REGRESSOR_LOADERS[r["kind"]](r) for r in doc["regressors"]]
    elbow = None
    if doc.get("elbow"):
        e = doc["elbow"]
        elbow = ElbowReport(tuple(e["candidate_L"]), tuple(e["inertias"]),
                            e["chosen_L"], e["no_clear_elbow"])
    return CcrModel(
        scaler=ScalingTransform.from_dict(doc["scaler"]),
        cluster=ClusterModel.from_dict(doc["cluster"]),
        classifier=classifier,
        regressors=regressors,
        config=CcrConfig.from_dict(doc["config"]),
        elbow=elbow,
    )


def save_model(model: CcrModel, path: str | Path) -> None:
    """Write the whole pipeline as one versioned JSON document."""
    with Path(path).open("w", encoding="utf-8") as f:
        json.dump(_model_to_dict(model), f)


def load_model(path: str | Path) -> CcrModel:
    """Load a model written by save_model."""
    with Path(path).open("r", encoding="utf-8") as f:
        return _model_from_dict(json.load(f))
