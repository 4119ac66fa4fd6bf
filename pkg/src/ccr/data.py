"""Dataset container, affine input/output scaling, splitting, and file I/O.

A Dataset holds N input rows x_i in R^d and N scalar outputs y_i. The
scaling transform maps each input coordinate onto [0,1] and the output onto
[0, C] for an amplification factor C >= 1; it is the preconditioning step
that makes joint (x, y) clustering sensitive to output jumps.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Immutable matrix of inputs (N, d) with aligned outputs (N,)."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        outputs = np.asarray(self.outputs, dtype=float).ravel()
        if inputs.ndim != 2:
            raise ValueError(f"inputs must be 2-D, got shape {inputs.shape}")
        if inputs.shape[0] != outputs.shape[0]:
            raise ValueError(
                f"{inputs.shape[0]} input rows but {outputs.shape[0]} outputs"
            )
        if inputs.shape[0] < 1:
            raise ValueError("dataset must contain at least one row")
        if inputs.shape[1] < 1:
            raise ValueError("inputs must have at least one column")
        if not np.all(np.isfinite(inputs)):
            i, j = np.argwhere(~np.isfinite(inputs))[0]
            raise ValueError(f"non-finite input at row {i}, column {j}")
        if not np.all(np.isfinite(outputs)):
            i = int(np.flatnonzero(~np.isfinite(outputs))[0])
            raise ValueError(f"non-finite output at row {i}")
        inputs = inputs.copy()
        outputs = outputs.copy()
        inputs.flags.writeable = False
        outputs.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.inputs[idx], self.outputs[idx])

    def joint(self) -> np.ndarray:
        """Stack inputs and outputs into (N, d+1) rows (x_i, y_i)."""
        return np.hstack([self.inputs, self.outputs[:, None]])


@dataclass(frozen=True)
class ScalingTransform:
    """Per-dimension affine maps x -> (x - min) / range, y -> C (y - min) / range."""

    x_min: np.ndarray
    x_range: np.ndarray
    y_min: float
    y_range: float
    amplification: float

    def __post_init__(self):
        object.__setattr__(self, "x_min", np.asarray(self.x_min, dtype=float))
        object.__setattr__(self, "x_range", np.asarray(self.x_range, dtype=float))
        if np.any(self.x_range <= 0) or self.y_range <= 0:
            raise ValueError("scaling ranges must be positive")
        if self.amplification < 1.0:
            raise ValueError(f"amplification must be >= 1, got {self.amplification}")

    @property
    def dim(self) -> int:
        return self.x_min.shape[0]

    def apply_inputs(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} input columns, got {X.shape[1]}")
        return (X - self.x_min) / self.x_range

    def invert_inputs(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} input columns, got {X.shape[1]}")
        return X * self.x_range + self.x_min

    def apply_outputs(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.amplification * (y - self.y_min) / self.y_range

    def invert_outputs(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return y * self.y_range / self.amplification + self.y_min

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min.tolist(),
            "x_range": self.x_range.tolist(),
            "y_min": self.y_min,
            "y_range": self.y_range,
            "amplification": self.amplification,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingTransform":
        return cls(
            x_min=np.asarray(d["x_min"], dtype=float),
            x_range=np.asarray(d["x_range"], dtype=float),
            y_min=float(d["y_min"]),
            y_range=float(d["y_range"]),
            amplification=float(d["amplification"]),
        )


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic train/test split: same seed and data give the same split."""

    test_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must be in (0,1), got {self.test_fraction}")


def fit_scaling(data: Dataset, amplification: float = 1.0) -> ScalingTransform:
    """Fit the affine transform so the data spans [0,1]^d x [0, C] exactly.

    Raises ValueError when an input dimension or the output is constant
    (zero spread makes the map degenerate).
    """
    x_min = data.inputs.min(axis=0)
    x_max = data.inputs.max(axis=0)
    flat = np.flatnonzero(x_max <= x_min)
    if flat.size:
        raise ValueError(f"input dimension {int(flat[0])} is constant; cannot scale")
    y_min = float(data.outputs.min())
    y_max = float(data.outputs.max())
    if y_max <= y_min:
        raise ValueError("output values are constant; cannot scale")
    return ScalingTransform(
        x_min=x_min,
        x_range=x_max - x_min,
        y_min=y_min,
        y_range=y_max - y_min,
        amplification=float(amplification),
    )


def apply_scaling(t: ScalingTransform, data: Dataset, scale_output: bool = True) -> Dataset:
    """Map a dataset through the transform (no clipping: queries outside the
    fitted box map linearly outside [0,1])."""
    X = t.apply_inputs(data.inputs)
    y = t.apply_outputs(data.outputs) if scale_output else data.outputs
    return Dataset(X, y)


def invert_scaling(t: ScalingTransform, data: Dataset, scaled_output: bool = True) -> Dataset:
    """Inverse of apply_scaling."""
    X = t.invert_inputs(data.inputs)
    y = t.invert_outputs(data.outputs) if scaled_output else data.outputs
    return Dataset(X, y)


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Disjoint (train, test) partition; the union restores the original multiset."""
    n_test = int(round(data.n * spec.test_fraction))
    if n_test < 1 or n_test > data.n - 1:
        raise ValueError(
            f"test fraction {spec.test_fraction} leaves an empty side for N={data.n}"
        )
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(data.n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return data.subset(train_idx), data.subset(test_idx)


def _parse_numeric_row(fields: list[str], line_no: int) -> list[float]:
    values = []
    for col, tok in enumerate(fields):
        try:
            v = float(tok)
        except ValueError:
            raise ValueError(
                f"line {line_no}: cannot parse {tok!r} in column {col}"
            ) from None
        if not np.isfinite(v):
            raise ValueError(f"line {line_no}: non-finite value {tok!r} in column {col}")
        values.append(v)
    return values


def _row_is_numeric(fields: list[str]) -> bool:
    for tok in fields:
        try:
            float(tok)
        except ValueError:
            return False
    return True


def load_dataset(path: str | Path, format: str | None = None) -> Dataset:
    """Read a dataset from CSV (last column is y; optional header) or JSON
    ({"inputs": [[...]], "outputs": [...]}).

    Format is inferred from the suffix when not given. Parse failures name
    the offending line; non-finite values name the row and column.
    """
    path = Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    if format not in ("csv", "json"):
        raise ValueError(f"unknown dataset format {format!r}")
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")

    if format == "json":
        with path.open("r", encoding="utf-8") as f:
            doc = json.load(f)
        if not isinstance(doc, dict) or "inputs" not in doc or "outputs" not in doc:
            raise ValueError(f"{path}: JSON dataset needs 'inputs' and 'outputs' keys")
        return Dataset(np.asarray(doc["inputs"], dtype=float),
                       np.asarray(doc["outputs"], dtype=float))

    rows: list[list[float]] = []
    width = None
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        for line_no, fields in enumerate(reader, start=1):
            fields = [tok.strip() for tok in fields]
            if not fields or all(tok == "" for tok in fields):
                continue
            if line_no == 1 and not _row_is_numeric(fields):
                continue  # header row
            if width is None:
                width = len(fields)
                if width < 2:
                    raise ValueError(f"line {line_no}: need at least 2 columns (x..., y)")
            elif len(fields) != width:
                raise ValueError(
                    f"line {line_no}: expected {width} columns, found {len(fields)}"
                )
            rows.append(_parse_numeric_row(fields, line_no))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return Dataset(arr[:, :-1], arr[:, -1])


def save_dataset(data: Dataset, path: str | Path, format: str | None = None) -> None:
    """Write a dataset as CSV (header x1..xd,y) or JSON."""
    path = Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    if format == "json":
        doc = {"inputs": data.inputs.tolist(), "outputs": data.outputs.tolist()}
        with path.open("w", encoding="utf-8") as f:
            json.dump(doc, f)
        return
    if format != "csv":
        raise ValueError(f"unknown dataset format {format!r}")
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"x{j + 1}" for j in range(data.dim)] + ["y"])
        for xi, yi in zip(data.inputs, data.outputs):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
