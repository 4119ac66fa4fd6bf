"""Single-hidden-layer perceptrons trained with Adam.

Two flavors share one training engine: a soft classifier (ReLU hidden layer,
softmax output, cross-entropy loss) and a scalar regressor (linear output,
squared loss). Both carry quadratic weight regularization and hold out a
validation fraction for early stopping, returning the best parameters seen.

Inputs (and regression targets) are standardized internally at fit time and
the affine conditioning is folded back in at prediction time, so callers
work in raw units throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

EARLY_STOP_PATIENCE = 10
EARLY_STOP_TOLERANCE = 1e-4
MIN_HOLDOUT_ROWS = 10


@dataclass
class MlpConfig:
    """Training knobs. hidden_width defaults to 100 * d when left None."""

    hidden_width: int | None = None
    l2_penalty: float = 0.001
    max_epochs: int = 200
    validation_fraction: float = 0.1
    learning_rate: float = 0.01
    lr_schedule: str = "cosine"
    batch_size: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.hidden_width is not None and self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    def epoch_lr(self, epoch: int) -> float:
        """Cosine decay to a 1% floor; sharpening decision boundaries needs
        large early steps and a small late-stage noise floor."""
        if self.lr_schedule == "constant":
            return self.learning_rate
        frac = 0.5 * (1.0 + np.cos(np.pi * epoch / max(1, self.max_epochs)))
        return self.learning_rate * max(0.01, frac)

    def resolved_width(self, d: int) -> int:
        return self.hidden_width if self.hidden_width is not None else 100 * d

    def to_dict(self) -> dict:
        return {
            "hidden_width": self.hidden_width,
            "l2_penalty": self.l2_penalty,
            "max_epochs": self.max_epochs,
            "validation_fraction": self.validation_fraction,
            "learning_rate": self.learning_rate,
            "lr_schedule": self.lr_schedule,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }


@dataclass
class AdamState:
    """First/second moment accumulators; step_count increments once per update."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
        )


def adam_update(
    state: AdamState,
    params: list[np.ndarray],
    grads: list[np.ndarray],
    lr: float,
) -> list[np.ndarray]:
    """One bias-corrected Adam step: theta -= lr * m_hat / (sqrt(v_hat) + eps)."""
    if len(params) != len(grads):
        raise ValueError("params and grads length mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch: param {p.shape} vs grad {g.shape}")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        out.append(p - lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon))
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; output rows sum to 1."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _glorot_init(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    fan_out, fan_in = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def _forward(params: list[np.ndarray], X: np.ndarray):
    w_in, b_h, w_out, b_out = params
    pre = X @ w_in.T + b_h
    hidden = np.maximum(pre, 0.0)  # ReLU, subgradient 0 at 0
    return pre, hidden, hidden @ w_out.T + b_out


def cross_entropy_loss_grad(
    params: list[np.ndarray],
    X: np.ndarray,
    labels: np.ndarray,
    l2_penalty: float,
):
    """Mean cross-entropy plus 0.5 * l2 * |W|^2 / n (biases unpenalized), with
    analytic gradients in parameter order (w_in, b_h, w_out, b_out)."""
    w_in, b_h, w_out, b_out = params
    n = X.shape[0]
    pre, hidden, logits = _forward(params, X)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - z[np.arange(n), labels]))
    reg = l2_penalty / n
    loss += 0.5 * reg * (float((w_in * w_in).sum()) + float((w_out * w_out).sum()))

    proba = np.exp(z - log_norm[:, None])
    d_logits = proba
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n
    d_wout = d_logits.T @ hidden + reg * w_out
    d_bout = d_logits.sum(axis=0)
    d_hidden = d_logits @ w_out
    d_pre = d_hidden * (pre > 0.0)
    d_win = d_pre.T @ X + reg * w_in
    d_bh = d_pre.sum(axis=0)
    return loss, [d_win, d_bh, d_wout, d_bout]


def squared_loss_grad(
    params: list[np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
    l2_penalty: float,
):
    """Mean squared error plus 0.5 * l2 * |W|^2 / n, with analytic gradients."""
    w_in, b_h, w_out, b_out = params
    n = X.shape[0]
    pre, hidden, out = _forward(params, X)
    resid = out[:, 0] - y
    loss = float(np.mean(resid * resid))
    reg = l2_penalty / n
    loss += 0.5 * reg * (float((w_in * w_in).sum()) + float((w_out * w_out).sum()))

    d_out = (2.0 / n) * resid[:, None]
    d_wout = d_out.T @ hidden + reg * w_out
    d_bout = d_out.sum(axis=0)
    d_hidden = d_out @ w_out
    d_pre = d_hidden * (pre > 0.0)
    d_win = d_pre.T @ X + reg * w_in
    d_bh = d_pre.sum(axis=0)
    return loss, [d_win, d_bh, d_wout, d_bout]


@dataclass
class FitReport:
    """Diagnostics from one training run."""

    epochs: int
    init_loss: float
    final_loss: float
    best_monitor_loss: float
    holdout_used: bool
    stopped_early: bool


def _holdout_indices(
    n: int,
    fraction: float,
    rng: np.random.Generator,
    labels: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray]:
    """(train_idx, val_idx); val is empty when the fraction rounds to nothing.
    Classifier holdouts are stratified so no class vanishes from training."""
    if fraction <= 0.0:
        return np.arange(n), np.empty(0, dtype=int)
    if labels is None:
        n_val = int(round(n * fraction))
        # a handful of monitor rows is too noisy to drive the stopping rule
        if n_val < MIN_HOLDOUT_ROWS or n - n_val < 1:
            warnings.warn("dataset too small for a validation holdout; disabled")
            return np.arange(n), np.empty(0, dtype=int)
        perm = rng.permutation(n)
        return perm[n_val:], perm[:n_val]
    val_parts = []
    train_parts = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        k = min(int(round(idx.size * fraction)), idx.size - 1)
        val_parts.append(idx[:k])
        train_parts.append(idx[k:])
    val_idx = np.concatenate(val_parts)
    if val_idx.size < MIN_HOLDOUT_ROWS:
        warnings.warn("dataset too small for a validation holdout; disabled")
        return np.arange(n), np.empty(0, dtype=int)
    return np.concatenate(train_parts), val_idx


def _train_network(
    X: np.ndarray,
    target: np.ndarray,
    out_dim: int,
    loss_grad,
    cfg: MlpConfig,
    labels_for_split: np.ndarray | None,
):
    n, d = X.shape
    width = cfg.resolved_width(d)
    rng = np.random.default_rng(cfg.seed)
    params = [
        _glorot_init((width, d), rng),
        np.zeros(width),
        _glorot_init((out_dim, width), rng),
        np.zeros(out_dim),
    ]
    train_idx, val_idx = _holdout_indices(n, cfg.validation_fraction, rng, labels_for_split)
    X_tr, t_tr = X[train_idx], target[train_idx]
    monitor = (X[val_idx], target[val_idx]) if val_idx.size else (X_tr, t_tr)

    init_params = [p.copy() for p in params]
    init_loss, _ = loss_grad(params, X_tr, t_tr, cfg.l2_penalty)
    state = AdamState.for_params(params)
    best_loss = np.inf
    best_params = [p.copy() for p in params]
    monitor_path: list[float] = []
    stopped_early = False
    epochs_run = 0
    # cap the batch so even small datasets get several updates per epoch
    batch = max(1, min(cfg.batch_size, -(-X_tr.shape[0] // 8)))

    for epoch in range(cfg.max_epochs):
        epochs_run = epoch + 1
        lr = cfg.epoch_lr(epoch)
        order = rng.permutation(X_tr.shape[0])
        for start in range(0, order.size, batch):
            sel = order[start : start + batch]
            _, grads = loss_grad(params, X_tr[sel], t_tr[sel], cfg.l2_penalty)
            params = adam_update(state, params, grads, lr)
        mon_loss, _ = loss_grad(params, monitor[0], monitor[1], 0.0)
        monitor_path.append(mon_loss)
        if mon_loss < best_loss:
            best_loss = mon_loss
            best_params = [p.copy() for p in params]
        # stop when the last PATIENCE epochs improved the loss by < TOLERANCE
        if len(monitor_path) > EARLY_STOP_PATIENCE:
            before = min(monitor_path[: -EARLY_STOP_PATIENCE])
            window = min(monitor_path[-EARLY_STOP_PATIENCE:])
            if before - window < EARLY_STOP_TOLERANCE:
                stopped_early = True
                break

    final_loss, _ = loss_grad(best_params, X_tr, t_tr, cfg.l2_penalty)
    if final_loss > init_loss:  # never return something worse than the start
        best_params = init_params
        final_loss = init_loss
    report = FitReport(
        epochs=epochs_run,
        init_loss=init_loss,
        final_loss=final_loss,
        best_monitor_loss=float(best_loss),
        holdout_used=bool(val_idx.size),
        stopped_early=stopped_early,
    )
    return best_params, report


def _standardize_columns(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return shift, scale


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


class MlpClassifier:
    """Soft classifier: ReLU hidden layer into a softmax over classes."""

    def __init__(
        self,
        input_weights: np.ndarray,
        hidden_bias: np.ndarray,
        output_weights: np.ndarray,
        output_bias: np.ndarray,
        x_shift: np.ndarray | None = None,
        x_scale: np.ndarray | None = None,
    ):
        self.input_weights = np.asarray(input_weights, dtype=float)
        self.hidden_bias = np.asarray(hidden_bias, dtype=float)
        self.output_weights = np.asarray(output_weights, dtype=float)
        self.output_bias = np.asarray(output_bias, dtype=float)
        d = self.input_weights.shape[1]
        self.x_shift = np.zeros(d) if x_shift is None else np.asarray(x_shift, dtype=float)
        self.x_scale = np.ones(d) if x_scale is None else np.asarray(x_scale, dtype=float)
        self.fit_report: FitReport | None = None

    @property
    def num_classes(self) -> int:
        return self.output_weights.shape[0]

    def _params(self) -> list[np.ndarray]:
        return [self.input_weights, self.hidden_bias, self.output_weights, self.output_bias]

    def _logits(self, X: np.ndarray) -> np.ndarray:
        Xs = (X - self.x_shift) / self.x_scale
        _, _, logits = _forward(self._params(), Xs)
        return logits

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        X, single = _as_batch(x)
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite input")
        proba = softmax(self._logits(X))
        return proba[0] if single else proba

    def classify(self, x: np.ndarray) -> np.ndarray | int:
        X, single = _as_batch(x)
        labels = np.argmax(self.predict_proba(X), axis=1)
        return int(labels[0]) if single else labels

    def to_dict(self) -> dict:
        return {
            "kind": "mlp_classifier",
            "num_classes": self.num_classes,
            "layers": _layers_to_dict(self._params()),
            "x_shift": self.x_shift.tolist(),
            "x_scale": self.x_scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpClassifier":
        return cls(*_layers_from_dict(d["layers"]),
                   x_shift=np.asarray(d["x_shift"]), x_scale=np.asarray(d["x_scale"]))


class MlpRegressor:
    """Scalar regressor: ReLU hidden layer into a linear output."""

    def __init__(
        self,
        input_weights: np.ndarray,
        hidden_bias: np.ndarray,
        output_weights: np.ndarray,
        output_bias: np.ndarray,
        x_shift: np.ndarray | None = None,
        x_scale: np.ndarray | None = None,
        y_shift: float = 0.0,
        y_scale: float = 1.0,
    ):
        self.input_weights = np.asarray(input_weights, dtype=float)
        self.hidden_bias = np.asarray(hidden_bias, dtype=float)
        self.output_weights = np.asarray(output_weights, dtype=float)
        self.output_bias = np.asarray(output_bias, dtype=float)
        d = self.input_weights.shape[1]
        self.x_shift = np.zeros(d) if x_shift is None else np.asarray(x_shift, dtype=float)
        self.x_scale = np.ones(d) if x_scale is None else np.asarray(x_scale, dtype=float)
        self.y_shift = float(y_shift)
        self.y_scale = float(y_scale)
        self.fit_report: FitReport | None = None

    def _params(self) -> list[np.ndarray]:
        return [self.input_weights, self.hidden_bias, self.output_weights, self.output_bias]

    def predict(self, x: np.ndarray) -> np.ndarray | float:
        X, single = _as_batch(x)
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite input")
        Xs = (X - self.x_shift) / self.x_scale
        _, _, out = _forward(self._params(), Xs)
        y = out[:, 0] * self.y_scale + self.y_shift
        return float(y[0]) if single else y

    def to_dict(self) -> dict:
        return {
            "kind": "mlp_regressor",
            "layers": _layers_to_dict(self._params()),
            "x_shift": self.x_shift.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_shift": self.y_shift,
            "y_scale": self.y_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpRegressor":
        return cls(*_layers_from_dict(d["layers"]),
                   x_shift=np.asarray(d["x_shift"]), x_scale=np.asarray(d["x_scale"]),
                   y_shift=d["y_shift"], y_scale=d["y_scale"])


def _layers_to_dict(params: list[np.ndarray]) -> list[dict]:
    return [{"shape": list(p.shape), "data": p.ravel().tolist()} for p in params]


def _layers_from_dict(layers: list[dict]) -> list[np.ndarray]:
    return [np.asarray(l["data"], dtype=float).reshape(l["shape"]) for l in layers]


def fit_classifier(X: np.ndarray, labels: np.ndarray, cfg: MlpConfig | None = None) -> MlpClassifier:
    """Train a softmax classifier on labels 0..L-1 (every class must appear)."""
    cfg = cfg or MlpConfig()
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
    if X.shape[0] < num_classes:
        raise ValueError("need at least one row per class")

    x_shift, x_scale = _standardize_columns(X)
    Xs = (X - x_shift) / x_scale
    params, report = _train_network(
        Xs, labels, num_classes, cross_entropy_loss_grad, cfg, labels_for_split=labels
    )
    model = MlpClassifier(*params, x_shift=x_shift, x_scale=x_scale)
    model.fit_report = report
    return model


def fit_regressor(X: np.ndarray, y: np.ndarray, cfg: MlpConfig | None = None) -> MlpRegressor:
    """Train a scalar least-squares regressor."""
    cfg = cfg or MlpConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError("y length must match number of rows")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit a regressor")

    x_shift, x_scale = _standardize_columns(X)
    y_shift = float(y.mean())
    y_scale = float(y.std())
    if y_scale < 1e-12:
        # constant target: the exact least-squares optimum needs no training
        width = cfg.resolved_width(X.shape[1])
        model = MlpRegressor(
            np.zeros((width, X.shape[1])), np.zeros(width),
            np.zeros((1, width)), np.zeros(1),
            x_shift=x_shift, x_scale=x_scale, y_shift=y_shift, y_scale=1.0,
        )
        model.fit_report = FitReport(0, 0.0, 0.0, 0.0, False, False)
        return model
    Xs = (X - x_shift) / x_scale
    ys = (y - y_shift) / y_scale
    params, report = _train_network(Xs, ys, 1, squared_loss_grad, cfg, labels_for_split=None)
    model = MlpRegressor(
        *params, x_shift=x_shift, x_scale=x_scale, y_shift=y_shift, y_scale=y_scale
    )
    model.fit_report = report
    return model
