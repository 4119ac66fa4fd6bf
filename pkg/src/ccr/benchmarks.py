"""Closed-form benchmark problems and input samplers.

Four analytic targets exercise discontinuities of increasing difficulty,
plus a ten-input critical-gradient transport law: ion heat transport is
zero below a threshold normalized temperature gradient and grows as a
power of the excess above it.

The threshold function shipped here is NOT the physical critical-gradient
model (that formula lives in proprietary transport codes); it is a smooth
nonlinear stand-in with fixed coefficients, pluggable via
CriticalGradientConfig.crit_model. The map from primitive variables in
[0,1]^17 to the ten model inputs is likewise a documented stand-in: a
seeded affine mix followed by coordinate-wise monotone squashes, so the
inputs concentrate away from the corners of their bounding box.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isqrt
from typing import Callable

import numpy as np

from .data import Dataset

# named slots of the ten transport-model inputs
SLOT_NAMES = ("R", "T", "T_prime", "T_e", "n", "n_prime", "q", "s_hat", "z_eff", "rho")
_SLOT_LO = np.array([1.0, 0.5, 0.2, 0.5, 0.5, 0.05, 1.0, 0.0, 1.0, 0.10])
_SLOT_HI = np.array([3.0, 2.5, 6.0, 4.5, 5.0, 2.00, 5.0, 2.5, 4.0, 0.95])
PRIMITIVE_DIM = 17


def f1(x):
    """x * indicator(x >= 1)."""
    x = np.asarray(x, dtype=float)
    return np.where(x >= 1.0, x, 0.0)


def f2(x):
    """(x + 1) for x < 0, x for x >= 0; unit jump at the origin."""
    x = np.asarray(x, dtype=float)
    return np.where(x < 0.0, x + 1.0, x)


def f3(x):
    """Gaussian arc up to 4, then plateaus 1, -1, 0 with jumps at 4, 6, 8."""
    x = np.asarray(x, dtype=float)
    return np.select(
        [x <= 4.0, x <= 6.0, x <= 8.0],
        [np.exp(-x * x / 20.0), 1.0, -1.0],
        default=0.0,
    )


def f4(x):
    """Tensor product f3(x1) * f3(x2) on the plane."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return f3(x[:, 0]) * f3(x[:, 1])


def heaviside(t):
    """H(t) = 1 for t >= 0, else 0."""
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0.0, 1.0, 0.0)


def standin_crit_model(x: np.ndarray) -> np.ndarray:
    """Stand-in critical normalized gradient; smooth, positive, never zero.

    A stiff sigmoid cliff drops the threshold across one surface of the
    input space, mimicking the sharp onset of turbulent transport: crossing
    it switches a large region between zero and strong flux within a thin
    smooth band.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    T, T_e, n, q, s_hat, z_eff, rho = (
        x[:, 1], x[:, 3], x[:, 4], x[:, 6], x[:, 7], x[:, 8], x[:, 9],
    )
    base = 7.0 + 0.6 * q / (1.0 + s_hat) + 0.4 * np.sqrt(T_e / T) + 0.3 * np.log1p(z_eff)
    onset = (
        0.55 * (q - 3.0)
        + 1.1 * (rho - 0.5)
        + 0.45 * (s_hat - 1.2)
        + 0.25 * (np.log(n) - 0.9)
    )
    return base - 5.0 / (1.0 + np.exp(-48.0 * onset))


@dataclass
class CriticalGradientConfig:
    """Transport-law constants and the pluggable threshold function."""

    S: float = 1.0
    alpha: float = 1.0
    crit_model: Callable[[np.ndarray], np.ndarray] | None = None
    primitive_seed: int = 0

    def __post_init__(self):
        if self.S <= 0:
            raise ValueError("S must be positive")
        if self.crit_model is None:
            self.crit_model = standin_crit_model


def normalized_gradient(x: np.ndarray) -> np.ndarray:
    """g = R * T' / T from the named input slots."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return x[:, 0] * x[:, 2] / x[:, 1]


def chi(x: np.ndarray, cfg: CriticalGradientConfig | None = None):
    """Ion thermal diffusivity: S (g - g_crit)^alpha H(|g / g_crit| - 1).

    Zero below the threshold; for alpha = 1 the positive branch rises
    continuously from zero at g = g_crit.
    """
    cfg = cfg or CriticalGradientConfig()
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 1
    x2 = np.atleast_2d(x_arr)
    g = normalized_gradient(x2)
    g_crit = np.asarray(cfg.crit_model(x2), dtype=float).ravel()
    if np.any(g_crit == 0.0):
        raise ValueError("crit_model returned 0; threshold ratio undefined")
    gate = heaviside(np.abs(g / g_crit) - 1.0)
    base = np.where(gate > 0.0, g - g_crit, 0.0)
    with np.errstate(invalid="ignore"):
        y = cfg.S * base**cfg.alpha * gate
    return float(y[0]) if single else y


def _mixing_matrix(seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, size=(len(SLOT_NAMES), PRIMITIVE_DIM))
    A /= np.sqrt(PRIMITIVE_DIM)
    bias = rng.uniform(-0.2, 0.2, size=len(SLOT_NAMES))
    return A, bias


def primitive_to_inputs(omega: np.ndarray, primitive_seed: int = 0) -> np.ndarray:
    """Map primitive variables in [0,1]^17 onto the ten input slots."""
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    if omega.shape[1] != PRIMITIVE_DIM:
        raise ValueError(f"expected {PRIMITIVE_DIM} primitive columns")
    A, bias = _mixing_matrix(primitive_seed)
    u = (omega - 0.5) @ A.T + bias
    squash = 1.0 / (1.0 + np.exp(-4.0 * u))
    return _SLOT_LO + (_SLOT_HI - _SLOT_LO) * squash


@dataclass(frozen=True)
class BenchmarkProblem:
    """One test target: evaluator, sampler, and recommended pipeline setup."""

    name: str
    dim: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    sample: Callable[[int, np.random.Generator], np.ndarray]
    grid: Callable[[int], np.ndarray] | None
    recommended_clusters: int | None
    classifier_kind: str
    regressor_kind: str
    description: str


def _uniform_box(lo: float, hi: float, dim: int):
    def sampler(n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(lo, hi, size=(n, dim))

    return sampler


def _f3_grid(n: int) -> np.ndarray:
    return np.linspace(-4.0, 10.0, n)[:, None]


def _f4_axis(m: int) -> np.ndarray:
    h = 14.0 / m
    axis = -4.0 + (np.arange(m) + 0.5) * h
    # keep every coordinate at least half a cell from the jump lines
    for b in (4.0, 6.0, 8.0):
        close = np.abs(axis - b) < 0.5 * h
        axis[close] = np.where(axis[close] < b, b - 0.5 * h, b + 0.5 * h)
    return axis


def _f4_grid(n: int) -> np.ndarray:
    m = isqrt(n)
    if m * m != n:
        raise ValueError(f"f4 grid size must be a perfect square, got {n}")
    axis = _f4_axis(m)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _chi_sampler(cfg: CriticalGradientConfig):
    def sampler(n: int, rng: np.random.Generator) -> np.ndarray:
        omega = rng.uniform(0.0, 1.0, size=(n, PRIMITIVE_DIM))
        return primitive_to_inputs(omega, cfg.primitive_seed)

    return sampler


def make_problems(cfg: CriticalGradientConfig | None = None) -> dict[int, BenchmarkProblem]:
    cfg = cfg or CriticalGradientConfig()
    return {
        1: BenchmarkProblem(
            "f1", 1, lambda X: f1(np.atleast_2d(X)[:, 0]),
            _uniform_box(0.0, 2.0, 1), None, 2, "mlp", "mlp",
            "ramp switched on at x = 1",
        ),
        2: BenchmarkProblem(
            "f2", 1, lambda X: f2(np.atleast_2d(X)[:, 0]),
            _uniform_box(-1.0, 1.0, 1), None, 2, "mlp", "mlp",
            "two unit-slope pieces with a unit jump at 0",
        ),
        3: BenchmarkProblem(
            "f3", 1, lambda X: f3(np.atleast_2d(X)[:, 0]),
            _uniform_box(-4.0, 10.0, 1), _f3_grid, 4, "forest", "forest",
            "smooth arc followed by three plateaus",
        ),
        4: BenchmarkProblem(
            "f4", 2, f4,
            _uniform_box(-4.0, 10.0, 2), _f4_grid, 10, "forest", "forest",
            "product of two f3 factors on the plane",
        ),
        5: BenchmarkProblem(
            "chi", 10, lambda X: chi(X, cfg),
            _chi_sampler(cfg), None, 4, "mlp", "mlp",
            "critical-gradient ion heat transport (stand-in threshold)",
        ),
    }


_DEFAULT_PROBLEMS = None


def get_problem(key: int | str) -> BenchmarkProblem:
    """Look up a benchmark by number (1-5) or name."""
    global _DEFAULT_PROBLEMS
    if _DEFAULT_PROBLEMS is None:
        _DEFAULT_PROBLEMS = make_problems()
    if isinstance(key, str):
        for problem in _DEFAULT_PROBLEMS.values():
            if problem.name == key:
                return problem
        raise KeyError(f"unknown benchmark {key!r}")
    if key not in _DEFAULT_PROBLEMS:
        raise KeyError(f"benchmark number must be 1..5, got {key}")
    return _DEFAULT_PROBLEMS[key]


def sample_inputs(problem: BenchmarkProblem, n: int, seed: int = 0, grid: bool = False) -> Dataset:
    """Draw (or grid) inputs for a problem and label them with its evaluator."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if grid:
        if problem.grid is None:
            raise ValueError(f"{problem.name} has no grid sampler")
        X = problem.grid(n)
    else:
        X = problem.sample(n, np.random.default_rng(seed))
    return Dataset(X, problem.evaluate(X))
