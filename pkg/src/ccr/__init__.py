"""Surrogate models for discontinuous functions via cluster-classify-regress."""

from .active import (
    AcquisitionScore,
    ActiveConfig,
    HullDomain,
    HullSolverError,
    PerturbKernel,
    Reservoir,
    active_loop,
    find_boundary_pairs,
    hull_contains,
    needs_refit,
    perturb_candidates,
    score,
    score_values,
    select_boundary_pairs,
    select_from_reservoir,
    select_in_hull,
)
from .benchmarks import (
    BenchmarkProblem,
    CriticalGradientConfig,
    chi,
    f1,
    f2,
    f3,
    f4,
    get_problem,
    sample_inputs,
)
from .clustering import ClusterModel, ElbowReport, assign_labels, elbow_select, kmeans_fit
from .data import (
    Dataset,
    ScalingTransform,
    SplitSpec,
    apply_scaling,
    fit_scaling,
    invert_scaling,
    load_dataset,
    save_dataset,
    split,
)
from .forest import ForestClassifier, ForestConfig, ForestRegressor, fit_forest_classifier, fit_forest_regressor
from .mlp import (
    AdamState,
    MlpClassifier,
    MlpConfig,
    MlpRegressor,
    adam_update,
    fit_classifier,
    fit_regressor,
    softmax,
)
from .pipeline import (
    CcrConfig,
    CcrModel,
    Metrics,
    ccr_fit,
    ccr_predict,
    evaluate,
    load_model,
    save_model,
)

__version__ = "0.1.0"
