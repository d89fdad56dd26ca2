"""Warped Gaussian process regression with HSIC-based causal direction scoring."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    DegenerateWarpError,
    DomainError,
    EmptyDatasetError,
    FitFailure,
    InvalidInputError,
    InvalidStartError,
    NumericalFailure,
    RangeError,
    SchemaError,
    ScoringFailure,
    WarpGPError,
)
from .kernel import KernelParams  # noqa: E402
from .warp import WarpParams  # noqa: E402
from .optimize import FitConfig, maximize  # noqa: E402
from .gp import GPRegressor, GpModel, PredictiveDist, load_model, save_model  # noqa: E402
from .wgp import WarpedGPRegressor, WarpedPredictive, WgpModel  # noqa: E402
from .hsic import hsic_statistic, permutation_threshold  # noqa: E402
from .causal import CausalPair, CausalScore, ScoringConfig, score_collection, score_pair  # noqa: E402
from .evaluation import MetricReport, kfold_eval, metrics, repeated_split_eval, roc_auc  # noqa: E402
from .data import Dataset, load_csv, synth_anm_pairs, synth_warped_gp  # noqa: E402

__all__ = [
    "CausalPair", "CausalScore", "Dataset", "DegenerateWarpError", "DomainError", "EmptyDatasetError",
    "FitConfig", "FitFailure", "GPRegressor", "GpModel", "InvalidInputError", "InvalidStartError",
    "KernelParams", "MetricReport", "NumericalFailure", "PredictiveDist", "RangeError", "SchemaError",
    "ScoringConfig", "ScoringFailure", "WarpGPError", "WarpParams", "WarpedGPRegressor", "WarpedPredictive",
    "WgpModel", "hsic_statistic", "kfold_eval", "load_csv", "load_model", "maximize", "metrics",
    "permutation_threshold", "repeated_split_eval", "roc_auc", "save_model", "score_collection",
    "score_pair", "synth_anm_pairs", "synth_warped_gp",
]
