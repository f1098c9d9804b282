"""Least-squares identification from quantized snapshots, a computable bound on
the model error, and a robust guaranteed-cost state-feedback design."""

from .bound import ErrorBoundReport, check_robust_pe, compute_bound, decompose_error_oracle
from .errors import (
    DefinitenessError,
    InvalidInputError,
    PersistentExcitationError,
    QuantidError,
    RankDeficiencyError,
    RobustPEViolation,
    ShapeError,
)
from .linalg import CostWeights, LtiModel, factorize_cost, pinv_times, spectral_radius, svd_extremes
from .quantizer import (
    ChannelQuantizers,
    ErrorBudget,
    QuantizerSpec,
    budget_from_resolution,
    quantize_dataset,
    quantize_scalar,
    scale_dataset,
)
from .simulation import ExperimentConfig, get_preset, run_experiment, simulate_closed_loop
from .synthesis import SynthesisResult, synthesize, verify_gcc
from .sysid import DataMatrices, build_data_matrices, identify

__version__ = "0.1.0"

__all__ = [
    "ChannelQuantizers", "CostWeights", "DataMatrices", "DefinitenessError", "ErrorBoundReport",
    "ErrorBudget", "ExperimentConfig", "InvalidInputError", "LtiModel", "PersistentExcitationError",
    "QuantidError", "QuantizerSpec", "RankDeficiencyError", "RobustPEViolation", "ShapeError",
    "SynthesisResult", "budget_from_resolution", "build_data_matrices", "check_robust_pe",
    "compute_bound", "decompose_error_oracle", "factorize_cost", "get_preset", "identify",
    "pinv_times", "quantize_dataset", "quantize_scalar", "run_experiment", "scale_dataset",
    "simulate_closed_loop", "spectral_radius", "svd_extremes", "synthesize", "verify_gcc",
]
