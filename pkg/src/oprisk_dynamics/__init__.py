"""Dynamical operational-risk engine.

Losses of N interacting processes evolve in discrete time: each step, process
i loses ramp(sum_j J_ij C_ij(t) + theta_i + xi_i(t)), where C_ij counts the
recent nonzero losses of process j inside a bounded memory window, theta_i is
a fixed avoidance threshold, and xi_i is exponential noise. The package
simulates the dynamics, estimates (theta, J) from loss databases by
frequentist inversion of zero-loss ratios, and forecasts cumulative-loss
distributions and VaR by Monte Carlo.
"""

from . import errors
from .ensemble import (
    EnsembleResult,
    SummaryReport,
    derive_seed,
    parameters_from_estimates,
    run_ensemble,
    summarize,
    var,
)
from .estimate import (
    CouplingCandidate,
    CouplingSampler,
    EstimateSet,
    EstimationDiagnostics,
    EventClassCounts,
    classify_events,
    collapse_estimates,
    collapse_mean,
    estimate_couplings,
    estimate_from_database,
    estimate_theta,
    lambda_from_p,
    lambda_from_quantile,
)
from .io import (
    RawLossRecord,
    RunConfig,
    ingest,
    load_config,
    read_loss_records,
    reference_config_path,
    write_histogram,
    write_loss_database,
    write_series,
)
from .model import (
    HistoryWindow,
    LossMatrix,
    ModelParameters,
    NoiseSpec,
    validate_parameters,
)
from .simulate import Trajectory, cumulative, ramp, simulate, step, trigger_count
from .validation import ValidationReport, relative_error, run_validation

__version__ = "1.0.0"

__all__ = [
    "errors",
    "CouplingCandidate",
    "CouplingSampler",
    "EnsembleResult",
    "EstimateSet",
    "EstimationDiagnostics",
    "EventClassCounts",
    "HistoryWindow",
    "LossMatrix",
    "ModelParameters",
    "NoiseSpec",
    "RawLossRecord",
    "RunConfig",
    "SummaryReport",
    "Trajectory",
    "ValidationReport",
    "classify_events",
    "collapse_estimates",
    "collapse_mean",
    "cumulative",
    "derive_seed",
    "estimate_couplings",
    "estimate_from_database",
    "estimate_theta",
    "ingest",
    "lambda_from_p",
    "lambda_from_quantile",
    "load_config",
    "parameters_from_estimates",
    "ramp",
    "read_loss_records",
    "reference_config_path",
    "relative_error",
    "run_ensemble",
    "run_validation",
    "simulate",
    "step",
    "summarize",
    "trigger_count",
    "validate_parameters",
    "var",
    "write_histogram",
    "write_loss_database",
    "write_series",
]
