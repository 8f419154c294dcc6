"""End-to-end self-validation: synthesize, re-estimate, re-simulate, compare.

The protocol, given true parameters:

1. simulate one database of T steps from a zero history;
2. estimate thresholds and couplings from the first floor(fraction * T)
   steps, taking the true noise rates and memory horizons as known;
3. run an M-trajectory forecast ensemble over the full T steps with
   sample-per-run coupling collapse;
4. report relative parameter errors (mean-collapsed couplings), and the
   distance of the true cumulative loss from the forecast mean in units of
   the forecast standard deviation.

Seed layout: the run's master seed derives stream 0 for the database
trajectory and stream 1 as the ensemble's own master.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import errors
from .ensemble import EnsembleResult, derive_seed, run_ensemble
from .estimate import EstimateSet, collapse_mean, estimate_from_database
from .model import ModelParameters, NoiseSpec, validate_parameters
from .simulate import simulate

logger = logging.getLogger(__name__)

__all__ = ["ValidationReport", "relative_error", "run_validation"]


def relative_error(true_value: float, estimate: float) -> float:
    """|estimate - true| / |true|; the true value must be nonzero."""
    if true_value == 0 or not np.isfinite(true_value):
        raise errors.ZeroTrueValue(
            f"relative error needs a nonzero finite true value, got {true_value!r}"
        )
    return abs(estimate - true_value) / abs(true_value)


@dataclass(eq=False)
class ValidationReport:
    """Outcome of one validation run.

    Attributes:
        delta_theta: per-process relative threshold errors.
        delta_j: (i, j) -> relative error of the mean-collapsed coupling,
            one entry per nonzero true coupling (0-based keys).
        coverage: per process, |z_true(T) - mean_z(T)| / std_z(T).
        fraction_used: share of the database the estimator saw.
        estimates: the full estimate set (None in self-test mode).
        z_true: (T, N) cumulative losses of the synthesized database.
        ensemble: the forecast ensemble aggregates.
        master_seed, n_steps, m_trajectories: reproduction coordinates.
    """

    delta_theta: np.ndarray
    delta_j: dict
    coverage: np.ndarray
    fraction_used: float
    estimates: EstimateSet | None
    z_true: np.ndarray
    ensemble: EnsembleResult
    master_seed: int
    n_steps: int
    m_trajectories: int

    def to_json_dict(self) -> dict:
        """Summary as plain JSON types; bulky series stay out (file exports
        carry them). Process indices and coupling keys are 1-based here."""
        est = self.estimates
        doc = {
            "master_seed": self.master_seed,
            "n_steps": self.n_steps,
            "m_trajectories": self.m_trajectories,
            "fraction_used": self.fraction_used,
            "delta_theta": [float(d) for d in self.delta_theta],
            "delta_j": {
                f"{i + 1},{j + 1}": float(d) for (i, j), d in sorted(self.delta_j.items())
            },
            "coverage": [float(c) for c in self.coverage],
            "z_true_terminal": [float(z) for z in self.z_true[-1]],
            "mean_z_terminal": [float(z) for z in self.ensemble.mean_z[-1]],
            "std_z_terminal": [float(z) for z in self.ensemble.std_z[-1]],
            "self_test": est is None,
        }
        if est is not None:
            doc.update(est.to_json_dict())
        return doc


def run_validation(
    p_true: ModelParameters,
    n_steps: int,
    fraction: float,
    m_trajectories: int,
    master_seed: int,
    use_true_parameters: bool = False,
    batch_size: int = 128,
    capture_steps=(),
) -> ValidationReport:
    """Run the full synthesize/estimate/forecast/compare protocol.

    Args:
        fraction: share (0, 1] of the database given to the estimator; the
            remainder is withheld, making the forecast a true extrapolation.
        use_true_parameters: self-test mode; skips estimation and forecasts
            with p_true itself (all relative errors are exactly 0).

    Raises:
        ValueError: fraction outside (0, 1].
        DatabaseTooShort: floor(fraction * T) leaves less than one full
            memory window plus one step.
        EstimationDegenerate: a threshold needed for forecasting has no
            usable estimate.
    """
    p_true = validate_parameters(p_true)
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction!r}")

    db_seed = derive_seed(master_seed, 0)
    ensemble_master = derive_seed(master_seed, 1)

    truth = simulate(p_true, None, n_steps, NoiseSpec(rates=p_true.lam, seed=db_seed))
    z_true = truth.cumulative

    est_steps = int(fraction * n_steps)
    if est_steps < p_true.max_horizon + 1:
        raise errors.DatabaseTooShort(est_steps, p_true.max_horizon + 1)

    n = p_true.n
    if use_true_parameters:
        estimates = None
        delta_theta = np.zeros(n)
        delta_j = {
            (int(i), int(j)): 0.0 for i, j in np.argwhere(p_true.couplings != 0.0)
        }
        ensemble = run_ensemble(
            p_true, None, n_steps, m_trajectories, ensemble_master,
            batch_size=batch_size, capture_steps=capture_steps,
        )
    else:
        estimates = estimate_from_database(
            truth.losses.losses[:est_steps], p_true.horizons, p_true.lam
        )
        delta_theta = np.array(
            [
                relative_error(p_true.theta[i], estimates.theta_hat[i])
                for i in range(n)
            ]
        )
        collapsed = collapse_mean(estimates)
        delta_j = {
            (int(i), int(j)): relative_error(p_true.couplings[i, j], collapsed[i, j])
            for i, j in np.argwhere(p_true.couplings != 0.0)
        }
        ensemble = run_ensemble(
            estimates, None, n_steps, m_trajectories, ensemble_master,
            collapse="sample-per-run", batch_size=batch_size, capture_steps=capture_steps,
        )

    gap = np.abs(z_true[-1] - ensemble.mean_z[-1])
    std = ensemble.std_z[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        coverage = np.where(std > 0.0, gap / std, np.where(gap == 0.0, 0.0, np.inf))

    logger.info(
        "validation seed %d: max delta_theta %.4g, max coverage %.4g",
        master_seed,
        float(delta_theta.max()) if n else 0.0,
        float(coverage.max()) if n else 0.0,
    )
    return ValidationReport(
        delta_theta=delta_theta,
        delta_j=delta_j,
        coverage=coverage,
        fraction_used=float(fraction),
        estimates=estimates,
        z_true=z_true,
        ensemble=ensemble,
        master_seed=master_seed,
        n_steps=n_steps,
        m_trajectories=m_trajectories,
    )
