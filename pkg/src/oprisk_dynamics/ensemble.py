"""Monte Carlo ensembles, cumulative-loss statistics, and value-at-risk.

Reproducibility contract: every trajectory seed is a pure function of the
master seed and the trajectory index (splitmix-style derivation), and all
cross-trajectory reductions run in trajectory-index order. An ensemble is
therefore bit-identical for any batch size or worker schedule.

Seed layout: stream 0 feeds the coupling sampler (sample-per-run collapse),
stream 1 + m feeds trajectory m.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import errors
from .estimate import CouplingSampler, EstimateSet, collapse_mean
from .model import HistoryWindow, ModelParameters, validate_parameters
from .simulate import _evolve

logger = logging.getLogger(__name__)

__all__ = [
    "EnsembleResult",
    "derive_seed",
    "parameters_from_estimates",
    "run_ensemble",
    "var",
    "summarize",
    "SummaryReport",
]

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def derive_seed(master_seed: int, stream: int) -> int:
    """Derive an independent 64-bit seed for one numbered stream.

    Splitmix64 finalizer applied to master_seed + (stream + 1) gammas; equals
    the (stream + 1)-th output of a splitmix64 generator seeded with
    master_seed. Distinct streams give statistically independent seeds.
    """
    if master_seed < 0:
        raise ValueError(f"master_seed must be >= 0, got {master_seed}")
    if stream < 0:
        raise ValueError(f"stream must be >= 0, got {stream}")
    x = (master_seed + (stream + 1) * _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK
    return x ^ (x >> 31)


@dataclass(eq=False)
class EnsembleResult:
    """Aggregates of M simulated cumulative-loss paths.

    Attributes:
        mean_z: (T, N) ensemble average of z_i(t).
        std_z: (T, N) ensemble standard deviation, (M - 1) denominator.
        terminal_samples: (M, N) z_i(T) per trajectory, trajectory order.
        m_trajectories: M.
        master_seed: seed all trajectory streams were derived from.
        captured: 1-based step -> (M, N) z cross-section, for steps requested
            at run time; percentiles at interior steps need these.
    """

    mean_z: np.ndarray
    std_z: np.ndarray
    terminal_samples: np.ndarray
    m_trajectories: int
    master_seed: int
    captured: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.mean_z.shape[0]

    @property
    def n_processes(self) -> int:
        return self.mean_z.shape[1]


def parameters_from_estimates(
    estimates: EstimateSet, couplings: np.ndarray | None = None
) -> ModelParameters:
    """Assemble simulation parameters from an estimate set.

    Args:
        couplings: an already-collapsed matrix; None means mean collapse.

    Raises:
        EstimationDegenerate: some process has no usable threshold estimate.
    """
    missing = np.nonzero(~estimates.theta_available)[0]
    if missing.size:
        raise errors.EstimationDegenerate(missing.tolist())
    if couplings is None:
        couplings = collapse_mean(estimates)
    return validate_parameters(
        ModelParameters(
            n=estimates.n_processes,
            theta=estimates.theta_hat,
            lam=estimates.lam,
            couplings=couplings,
            horizons=estimates.horizons,
        )
    )


def run_ensemble(
    source,
    initial: HistoryWindow | None,
    n_steps: int,
    m_trajectories: int,
    master_seed: int,
    collapse: str = "mean",
    batch_size: int = 128,
    capture_steps=(),
) -> EnsembleResult:
    """Simulate M independent trajectories and aggregate their z paths.

    Args:
        source: ModelParameters, or an EstimateSet collapsed per ``collapse``
            ("mean" shares one matrix; "sample-per-run" draws a fresh
            couplings matrix per trajectory from the candidate lists, using
            derived stream 0).
        initial: starting history shared by every trajectory; None = zeros.
        n_steps: trajectory length T.
        m_trajectories: M >= 2.
        master_seed: trajectory m uses derived stream 1 + m.
        batch_size: trajectories evolved concurrently; never affects results.
        capture_steps: 1-based steps whose z cross-sections to keep for
            interior-step percentiles.

    Returns:
        EnsembleResult with unbiased (M - 1) standard deviations.
    """
    if m_trajectories < 2:
        raise ValueError(f"m_trajectories must be >= 2, got {m_trajectories}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")

    sampler = None
    if isinstance(source, EstimateSet):
        if collapse == "mean":
            p = parameters_from_estimates(source)
        elif collapse == "sample-per-run":
            sampler = CouplingSampler(source, derive_seed(master_seed, 0))
            p = parameters_from_estimates(source, couplings=sampler())
        else:
            raise ValueError(f"unknown collapse strategy {collapse!r}")
    else:
        if collapse != "mean":
            raise ValueError("sample-per-run collapse requires an EstimateSet")
        p = validate_parameters(source)

    n = p.n
    w = p.max_horizon
    if initial is None:
        initial_arr = np.zeros((w, n))
    else:
        if initial.n_processes != n:
            raise errors.DimensionMismatch(
                "initial", (w, n), (initial.depth, initial.n_processes)
            )
        initial_arr = initial.recent(w)

    capture = sorted(set(int(s) for s in capture_steps))
    for s in capture:
        if not 1 <= s <= n_steps:
            raise errors.HorizonOutOfRange(s, n_steps)

    # couplings drawn up front in trajectory order, so trajectory m carries
    # the same matrix no matter how the batches are cut
    if sampler is not None:
        coupling_stack = np.empty((m_trajectories, n, n))
        coupling_stack[0] = p.couplings
        for m in range(1, m_trajectories):
            coupling_stack[m] = sampler()
    else:
        coupling_stack = np.broadcast_to(p.couplings, (m_trajectories, n, n))

    sum_z = np.zeros((n_steps, n))
    sumsq_z = np.zeros((n_steps, n))
    scratch = np.empty((n_steps, n))
    terminal = np.empty((m_trajectories, n))
    captured = {s: np.empty((m_trajectories, n)) for s in capture}

    for start in range(0, m_trajectories, batch_size):
        bs = min(batch_size, m_trajectories - start)
        generators = [
            np.random.Generator(np.random.PCG64(derive_seed(master_seed, 1 + start + b)))
            for b in range(bs)
        ]
        out = np.empty((n_steps, bs, n))
        _evolve(
            p.theta,
            p.lam,
            np.ascontiguousarray(coupling_stack[start : start + bs]),
            p.horizons,
            initial_arr,
            n_steps,
            generators,
            out,
        )
        np.cumsum(out, axis=0, out=out)
        # accumulate in trajectory-index order: batch size must not change
        # floating-point results
        for b in range(bs):
            z = out[:, b, :]
            sum_z += z
            np.multiply(z, z, out=scratch)
            sumsq_z += scratch
            terminal[start + b] = z[-1]
            for s in capture:
                captured[s][start + b] = z[s - 1]
        del z, out  # the view must not pin the batch buffer across iterations
        logger.debug("ensemble batch %d..%d of %d done", start, start + bs, m_trajectories)

    m = float(m_trajectories)
    mean_z = sum_z / m
    var_z = (sumsq_z - m * mean_z * mean_z) / (m - 1.0)
    np.maximum(var_z, 0.0, out=var_z)
    std_z = np.sqrt(var_z)
    return EnsembleResult(
        mean_z=mean_z,
        std_z=std_z,
        terminal_samples=terminal,
        m_trajectories=m_trajectories,
        master_seed=master_seed,
        captured=captured,
    )


def var(samples, confidence: float) -> float:
    """Nearest-rank percentile of a sample: the smallest observed value with
    at least a ``confidence`` fraction of the sample at or below it.

    Sorted ascending, returns the element at 1-based rank
    ceil(confidence * M), clamped to [1, M]. No interpolation: the result is
    always an observed value.
    """
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size == 0:
        raise errors.EmptySample("var requires at least one sample")
    if not (np.isfinite(confidence) and 0.0 < confidence < 1.0):
        raise errors.InvalidOrder(f"confidence must lie in (0, 1), got {confidence!r}")
    rank = math.ceil(confidence * s.size)
    rank = min(max(rank, 1), s.size)
    return float(np.sort(s, kind="stable")[rank - 1])


@dataclass(eq=False)
class SummaryReport:
    """Per-process cross-section report at one step.

    ``var_by_confidence`` is None when the ensemble kept no z cross-section
    at the step (interior steps must be requested via capture_steps).
    """

    step: int
    mean: np.ndarray
    std: np.ndarray
    confidences: tuple
    var_by_confidence: dict | None


def summarize(
    e: EnsembleResult, horizon_steps: int, confidences=(0.999,)
) -> SummaryReport:
    """Report mean, std, and VaR per process at a 1-based step.

    Pure function of the EnsembleResult. VaR needs the z cross-section: it is
    always available at the final step, and at interior steps captured when
    the ensemble ran.

    Raises:
        HorizonOutOfRange: step outside [1, T].
    """
    t = int(horizon_steps)
    if not 1 <= t <= e.n_steps:
        raise errors.HorizonOutOfRange(t, e.n_steps)
    if t == e.n_steps:
        section = e.terminal_samples
    else:
        section = e.captured.get(t)

    var_by_confidence = None
    if section is not None:
        var_by_confidence = {
            float(c): np.array([var(section[:, i], c) for i in range(e.n_processes)])
            for c in confidences
        }
    return SummaryReport(
        step=t,
        mean=e.mean_z[t - 1].copy(),
        std=e.std_z[t - 1].copy(),
        confidences=tuple(float(c) for c in confidences),
        var_by_confidence=var_by_confidence,
    )
