"""Frequentist parameter estimation from a loss database.

The database is scanned once into sufficient statistics: for every event
(t, i) with a full memory window behind it, either all trigger counts are
zero (the base class, informative about theta_i), or exactly one influencer
j is active with count c (the (i, j, c) class, informative about J_ij), or
several influencers are active at once and the event fits no closed-form
inversion and is discarded with a diagnostic count.

Zero-loss ratios within each class invert into estimates:

    theta_i    = (1/lam_i) * ln(1 - base_zero/base_total)
    J_ij^(c)   = (1/c) * ( -theta_i + (1/lam_i) * ln(1 - class_zero/class_total) )

A ratio of 0 or 1 admits no finite inverse; such counters yield warnings and
availability flags instead of numbers. Noise rates are never estimated here;
they come from spontaneous-loss probabilities or quantiles via the helpers.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import errors
from .errors import DegeneracyWarning
from .model import LossMatrix

logger = logging.getLogger(__name__)

__all__ = [
    "EventClassCounts",
    "CouplingCandidate",
    "EstimationDiagnostics",
    "EstimateSet",
    "classify_events",
    "estimate_theta",
    "estimate_couplings",
    "estimate_from_database",
    "collapse_mean",
    "CouplingSampler",
    "collapse_estimates",
    "lambda_from_p",
    "lambda_from_quantile",
]


@dataclass(eq=False)
class EventClassCounts:
    """Event counters per conditioning class.

    Attributes:
        base_total: per process i, events with every trigger count zero.
        base_zero: of those, events with zero loss.
        class_total: shape (N, N, W) where entry [i, j, c-1] counts events
            with C_ij = c and all other counts zero.
        class_zero: of those, events with zero loss of process i.
        discarded: per process, events with two or more active influencers,
            excluded from every class.
        n_steps: length of the scanned database.
        window: number of leading steps skipped (the maximum horizon).
        horizons: the (N, N) horizon matrix the classes were built with.

    Counters from disjoint scans (same horizons) merge additively with ``+``.
    """

    base_total: np.ndarray
    base_zero: np.ndarray
    class_total: np.ndarray
    class_zero: np.ndarray
    discarded: np.ndarray
    n_steps: int
    window: int
    horizons: np.ndarray

    def __post_init__(self) -> None:
        if (self.base_zero > self.base_total).any() or (self.base_zero < 0).any():
            raise ValueError("base_zero must lie in [0, base_total]")
        if (self.class_zero > self.class_total).any() or (self.class_zero < 0).any():
            raise ValueError("class_zero must lie in [0, class_total]")

    @property
    def n_processes(self) -> int:
        return self.base_total.shape[0]

    def __add__(self, other: "EventClassCounts") -> "EventClassCounts":
        if not np.array_equal(self.horizons, other.horizons):
            raise ValueError("cannot merge counters built with different horizons")
        return EventClassCounts(
            base_total=self.base_total + other.base_total,
            base_zero=self.base_zero + other.base_zero,
            class_total=self.class_total + other.class_total,
            class_zero=self.class_zero + other.class_zero,
            discarded=self.discarded + other.discarded,
            n_steps=self.n_steps + other.n_steps,
            window=self.window,
            horizons=self.horizons,
        )


class CouplingCandidate(NamedTuple):
    """One J_ij estimate from one count class, with its evidence size."""

    count_class: int
    estimate: float
    support: int


@dataclass(eq=False)
class EstimationDiagnostics:
    """What the estimator had to skip or flag.

    ``degenerate_theta`` lists (process index, reason); ``skipped_classes``
    lists (i, j, c, reason) for classes whose zero-ratio was 0 or 1. Indices
    are 0-based; serialization converts to 1-based.
    """

    discarded: np.ndarray
    degenerate_theta: list
    skipped_classes: list
    n_steps: int
    window: int


@dataclass(eq=False)
class EstimateSet:
    """Everything estimation produced, sufficient to re-simulate.

    ``j_hat`` maps (i, j) pairs to candidate lists, one candidate per usable
    count class; pairs without usable classes are absent and collapse to 0.
    """

    theta_hat: np.ndarray
    theta_available: np.ndarray
    j_hat: dict
    lam: np.ndarray
    horizons: np.ndarray
    diagnostics: EstimationDiagnostics | None

    def __post_init__(self) -> None:
        bad = self.theta_available & (self.theta_hat > 0)
        if bad.any():
            raise ValueError("available theta estimates must be <= 0")

    @property
    def n_processes(self) -> int:
        return self.theta_hat.shape[0]

    def to_json_dict(self) -> dict:
        """Plain JSON types, 1-based indices, all candidates with their
        (count class, support) provenance."""
        doc = {
            "theta_hat": [float(t) for t in self.theta_hat],
            "theta_available": [bool(a) for a in self.theta_available],
            "lambda": [float(v) for v in self.lam],
            "coupling_candidates": {
                f"{i + 1},{j + 1}": [
                    {
                        "count_class": cand.count_class,
                        "estimate": cand.estimate,
                        "support": cand.support,
                    }
                    for cand in candidates
                ]
                for (i, j), candidates in sorted(self.j_hat.items())
            },
        }
        if self.diagnostics is not None:
            diag = self.diagnostics
            doc["diagnostics"] = {
                "discarded": [int(d) for d in diag.discarded],
                "degenerate_theta": [
                    {"process": i + 1, "reason": reason} for i, reason in diag.degenerate_theta
                ],
                "skipped_classes": [
                    {"i": i + 1, "j": j + 1, "count_class": c, "reason": reason}
                    for i, j, c, reason in diag.skipped_classes
                ],
                "window": diag.window,
                "estimation_steps": diag.n_steps,
            }
        return doc


def classify_events(db, horizons: np.ndarray) -> EventClassCounts:
    """Scan a loss database into per-class event counters.

    Counting starts at t = max horizon so every trigger count sees a full
    window; the strict predicate loss > 0 defines activity.

    Args:
        db: LossMatrix or (T, N) array.
        horizons: (N, N) nonnegative integer matrix.

    Raises:
        DatabaseTooShort: fewer than max horizon + 1 steps.
    """
    losses = db.losses if isinstance(db, LossMatrix) else np.asarray(db, dtype=np.float64)
    n_steps, n = losses.shape
    horizons = np.asarray(horizons)
    if horizons.shape != (n, n):
        raise errors.DimensionMismatch("horizons", (n, n), horizons.shape)
    w = int(horizons.max()) if horizons.size else 0
    if n_steps < w + 1:
        raise errors.DatabaseTooShort(n_steps, w + 1)

    positive = losses > 0.0
    csum = np.zeros((n_steps + 1, n), dtype=np.int64)
    np.cumsum(positive, axis=0, out=csum[1:])

    rows = n_steps - w
    trigger = np.zeros((rows, n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            h = int(horizons[i, j])
            if h:
                # count of positive losses of j over [t-h, t-1] for t in [w, T)
                trigger[:, i, j] = csum[w:n_steps, j] - csum[w - h : n_steps - h, j]

    n_active = (trigger > 0).sum(axis=2)
    zero_loss = ~positive[w:]

    base_mask = n_active == 0
    base_total = base_mask.sum(axis=0)
    base_zero = (base_mask & zero_loss).sum(axis=0)
    discarded = (n_active >= 2).sum(axis=0)

    class_total = np.zeros((n, n, w), dtype=np.int64)
    class_zero = np.zeros((n, n, w), dtype=np.int64)
    single = n_active == 1
    for i in range(n):
        idx = np.nonzero(single[:, i])[0]
        if idx.size == 0:
            continue
        counts_i = trigger[idx, i, :]
        j_star = np.argmax(counts_i > 0, axis=1)
        c = counts_i[np.arange(idx.size), j_star]
        np.add.at(class_total[i], (j_star, c - 1), 1)
        zl = zero_loss[idx, i]
        np.add.at(class_zero[i], (j_star[zl], c[zl] - 1), 1)

    return EventClassCounts(
        base_total=base_total.astype(np.int64),
        base_zero=base_zero.astype(np.int64),
        class_total=class_total,
        class_zero=class_zero,
        discarded=discarded.astype(np.int64),
        n_steps=n_steps,
        window=w,
        horizons=horizons.astype(np.int64),
    )


def estimate_theta(counts: EventClassCounts, lam: np.ndarray):
    """Invert base-class zero-ratios into threshold estimates.

    Returns:
        (theta_hat, available): values and per-entry availability. Degenerate
        ratios (no events, ratio 0, ratio 1) report the value 0.0, set the
        flag False, and emit a DegeneracyWarning; they are data, not errors.
    """
    lam = np.asarray(lam, dtype=np.float64)
    ok = np.isfinite(lam) & (lam > 0)
    if not ok.all():
        idx = int(np.argmin(ok))
        raise errors.NonPositiveLambda(idx, float(lam[idx]))

    n = counts.n_processes
    theta_hat = np.zeros(n)
    available = np.zeros(n, dtype=bool)
    for i in range(n):
        total = int(counts.base_total[i])
        zero = int(counts.base_zero[i])
        if total == 0:
            warnings.warn(
                f"process {i + 1}: no base-class events, theta unavailable",
                DegeneracyWarning,
                stacklevel=2,
            )
        elif zero == 0:
            warnings.warn(
                f"process {i + 1}: base zero-loss ratio is 0, theta degenerate at 0",
                DegeneracyWarning,
                stacklevel=2,
            )
        elif zero == total:
            warnings.warn(
                f"process {i + 1}: base zero-loss ratio is 1, theta unavailable",
                DegeneracyWarning,
                stacklevel=2,
            )
        else:
            theta_hat[i] = np.log1p(-zero / total) / lam[i]
            available[i] = True
    return theta_hat, available


def estimate_couplings(
    counts: EventClassCounts,
    theta_hat: np.ndarray,
    lam: np.ndarray,
    theta_available: np.ndarray | None = None,
) -> dict:
    """Invert single-active class ratios into per-class coupling candidates.

    Every (i, j, c) class with events and a non-degenerate zero-ratio yields
    one candidate; degenerate classes are skipped with a warning naming the
    1-based (i, j, c). The candidate keeps the class support so callers can
    weight or filter later.

    Raises:
        MissingTheta: a usable class needs theta_hat[i] but it is unavailable.
    """
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if theta_available is None:
        theta_available = np.ones(theta_hat.shape[0], dtype=bool)

    n = counts.n_processes
    j_hat: dict = {}
    for i in range(n):
        for j in range(n):
            for c in range(1, int(counts.horizons[i, j]) + 1):
                total = int(counts.class_total[i, j, c - 1])
                if total == 0:
                    continue
                zero = int(counts.class_zero[i, j, c - 1])
                if zero == 0 or zero == total:
                    warnings.warn(
                        f"class (i, j, c) = ({i + 1}, {j + 1}, {c}): zero-loss "
                        f"ratio is {zero // total}, candidate skipped",
                        DegeneracyWarning,
                        stacklevel=2,
                    )
                    continue
                if not theta_available[i]:
                    raise errors.MissingTheta(i)
                estimate = (-theta_hat[i] + np.log1p(-zero / total) / lam[i]) / c
                j_hat.setdefault((i, j), []).append(
                    CouplingCandidate(count_class=c, estimate=float(estimate), support=total)
                )
    return j_hat


def estimate_from_database(db, horizons: np.ndarray, lam: np.ndarray) -> EstimateSet:
    """Classify a database and invert both estimators in one pass."""
    counts = classify_events(db, horizons)
    theta_hat, available = estimate_theta(counts, lam)
    j_hat = estimate_couplings(counts, theta_hat, lam, theta_available=available)

    degenerate_theta = []
    for i in range(counts.n_processes):
        total, zero = int(counts.base_total[i]), int(counts.base_zero[i])
        if total == 0:
            degenerate_theta.append((i, "no-base-events"))
        elif zero == 0:
            degenerate_theta.append((i, "zero-ratio-0"))
        elif zero == total:
            degenerate_theta.append((i, "zero-ratio-1"))
    skipped = []
    nonzero = np.argwhere(counts.class_total > 0)
    for i, j, k in nonzero:
        total = int(counts.class_total[i, j, k])
        zero = int(counts.class_zero[i, j, k])
        if zero == 0:
            skipped.append((int(i), int(j), int(k) + 1, "zero-ratio-0"))
        elif zero == total:
            skipped.append((int(i), int(j), int(k) + 1, "zero-ratio-1"))

    diagnostics = EstimationDiagnostics(
        discarded=counts.discarded,
        degenerate_theta=degenerate_theta,
        skipped_classes=skipped,
        n_steps=counts.n_steps,
        window=counts.window,
    )
    n_candidates = sum(len(v) for v in j_hat.values())
    logger.info(
        "estimated %d/%d thresholds and %d coupling candidates from %d steps",
        int(available.sum()),
        counts.n_processes,
        n_candidates,
        counts.n_steps,
    )
    return EstimateSet(
        theta_hat=theta_hat,
        theta_available=available,
        j_hat=j_hat,
        lam=np.asarray(lam, dtype=np.float64),
        horizons=counts.horizons,
        diagnostics=diagnostics,
    )


def collapse_mean(estimates: EstimateSet) -> np.ndarray:
    """Unweighted mean of the candidates per pair; 0 where none exist."""
    n = estimates.n_processes
    collapsed = np.zeros((n, n))
    for (i, j), candidates in estimates.j_hat.items():
        collapsed[i, j] = float(np.mean([cand.estimate for cand in candidates]))
    return collapsed


class CouplingSampler:
    """Seeded sampler drawing one couplings matrix per call.

    Each call picks, independently and uniformly, one candidate per (i, j)
    pair; pairs without candidates stay 0. The draw sequence is a pure
    function of the seed.
    """

    def __init__(self, estimates: EstimateSet, seed: int) -> None:
        self._n = estimates.n_processes
        self._pairs = [
            (pair, np.array([cand.estimate for cand in candidates]))
            for pair, candidates in sorted(estimates.j_hat.items())
        ]
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def __call__(self) -> np.ndarray:
        matrix = np.zeros((self._n, self._n))
        for (i, j), values in self._pairs:
            matrix[i, j] = values[self._gen.integers(values.shape[0])]
        return matrix


def collapse_estimates(estimates: EstimateSet, strategy: str, seed: int | None = None):
    """Collapse multi-class candidates into usable coupling matrices.

    Args:
        strategy: "mean" for one unweighted-mean matrix, "sample-per-run" for
            a seeded CouplingSampler yielding a fresh matrix per call.
        seed: required for "sample-per-run".
    """
    if strategy == "mean":
        return collapse_mean(estimates)
    if strategy == "sample-per-run":
        if seed is None:
            raise ValueError("sample-per-run collapse requires a seed")
        return CouplingSampler(estimates, seed)
    raise ValueError(f"unknown collapse strategy {strategy!r}")


def lambda_from_p(p: float, theta: float) -> float:
    """Noise rate from the spontaneous-loss probability: lam = ln(p)/theta.

    With threshold theta < 0, an isolated process loses with per-step
    probability p = exp(lam * theta); this inverts that relation.
    """
    if not (np.isfinite(p) and 0.0 < p < 1.0):
        raise errors.InvalidProbability(f"p must lie in (0, 1), got {p!r}")
    if not (np.isfinite(theta) and theta < 0.0):
        raise errors.NonNegativeTheta(f"theta must be < 0, got {theta!r}")
    return float(np.log(p) / theta)


def lambda_from_quantile(q: float, alpha: float) -> float:
    """Noise rate from one loss quantile: lam = -ln(1 - alpha)/q.

    ``q`` is the alpha-quantile of the per-event loss size distribution
    (exponential), e.g. q = median and alpha = 0.5.
    """
    if not (np.isfinite(q) and q > 0.0):
        raise errors.InvalidQuantile(f"q must be > 0, got {q!r}")
    if not (np.isfinite(alpha) and 0.0 < alpha < 1.0):
        raise errors.InvalidOrder(f"alpha must lie in (0, 1), got {alpha!r}")
    return float(-np.log1p(-alpha) / q)
