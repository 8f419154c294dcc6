"""Core types of the interacting loss-process model.

A model instance has N processes. At every discrete step each process suffers
a nonnegative monetary loss driven by exponential noise, a fixed threshold,
and the recent loss activity of the other processes. These types carry the
constants and histories shared by the simulator, estimator, and analytics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import errors

__all__ = [
    "ModelParameters",
    "LossMatrix",
    "HistoryWindow",
    "NoiseSpec",
    "validate_parameters",
]


@dataclass(frozen=True, eq=False)
class ModelParameters:
    """All model constants.

    Attributes:
        n: number of processes N.
        theta: shape (n,) thresholds. Negative values model per-step loss
            avoidance; positive values a pathological drift.
        lam: shape (n,) exponential noise rates, strictly positive. Units are
            inverse monetary units.
        couplings: shape (n, n) matrix J. Entry [i, j] is the loss induced in
            process i by each recent nonzero loss of process j.
        horizons: shape (n, n) integer matrix. Entry [i, j] is the number of
            past steps over which losses of j can still influence i.
    """

    n: int
    theta: np.ndarray
    lam: np.ndarray
    couplings: np.ndarray
    horizons: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=np.float64))
        object.__setattr__(
            self, "couplings", np.asarray(self.couplings, dtype=np.float64)
        )
        object.__setattr__(self, "horizons", np.asarray(self.horizons))

    @property
    def max_horizon(self) -> int:
        """Depth of history a simulation or estimation window needs."""
        return int(np.max(self.horizons)) if self.horizons.size else 0


def _require_shape(name: str, value: np.ndarray, expected: tuple) -> None:
    if value.shape != expected:
        raise errors.DimensionMismatch(name, expected, value.shape)


def validate_parameters(p: ModelParameters) -> ModelParameters:
    """Check every invariant of a parameter set.

    Returns a canonical copy (float64/int64 dtypes, read-only arrays) with the
    same content. Validating an already validated object is a no-op.

    Raises:
        DimensionMismatch: an array shape disagrees with ``p.n``.
        NonPositiveLambda: a noise rate is not finite and positive.
        NegativeHorizon: a horizon is negative or fractional.
        ZeroHorizonWithCoupling: a nonzero coupling could never fire.
        NonFiniteParameter: a threshold or coupling is NaN or infinite.
    """
    if not isinstance(p.n, (int, np.integer)) or p.n < 1:
        raise errors.DimensionMismatch("n", "positive integer", p.n)
    n = int(p.n)
    _require_shape("theta", p.theta, (n,))
    _require_shape("lambda", p.lam, (n,))
    _require_shape("couplings", p.couplings, (n, n))
    _require_shape("horizons", p.horizons, (n, n))

    for name, arr in (("theta", p.theta), ("couplings", p.couplings)):
        bad = np.argwhere(~np.isfinite(arr))
        if bad.size:
            raise errors.NonFiniteParameter(name, tuple(int(k) for k in bad[0]))

    # NaN compares false against 0, so this also catches non-finite rates.
    ok = np.isfinite(p.lam) & (p.lam > 0.0)
    if not ok.all():
        idx = int(np.argmin(ok))
        raise errors.NonPositiveLambda(idx, float(p.lam[idx]))

    horizons = np.asarray(p.horizons)
    as_int = np.floor(horizons).astype(np.int64, copy=False)
    integral = np.isfinite(horizons) & (horizons == as_int)
    if not integral.all() or (horizons < 0).any():
        bad = np.argwhere(~(integral & (horizons >= 0)))[0]
        i, j = int(bad[0]), int(bad[1])
        raise errors.NegativeHorizon(i, j, horizons[i, j])
    horizons = horizons.astype(np.int64)

    starved = (p.couplings != 0.0) & (horizons < 1)
    if starved.any():
        i, j = (int(k) for k in np.argwhere(starved)[0])
        raise errors.ZeroHorizonWithCoupling(i, j, float(p.couplings[i, j]))

    already_canonical = (
        p.horizons.dtype == np.int64
        and not any(
            arr.flags.writeable for arr in (p.theta, p.lam, p.couplings, p.horizons)
        )
    )
    if already_canonical:
        return p

    out = ModelParameters(
        n=n,
        theta=p.theta.copy(),
        lam=p.lam.copy(),
        couplings=p.couplings.copy(),
        horizons=horizons.copy(),
    )
    for arr in (out.theta, out.lam, out.couplings, out.horizons):
        arr.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class LossMatrix:
    """A T x N history of per-step, per-process losses.

    Rows are time steps t = 0..T-1, columns are processes. Entries are
    nonnegative; violating entries are rejected with their coordinates.
    """

    losses: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.losses, dtype=np.float64)
        if arr.ndim != 2:
            raise errors.DimensionMismatch("losses", "(T, N)", arr.shape)
        negative = np.argwhere(arr < 0)
        if negative.size:
            t, i = (int(k) for k in negative[0])
            raise ValueError(
                f"losses contain a negative entry {arr[t, i]} at (t, process) = ({t}, {i})"
            )
        arr = arr.copy() if arr is self.losses or arr.flags.writeable else arr
        arr.setflags(write=False)
        object.__setattr__(self, "losses", arr)

    @property
    def n_steps(self) -> int:
        return self.losses.shape[0]

    @property
    def n_processes(self) -> int:
        return self.losses.shape[1]


class HistoryWindow:
    """Ring buffer of the most recent W loss vectors.

    The window is what the equation of motion can see: counts of recent
    nonzero losses are always taken over the last ``horizon <= W`` steps.
    Mutable, and meant to be confined to a single simulation.
    """

    def __init__(self, depth: int, n_processes: int) -> None:
        if depth < 0:
            raise ValueError(f"depth must be >= 0, got {depth}")
        if n_processes < 1:
            raise ValueError(f"n_processes must be >= 1, got {n_processes}")
        self._buf = np.zeros((depth, n_processes), dtype=np.float64)
        self._next = 0

    @classmethod
    def zeros(cls, depth: int, n_processes: int) -> "HistoryWindow":
        """All-zero window: every process perfectly working so far."""
        return cls(depth, n_processes)

    @classmethod
    def from_array(cls, initial: np.ndarray) -> "HistoryWindow":
        """Build a window from a (W, N) array ordered oldest to newest."""
        initial = np.asarray(initial, dtype=np.float64)
        if initial.ndim != 2:
            raise errors.DimensionMismatch("initial", "(W, N)", initial.shape)
        if (initial < 0).any():
            raise ValueError("history entries must be nonnegative")
        window = cls(initial.shape[0], initial.shape[1])
        window._buf[:] = initial
        return window

    @property
    def depth(self) -> int:
        return self._buf.shape[0]

    @property
    def n_processes(self) -> int:
        return self._buf.shape[1]

    def push(self, losses: np.ndarray) -> None:
        """Append one step of losses, evicting the oldest stored step."""
        if self.depth == 0:
            return
        losses = np.asarray(losses, dtype=np.float64)
        if losses.shape != (self.n_processes,):
            raise errors.DimensionMismatch("losses", (self.n_processes,), losses.shape)
        if (losses < 0).any():
            raise ValueError("history entries must be nonnegative")
        self._buf[self._next] = losses
        self._next = (self._next + 1) % self.depth

    def recent(self, n_back: int) -> np.ndarray:
        """Return the last ``n_back`` loss vectors, oldest first."""
        if n_back > self.depth:
            raise errors.HorizonExceedsHistory(n_back, self.depth)
        if n_back == 0:
            return np.zeros((0, self.n_processes))
        idx = (self._next - np.arange(n_back, 0, -1)) % self.depth
        return self._buf[idx]

    def as_array(self) -> np.ndarray:
        """Full window content as a (W, N) array, oldest first."""
        return self.recent(self.depth)


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Noise rates plus the seed of the deterministic random stream.

    Draws are exponential with per-process rate ``rates[i]``, realized by
    inverse-CDF transform of a PCG64 stream (see the simulator module).
    """

    rates: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        rates = np.asarray(self.rates, dtype=np.float64)
        ok = np.isfinite(rates) & (rates > 0.0)
        if not ok.all():
            idx = int(np.argmin(ok))
            raise errors.NonPositiveLambda(idx, float(rates[idx]))
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "seed", int(self.seed))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of the stream."""
        return np.random.Generator(np.random.PCG64(self.seed))
