"""Discrete-time evolution of the interacting loss processes.

Each step, process i suffers

    l_i(t) = ramp( sum_j J_ij * C_ij(t) + theta_i + xi_i(t) )

where C_ij(t) counts the strictly positive losses of process j over the last
``horizons[i][j]`` steps and xi_i is exponential noise with rate lam[i].

Noise is reproducible by contract: a PCG64 stream seeded explicitly, one
uniform draw per process per step in process order, transformed by the
inverse CDF ``xi = -ln(u) / lam`` with ``u = 1 - r`` so that u never hits 0.

The batch engine evolves B independent trajectories in lockstep over shared
(theta, lam, horizons) but per-trajectory couplings and noise streams. Its
arithmetic is ordered so results are identical for any batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .model import HistoryWindow, LossMatrix, ModelParameters, NoiseSpec, validate_parameters

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without the extra
    _HAVE_NUMBA = False

__all__ = ["Trajectory", "ramp", "trigger_count", "step", "simulate", "cumulative"]

_CHUNK_STEPS = 16384

# Compiled and pure-numpy step loops are arithmetically identical; this switch
# exists so tests can pin their equality and users can opt out.
use_compiled_kernel: bool = _HAVE_NUMBA


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One simulated path: losses, their running sums, and the seed used."""

    losses: LossMatrix
    cumulative: np.ndarray
    seed: int


def ramp(x: float) -> float:
    """x for x > 0, else 0."""
    return float(x) if x > 0.0 else 0.0


def trigger_count(history: HistoryWindow, i: int, j: int, horizon: int) -> int:
    """Number of strictly positive losses of process j in the last ``horizon`` steps.

    The influenced process ``i`` does not enter the count; it is part of the
    signature because the horizon is a property of the ordered pair (i, j).

    Raises:
        HorizonExceedsHistory: the window stores fewer than ``horizon`` steps.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    recent = history.recent(horizon)
    return int(np.count_nonzero(recent[:, j] > 0.0))


def step(p: ModelParameters, history: HistoryWindow, noise_draws: np.ndarray) -> np.ndarray:
    """Advance the system one step and push the result into ``history``.

    Args:
        p: validated model parameters.
        history: window of at least ``p.max_horizon`` past steps; mutated.
        noise_draws: length-N vector of nonnegative noise realizations.

    Returns:
        The length-N loss vector of the new step.
    """
    n = p.n
    noise_draws = np.asarray(noise_draws, dtype=np.float64)
    if noise_draws.shape != (n,):
        raise errors.DimensionMismatch("noise_draws", (n,), noise_draws.shape)
    if (noise_draws < 0).any():
        raise ValueError("noise draws must be nonnegative")

    inter = np.zeros(n)
    counts = np.zeros(n)
    for j in range(n):
        for i in range(n):
            h = int(p.horizons[i, j])
            counts[i] = trigger_count(history, i, j, h) if h else 0
        inter += p.couplings[:, j] * counts
    losses = np.maximum((inter + p.theta) + noise_draws, 0.0)
    history.push(losses)
    return losses


def cumulative(losses) -> np.ndarray:
    """Per-process running sums z_i(t) of a (T, N) loss array or LossMatrix."""
    arr = losses.losses if isinstance(losses, LossMatrix) else np.asarray(losses)
    return np.cumsum(arr, axis=0)


def simulate(
    p: ModelParameters,
    initial: HistoryWindow | None,
    n_steps: int,
    noise: NoiseSpec,
) -> Trajectory:
    """Evolve the equation of motion for ``n_steps`` steps.

    Deterministic given (p, initial, n_steps, noise.seed): two calls with the
    same arguments return bit-identical trajectories.

    Args:
        p: model parameters (validated here if not already).
        initial: starting history of depth >= max horizon; None means the
            all-zero window (no process has lost anything yet).
        n_steps: number of steps T >= 1.
        noise: rates and seed; rates must equal ``p.lam``.
    """
    p = validate_parameters(p)
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not np.array_equal(noise.rates, p.lam):
        raise ValueError("noise rates must equal the model lambda vector")
    w = p.max_horizon
    if initial is None:
        initial_arr = np.zeros((w, p.n))
    else:
        if initial.n_processes != p.n:
            raise errors.DimensionMismatch("initial", (w, p.n), (initial.depth, initial.n_processes))
        initial_arr = initial.recent(w)

    out = np.empty((n_steps, 1, p.n))
    _evolve(
        p.theta,
        p.lam,
        p.couplings[None, :, :],
        p.horizons,
        initial_arr,
        n_steps,
        [noise.generator()],
        out,
    )
    losses = LossMatrix(out[:, 0, :])
    z = np.cumsum(losses.losses, axis=0)
    z.setflags(write=False)
    return Trajectory(losses=losses, cumulative=z, seed=noise.seed)


def _evolve(
    theta: np.ndarray,
    lam: np.ndarray,
    couplings: np.ndarray,
    horizons: np.ndarray,
    initial: np.ndarray,
    n_steps: int,
    generators: list,
    out: np.ndarray,
    chunk_steps: int = _CHUNK_STEPS,
) -> None:
    """Batched engine filling ``out`` (n_steps, B, N) with losses.

    Args:
        theta, lam: shared (N,) parameter vectors.
        couplings: (B, N, N), one matrix per trajectory.
        horizons: shared (N, N) integer matrix.
        initial: (W, N) starting history, oldest first, shared by the batch.
        generators: B independent noise generators, consumed chunk-wise; each
            trajectory's stream is identical to per-step sequential draws.
        out: preallocated float64 output buffer.

    The per-step arithmetic mirrors ``step`` exactly: the interaction term is
    accumulated column by column in ascending j, then theta, then noise, then
    the ramp. Batch size must never change results, so no reduction ever
    crosses the trajectory axis.
    """
    n = theta.shape[0]
    n_batch = couplings.shape[0]
    w = int(horizons.max()) if horizons.size else 0
    hs = sorted(int(h) for h in np.unique(horizons) if h > 0)

    # counts_ext[0] is a permanent zero slot for horizon-0 pairs
    counts_ext = np.zeros((1 + len(hs), n_batch, n), dtype=np.int64)
    h_slot = {h: 1 + k for k, h in enumerate(hs)}
    slot_of_pair = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            h = int(horizons[i, j])
            slot_of_pair[i, j] = h_slot[h] if h else 0

    if w:
        ind_init = (initial[initial.shape[0] - w:] > 0.0)
        ring = np.repeat(ind_init[:, None, :], n_batch, axis=1).astype(np.int8)
        for h, slot in h_slot.items():
            counts_ext[slot] = ind_init[w - h:].sum(axis=0, dtype=np.int64)[None, :]
    else:
        ring = np.zeros((0, n_batch, n), dtype=np.int8)
    write_pos = 0

    couplings = np.ascontiguousarray(couplings)
    hs_arr = np.asarray(hs, dtype=np.int64)
    compiled = use_compiled_kernel and _HAVE_NUMBA
    # noise buffer is (B, chunk, N) so each member's slice is contiguous and
    # can be transformed in place without staging copies
    xi = np.empty((n_batch, min(chunk_steps, n_steps), n))

    for start in range(0, n_steps, chunk_steps):
        m = min(chunk_steps, n_steps - start)
        for b, gen in enumerate(generators):
            member = xi[b, :m]
            gen.random(out=member)
            np.subtract(1.0, member, out=member)
            np.log(member, out=member)
            np.negative(member, out=member)
            member /= lam
        if compiled:
            write_pos = _compiled_chunk(
                xi[:, :m],
                couplings,
                theta,
                slot_of_pair,
                hs_arr,
                counts_ext,
                ring,
                write_pos,
                out[start : start + m],
            )
        else:
            write_pos = _numpy_chunk(
                xi[:, :m],
                couplings,
                theta,
                slot_of_pair,
                h_slot,
                counts_ext,
                ring,
                write_pos,
                out[start : start + m],
            )


def _numpy_chunk(
    xi, couplings, theta, slot_of_pair, h_slot, counts_ext, ring, write_pos, out
) -> int:
    """Chunk loop in pure numpy; arithmetic order matches the compiled kernel."""
    n_batch, m, n = xi.shape
    w = ring.shape[0]
    live_cols = [j for j in range(n) if np.any(couplings[:, :, j] != 0.0)]
    col_couplings = {j: np.ascontiguousarray(couplings[:, :, j]) for j in live_cols}
    col_slots = {j: slot_of_pair[:, j] for j in live_cols}
    theta_row = theta[None, :]
    inter = np.empty((n_batch, n))
    prod = np.empty((n_batch, n))
    arg = np.empty((n_batch, n))
    ind = np.empty((n_batch, n), dtype=bool)
    for s in range(m):
        inter.fill(0.0)
        for j in live_cols:
            cj = counts_ext[col_slots[j], :, j]
            np.multiply(col_couplings[j], cj.T, out=prod)
            inter += prod
        np.add(inter, theta_row, out=arg)
        arg += xi[:, s, :]
        np.maximum(arg, 0.0, out=arg)
        out[s] = arg
        if w:
            np.greater(arg, 0.0, out=ind)
            for h, slot in h_slot.items():
                counts = counts_ext[slot]
                counts += ind
                counts -= ring[(write_pos - h) % w]
            ring[write_pos] = ind
            write_pos = (write_pos + 1) % w
    return write_pos


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _compiled_chunk(
        xi, couplings, theta, slot_of_pair, hs, counts_ext, ring, write_pos, out
    ):  # pragma: no cover - measured through its callers
        n_batch, m, n = xi.shape
        w = ring.shape[0]
        n_h = hs.shape[0]
        for s in range(m):
            for b in range(n_batch):
                for i in range(n):
                    acc = 0.0
                    for j in range(n):
                        acc += couplings[b, i, j] * counts_ext[slot_of_pair[i, j], b, j]
                    v = (acc + theta[i]) + xi[b, s, i]
                    out[s, b, i] = v if v > 0.0 else 0.0
            if w:
                for k in range(n_h):
                    old = write_pos - hs[k]
                    if old < 0:
                        old += w
                    for b in range(n_batch):
                        for i in range(n):
                            pos = 1 if out[s, b, i] > 0.0 else 0
                            counts_ext[k + 1, b, i] += pos - ring[old, b, i]
                for b in range(n_batch):
                    for i in range(n):
                        ring[write_pos, b, i] = 1 if out[s, b, i] > 0.0 else 0
                write_pos += 1
                if write_pos == w:
                    write_pos = 0
        return write_pos
