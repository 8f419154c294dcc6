"""File formats, database ingestion with time binning, and configuration.

Formats (UTF-8, comma-separated, `.` decimal separator, 1-based indices):

* loss database: header ``t,process,amount``, one positive-amount record per
  line; ``t`` is an integer step or an ISO-8601 timestamp.
* series tables: header ``t,process,value``, full (step, process) grid.
* histograms: header ``bin_left,bin_right,count``.
* configuration: one JSON document; see ``load_config``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from datetime import datetime
from importlib import resources
from typing import Iterable, NamedTuple

import numpy as np

from . import errors
from .estimate import lambda_from_p, lambda_from_quantile
from .model import LossMatrix, ModelParameters, validate_parameters

__all__ = [
    "RawLossRecord",
    "read_loss_records",
    "ingest",
    "write_loss_database",
    "write_series",
    "write_histogram",
    "read_samples",
    "RunConfig",
    "load_config",
    "reference_config_path",
]


def reference_config_path() -> str:
    """Path of the bundled five-process reference configuration."""
    return str(resources.files(__package__) / "data" / "reference.json")

_DB_HEADER = ["t", "process", "amount"]
_SERIES_HEADER = ["t", "process", "value"]
_HIST_HEADER = ["bin_left", "bin_right", "count"]


class RawLossRecord(NamedTuple):
    """One historical loss: when, which process, how much (> 0)."""

    timestamp: float
    process_id: int
    amount: float


def _parse_timestamp(text: str, line_no: int) -> float:
    try:
        return float(text)
    except ValueError:
        pass
    try:
        # datetime.fromisoformat in 3.10 rejects a trailing Z
        return datetime.fromisoformat(text.replace("Z", "+00:00")).timestamp()
    except ValueError:
        raise errors.MalformedRecord(
            line_no, f"timestamp {text!r} is neither a number nor ISO-8601"
        ) from None


def read_loss_records(source) -> list[RawLossRecord]:
    """Parse a loss database from a path or an iterable of lines.

    Raises:
        MalformedRecord: wrong header, wrong field count, unparsable values.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as handle:
            return _parse_records(handle)
    return _parse_records(source)


def _parse_records(lines: Iterable[str]) -> list[RawLossRecord]:
    reader = csv.reader(lines)
    records = []
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != _DB_HEADER:
        raise errors.MalformedRecord(1, f"expected header {','.join(_DB_HEADER)!r}")
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise errors.MalformedRecord(line_no, f"expected 3 fields, got {len(row)}")
        ts = _parse_timestamp(row[0].strip(), line_no)
        try:
            process_id = int(row[1])
        except ValueError:
            raise errors.MalformedRecord(
                line_no, f"process id {row[1]!r} is not an integer"
            ) from None
        try:
            amount = float(row[2])
        except ValueError:
            raise errors.MalformedRecord(
                line_no, f"amount {row[2]!r} is not a number"
            ) from None
        records.append(RawLossRecord(ts, process_id, amount))
    return records


def ingest(
    records: Iterable[RawLossRecord],
    resolution: float,
    n: int,
    origin: float | None = None,
    n_steps: int | None = None,
) -> LossMatrix:
    """Bin raw loss records into a dense (T, N) loss matrix.

    A record lands in step floor((timestamp - origin) / resolution); records
    sharing a (step, process) bin are summed; empty bins are 0. By default
    the origin is the earliest timestamp and T = last occupied step + 1;
    pinning ``origin`` and ``n_steps`` preserves loss-free leading or
    trailing steps, making export -> ingest lossless.

    Raises:
        EmptyDatabase, UnknownProcess, NonPositiveAmount.
        ValueError: resolution <= 0, or a record falls outside a pinned range.
    """
    if not resolution > 0:
        raise ValueError(f"resolution must be > 0, got {resolution!r}")
    records = list(records)
    if not records:
        raise errors.EmptyDatabase("no loss records to ingest")
    for rec in records:
        if not 1 <= rec.process_id <= n:
            raise errors.UnknownProcess(rec.process_id, n)
        if not (np.isfinite(rec.amount) and rec.amount > 0):
            raise errors.NonPositiveAmount(rec.amount, f"timestamp {rec.timestamp}")

    t_min = min(rec.timestamp for rec in records) if origin is None else origin
    steps = [math.floor((rec.timestamp - t_min) / resolution) for rec in records]
    last = max(steps)
    if min(steps) < 0:
        raise ValueError(f"record at {min(steps)} steps before the origin {t_min}")
    if n_steps is None:
        n_steps = last + 1
    elif last >= n_steps:
        raise ValueError(f"record in step {last + 1} beyond the pinned {n_steps} steps")

    losses = np.zeros((n_steps, n))
    for rec, step in zip(records, steps):
        losses[step, rec.process_id - 1] += rec.amount
    return LossMatrix(losses)


def write_loss_database(path, losses) -> None:
    """Write nonzero losses as ``t,process,amount`` records, steps 1-based."""
    arr = losses.losses if isinstance(losses, LossMatrix) else np.asarray(losses)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(_DB_HEADER)
        for t, i in zip(*np.nonzero(arr)):
            writer.writerow([int(t) + 1, int(i) + 1, repr(float(arr[t, i]))])


def write_series(path, values) -> None:
    """Write a (T, N) table as the full ``t,process,value`` grid, 1-based."""
    arr = np.asarray(values)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(_SERIES_HEADER)
        for t in range(arr.shape[0]):
            for i in range(arr.shape[1]):
                writer.writerow([t + 1, i + 1, repr(float(arr[t, i]))])


def write_histogram(path, samples, n_bins: int = 60) -> None:
    """Histogram a sample vector into ``bin_left,bin_right,count`` rows."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size == 0:
        raise errors.EmptySample("cannot histogram an empty sample")
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    counts, edges = np.histogram(s, bins=n_bins)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(_HIST_HEADER)
        for k in range(counts.shape[0]):
            writer.writerow([repr(float(edges[k])), repr(float(edges[k + 1])), int(counts[k])])


def read_samples(path) -> np.ndarray:
    """Read one float per line (blank lines and # comments skipped)."""
    values = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise errors.MalformedRecord(
                    line_no, f"sample {text!r} is not a number"
                ) from None
    if not values:
        raise errors.EmptySample(f"no samples in {path}")
    return np.array(values)


@dataclass(eq=False)
class RunConfig:
    """A parsed and validated run configuration."""

    parameters: ModelParameters
    n_steps: int
    master_seed: int | None
    m_trajectories: int
    fraction: float
    collapse: str
    confidences: tuple
    resolution: float
    histogram_bins: int
    out_dir: str


def _require(block: dict, key: str, path: str):
    if key not in block:
        raise errors.ConfigError(f"{path}.{key}", "required key missing")
    return block[key]


def _noise_rates(noise_specs, theta: np.ndarray) -> np.ndarray:
    """Each per-process entry holds exactly one of p / lambda / quantile."""
    lam = np.zeros(theta.shape[0])
    for i, spec in enumerate(noise_specs):
        where = f"model.noise[{i + 1}]"
        if not isinstance(spec, dict):
            raise errors.ConfigError(where, "must be an object")
        keys = set(spec)
        if len(keys & {"p", "lambda", "quantile"}) != 1 or keys - {"p", "lambda", "quantile"}:
            raise errors.ConfigError(
                where, "exactly one of 'p', 'lambda', 'quantile' required"
            )
        try:
            if "p" in spec:
                lam[i] = lambda_from_p(float(spec["p"]), float(theta[i]))
            elif "lambda" in spec:
                lam[i] = float(spec["lambda"])
            else:
                q = spec["quantile"]
                if not isinstance(q, dict) or set(q) != {"value", "alpha"}:
                    raise errors.ConfigError(
                        where + ".quantile", "needs exactly the keys 'value' and 'alpha'"
                    )
                lam[i] = lambda_from_quantile(float(q["value"]), float(q["alpha"]))
        except (errors.InvalidProbability, errors.NonNegativeTheta,
                errors.InvalidQuantile, errors.InvalidOrder) as exc:
            raise errors.ConfigError(where, str(exc)) from exc
        except (TypeError, ValueError) as exc:
            raise errors.ConfigError(where, f"not a number: {exc}") from exc
    return lam


def _build_parameters(model: dict) -> ModelParameters:
    theta_raw = _require(model, "theta", "model")
    if not isinstance(theta_raw, list) or not theta_raw:
        raise errors.ConfigError("model.theta", "must be a nonempty list of numbers")
    theta = np.asarray(theta_raw, dtype=np.float64)
    n = theta.shape[0]

    noise_specs = _require(model, "noise", "model")
    if not isinstance(noise_specs, list) or len(noise_specs) != n:
        raise errors.ConfigError("model.noise", f"must list exactly {n} entries")
    lam = _noise_rates(noise_specs, theta)

    couplings = np.zeros((n, n))
    for k, triple in enumerate(model.get("couplings", [])):
        where = f"model.couplings[{k + 1}]"
        if not (isinstance(triple, list) and len(triple) == 3):
            raise errors.ConfigError(where, "must be an [i, j, value] triple")
        i, j, value = triple
        if not (isinstance(i, int) and isinstance(j, int) and 1 <= i <= n and 1 <= j <= n):
            raise errors.ConfigError(where, f"indices must be integers in [1, {n}]")
        couplings[i - 1, j - 1] = float(value)

    horizons_raw = model.get("horizons", 0)
    if isinstance(horizons_raw, (int, float)):
        # scalar applies to every declared coupling
        horizons = np.where(couplings != 0.0, int(horizons_raw), 0)
    else:
        horizons = np.asarray(horizons_raw)
        if horizons.shape != (n, n):
            raise errors.ConfigError("model.horizons", f"matrix must be {n}x{n}")

    try:
        return validate_parameters(
            ModelParameters(n=n, theta=theta, lam=lam, couplings=couplings, horizons=horizons)
        )
    except errors.OpriskError as exc:
        raise errors.ConfigError("model", str(exc)) from exc


def load_config(path) -> RunConfig:
    """Load and validate a JSON run configuration.

    Schema (1-based indices everywhere):

    * ``model``: ``theta`` (list), ``noise`` (per-process, exactly one of
      ``{"p": x}``, ``{"lambda": x}``, ``{"quantile": {"value": q,
      "alpha": a}}``), ``couplings`` ([i, j, value] triples), ``horizons``
      (scalar for every coupling, or an NxN matrix).
    * ``simulation``: ``n_steps``; optional ``seed``, ``m_trajectories``.
    * ``estimation``: optional ``fraction`` (default 1.0), ``collapse``
      ("mean" or "sample-per-run", default "sample-per-run").
    * ``output``: optional ``confidences``, ``resolution``,
      ``histogram_bins``, ``out_dir``.

    Raises:
        ConfigError: always names the offending key.
    """
    try:
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise errors.ConfigError(str(path), f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise errors.ConfigError(str(path), f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise errors.ConfigError(str(path), "top level must be an object")

    model = _require(doc, "model", "config")
    parameters = _build_parameters(model)

    sim = _require(doc, "simulation", "config")
    n_steps = _require(sim, "n_steps", "simulation")
    if not (isinstance(n_steps, int) and n_steps >= 1):
        raise errors.ConfigError("simulation.n_steps", "must be an integer >= 1")
    master_seed = sim.get("seed")
    if master_seed is not None and not (isinstance(master_seed, int) and master_seed >= 0):
        raise errors.ConfigError("simulation.seed", "must be an integer >= 0")
    m_trajectories = sim.get("m_trajectories", 1000)
    if not (isinstance(m_trajectories, int) and m_trajectories >= 2):
        raise errors.ConfigError("simulation.m_trajectories", "must be an integer >= 2")

    est = doc.get("estimation", {})
    fraction = est.get("fraction", 1.0)
    if not (isinstance(fraction, (int, float)) and 0.0 < fraction <= 1.0):
        raise errors.ConfigError("estimation.fraction", "must lie in (0, 1]")
    collapse = est.get("collapse", "sample-per-run")
    if collapse not in ("mean", "sample-per-run"):
        raise errors.ConfigError(
            "estimation.collapse", "must be 'mean' or 'sample-per-run'"
        )

    out = doc.get("output", {})
    confidences = out.get("confidences", [0.999])
    if not isinstance(confidences, list) or not confidences or not all(
        isinstance(c, (int, float)) and 0.0 < c < 1.0 for c in confidences
    ):
        raise errors.ConfigError("output.confidences", "must be a list of values in (0, 1)")
    resolution = out.get("resolution", 1.0)
    if not (isinstance(resolution, (int, float)) and resolution > 0):
        raise errors.ConfigError("output.resolution", "must be > 0")
    histogram_bins = out.get("histogram_bins", 60)
    if not (isinstance(histogram_bins, int) and histogram_bins >= 1):
        raise errors.ConfigError("output.histogram_bins", "must be an integer >= 1")
    out_dir = out.get("out_dir", ".")
    if not isinstance(out_dir, str):
        raise errors.ConfigError("output.out_dir", "must be a string path")

    return RunConfig(
        parameters=parameters,
        n_steps=n_steps,
        master_seed=master_seed,
        m_trajectories=m_trajectories,
        fraction=float(fraction),
        collapse=collapse,
        confidences=tuple(float(c) for c in confidences),
        resolution=float(resolution),
        histogram_bins=histogram_bins,
        out_dir=out_dir,
    )
