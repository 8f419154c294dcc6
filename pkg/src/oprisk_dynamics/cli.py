"""Command-line front end.

Subcommands: simulate, estimate, forecast, validate, var. Every run is fully
determined by the config file plus flags; there is no hidden entropy. Errors
leave one JSON line on stderr and map to stable exit codes:

    0  success
    2  configuration or usage problem
    3  data problem (database, samples, file formats)
    4  estimation too degenerate to proceed
    1  anything unexpected
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import errors, io
from .ensemble import run_ensemble, var
from .estimate import EstimateSet, estimate_from_database
from .model import NoiseSpec
from .simulate import simulate
from .validation import run_validation

_CONFIG_EXIT = 2
_DATA_EXIT = 3
_DEGENERATE_EXIT = 4

_DATA_ERRORS = (
    errors.MalformedRecord,
    errors.EmptyDatabase,
    errors.EmptySample,
    errors.UnknownProcess,
    errors.NonPositiveAmount,
    errors.DatabaseTooShort,
    OSError,
)
_DEGENERATE_ERRORS = (errors.EstimationDegenerate, errors.MissingTheta)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opriskdyn",
        description="Simulate, estimate, and forecast interacting operational losses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, config=False, seed=False, trajectories=False, fraction=False,
                   confidence=False, resolution=False, out_dir=False):
        if config:
            p.add_argument("--config", help="JSON run configuration")
        if seed:
            p.add_argument("--seed", type=int, help="override simulation.seed")
        if trajectories:
            p.add_argument(
                "--trajectories", type=int, help="override simulation.m_trajectories"
            )
        if fraction:
            p.add_argument(
                "--fraction", type=float, help="override estimation.fraction"
            )
        if confidence:
            p.add_argument(
                "--confidence", type=float, action="append",
                help="VaR confidence level, repeatable",
            )
        if resolution:
            p.add_argument(
                "--resolution", type=float, help="override output.resolution (time bin)"
            )
        if out_dir:
            p.add_argument("--out-dir", help="override output.out_dir")

    p = sub.add_parser("simulate", help="one trajectory -> database + cumulative series")
    add_common(p, config=True, seed=True, out_dir=True)

    p = sub.add_parser("estimate", help="database -> estimates JSON with diagnostics")
    add_common(p, config=True, fraction=True, resolution=True, out_dir=True)
    p.add_argument("--database", required=True, help="loss database (t,process,amount)")

    p = sub.add_parser("forecast", help="parameters or database -> ensemble + VaR table")
    add_common(p, config=True, seed=True, trajectories=True, confidence=True,
               resolution=True, out_dir=True)
    p.add_argument("--database", help="estimate from this database first")

    p = sub.add_parser("validate", help="synthesize, re-estimate, forecast, compare")
    add_common(p, config=True, seed=True, trajectories=True, fraction=True,
               confidence=True, out_dir=True)

    p = sub.add_parser("var", help="nearest-rank percentile of a samples file")
    add_common(p, confidence=True)
    p.add_argument("samples", help="file with one sample per line")

    return parser


def _emit_error(exc: BaseException) -> None:
    line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
    print(line, file=sys.stderr)


def _load_config(args, default_reference=False) -> io.RunConfig:
    path = args.config
    if path is None:
        if not default_reference:
            raise errors.ConfigError("--config", "required for this subcommand")
        path = io.reference_config_path()
    config = io.load_config(path)
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise errors.ConfigError("--seed", "must be >= 0")
        config.master_seed = args.seed
    if getattr(args, "trajectories", None) is not None:
        if args.trajectories < 2:
            raise errors.ConfigError("--trajectories", "must be >= 2")
        config.m_trajectories = args.trajectories
    if getattr(args, "fraction", None) is not None:
        if not 0.0 < args.fraction <= 1.0:
            raise errors.ConfigError("--fraction", "must lie in (0, 1]")
        config.fraction = args.fraction
    if getattr(args, "confidence", None):
        for c in args.confidence:
            if not 0.0 < c < 1.0:
                raise errors.ConfigError("--confidence", "must lie in (0, 1)")
        config.confidences = tuple(args.confidence)
    if getattr(args, "resolution", None) is not None:
        if args.resolution <= 0:
            raise errors.ConfigError("--resolution", "must be > 0")
        config.resolution = args.resolution
    if getattr(args, "out_dir", None) is not None:
        config.out_dir = args.out_dir
    return config


def _require_seed(config: io.RunConfig) -> int:
    if config.master_seed is None:
        raise errors.ConfigError("simulation.seed", "required (set it or pass --seed)")
    return config.master_seed


def _prepare_out_dir(config: io.RunConfig) -> str:
    os.makedirs(config.out_dir, exist_ok=True)
    return config.out_dir


def _warn_var_resolution(m: int, confidences) -> None:
    for c in confidences:
        needed = math.ceil(10.0 / (1.0 - c))
        if m < needed:
            print(
                f"warning: {m} samples resolve the {c:g} percentile poorly; "
                f"use at least {needed}",
                file=sys.stderr,
            )


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    seed = _require_seed(config)
    out_dir = _prepare_out_dir(config)
    p = config.parameters
    traj = simulate(p, None, config.n_steps, NoiseSpec(rates=p.lam, seed=seed))
    db_path = os.path.join(out_dir, "database.csv")
    z_path = os.path.join(out_dir, "cumulative.csv")
    io.write_loss_database(db_path, traj.losses)
    io.write_series(z_path, traj.cumulative)
    print(f"simulated {config.n_steps} steps of {p.n} processes (seed {seed})")
    print(f"wrote {db_path}")
    print(f"wrote {z_path}")
    return 0


def _estimates_from_file(config: io.RunConfig, database: str) -> EstimateSet:
    records = io.read_loss_records(database)
    matrix = io.ingest(records, config.resolution, config.parameters.n)
    steps = int(config.fraction * matrix.n_steps)
    p = config.parameters
    return estimate_from_database(matrix.losses[:steps], p.horizons, p.lam)


def _cmd_estimate(args) -> int:
    config = _load_config(args)
    out_dir = _prepare_out_dir(config)
    estimates = _estimates_from_file(config, args.database)
    doc = estimates.to_json_dict()
    doc["fraction_used"] = config.fraction
    path = os.path.join(out_dir, "estimates.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
        handle.write("\n")
    usable = sum(len(v) for v in estimates.j_hat.values())
    print(f"estimated {int(estimates.theta_available.sum())}/{estimates.n_processes} "
          f"thresholds, {usable} coupling candidates")
    print(f"wrote {path}")
    return 0


def _cmd_forecast(args) -> int:
    config = _load_config(args)
    seed = _require_seed(config)
    out_dir = _prepare_out_dir(config)
    if args.database is not None:
        source = _estimates_from_file(config, args.database)
        collapse = config.collapse
    else:
        source = config.parameters
        collapse = "mean"
    ensemble = run_ensemble(
        source, None, config.n_steps, config.m_trajectories, seed, collapse=collapse
    )
    _warn_var_resolution(config.m_trajectories, config.confidences)

    mean_path = os.path.join(out_dir, "forecast_mean_z.csv")
    std_path = os.path.join(out_dir, "forecast_std_z.csv")
    io.write_series(mean_path, ensemble.mean_z)
    io.write_series(std_path, ensemble.std_z)
    written = [mean_path, std_path]
    n = ensemble.n_processes
    for i in range(n):
        sample_path = os.path.join(out_dir, f"terminal_p{i + 1}.txt")
        with open(sample_path, "w", encoding="utf-8") as handle:
            for value in ensemble.terminal_samples[:, i]:
                handle.write(f"{float(value)!r}\n")
        hist_path = os.path.join(out_dir, f"histogram_p{i + 1}.csv")
        io.write_histogram(hist_path, ensemble.terminal_samples[:, i], config.histogram_bins)
        written += [sample_path, hist_path]

    table_path = os.path.join(out_dir, "var_table.csv")
    with open(table_path, "w", encoding="utf-8") as handle:
        handle.write("process,confidence,var\n")
        for i in range(n):
            for c in config.confidences:
                value = var(ensemble.terminal_samples[:, i], c)
                handle.write(f"{i + 1},{c:g},{value!r}\n")
                print(f"process {i + 1} VaR({c:g}) = {value:.6g}")
    written.append(table_path)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_validate(args) -> int:
    config = _load_config(args, default_reference=True)
    seed = _require_seed(config)
    out_dir = _prepare_out_dir(config)
    report = run_validation(
        config.parameters, config.n_steps, config.fraction, config.m_trajectories, seed
    )
    _warn_var_resolution(config.m_trajectories, config.confidences)

    report_path = os.path.join(out_dir, "validation_report.json")
    with open(report_path, "w", encoding="utf-8") as handle:
        json.dump(report.to_json_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    io.write_series(os.path.join(out_dir, "z_true.csv"), report.z_true)
    io.write_series(os.path.join(out_dir, "forecast_mean_z.csv"), report.ensemble.mean_z)
    io.write_series(os.path.join(out_dir, "forecast_std_z.csv"), report.ensemble.std_z)
    for i in range(config.parameters.n):
        io.write_histogram(
            os.path.join(out_dir, f"histogram_p{i + 1}.csv"),
            report.ensemble.terminal_samples[:, i],
            config.histogram_bins,
        )

    for i in range(config.parameters.n):
        print(
            f"process {i + 1}: delta_theta = {report.delta_theta[i]:.4f}, "
            f"coverage = {report.coverage[i]:.3f}"
        )
    for (i, j), delta in sorted(report.delta_j.items()):
        print(f"coupling ({i + 1},{j + 1}): delta_j = {delta:.4f}")
    print(f"wrote {report_path}")
    return 0


def _cmd_var(args) -> int:
    samples = io.read_samples(args.samples)
    confidences = args.confidence or [0.999]
    for c in confidences:
        if not 0.0 < c < 1.0:
            raise errors.ConfigError("--confidence", "must lie in (0, 1)")
    _warn_var_resolution(samples.shape[0], confidences)
    for c in confidences:
        print(repr(var(samples, c)))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "forecast": _cmd_forecast,
    "validate": _cmd_validate,
    "var": _cmd_var,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; keep a machine-readable line too
        if exc.code:
            print(json.dumps({"error": "UsageError", "message": "invalid arguments"}),
                  file=sys.stderr)
            return _CONFIG_EXIT
        return 0
    try:
        return _COMMANDS[args.command](args)
    except errors.ConfigError as exc:
        _emit_error(exc)
        return _CONFIG_EXIT
    except _DATA_ERRORS as exc:
        _emit_error(exc)
        return _DATA_EXIT
    except _DEGENERATE_ERRORS as exc:
        _emit_error(exc)
        return _DEGENERATE_EXIT
    except errors.InvalidOrder as exc:
        _emit_error(exc)
        return _CONFIG_EXIT
    except Exception as exc:  # noqa: BLE001 - last-resort stable exit code
        _emit_error(exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
