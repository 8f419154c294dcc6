"""File formats, ingestion binning, and configuration validation."""

import csv
import json

import numpy as np
import pytest

from oprisk_dynamics import errors
from oprisk_dynamics.io import (
    RawLossRecord,
    ingest,
    load_config,
    read_loss_records,
    read_samples,
    reference_config_path,
    write_histogram,
    write_loss_database,
    write_series,
)
from oprisk_dynamics.model import LossMatrix, NoiseSpec
from oprisk_dynamics.simulate import simulate

from conftest import build_reference_parameters


def rec(t, p, a):
    return RawLossRecord(t, p, a)


class TestIngest:
    def test_same_bin_amounts_are_summed(self):
        m = ingest([rec(0, 1, 3.0), rec(0, 1, 2.0)], 1.0, 1)
        assert np.array_equal(m.losses, [[5.0]])

    def test_gaps_fill_with_zeros(self):
        m = ingest([rec(0, 1, 1.0), rec(3, 2, 2.0)], 1.0, 2)
        expected = np.zeros((4, 2))
        expected[0, 0] = 1.0
        expected[3, 1] = 2.0
        assert np.array_equal(m.losses, expected)

    def test_resolution_widens_bins(self):
        m = ingest([rec(0, 1, 1.0), rec(1, 1, 1.0), rec(2, 1, 4.0)], 2.0, 1)
        assert np.array_equal(m.losses, [[2.0], [4.0]])

    def test_origin_is_earliest_timestamp_by_default(self):
        m = ingest([rec(100, 1, 1.0), rec(102, 1, 2.0)], 1.0, 1)
        assert m.n_steps == 3
        assert m.losses[0, 0] == 1.0

    def test_iso_timestamps(self):
        records = [
            rec(_ts("2026-01-01T00:00:00"), 1, 1.0),
            rec(_ts("2026-01-01T00:00:05"), 1, 2.0),
        ]
        m = ingest(records, 1.0, 1)
        assert m.n_steps == 6
        assert m.losses[5, 0] == 2.0

    def test_pinned_origin_and_length(self):
        m = ingest([rec(5, 1, 1.0)], 1.0, 1, origin=1, n_steps=10)
        assert m.n_steps == 10
        assert m.losses[4, 0] == 1.0
        with pytest.raises(ValueError):
            ingest([rec(5, 1, 1.0)], 1.0, 1, origin=1, n_steps=4)
        with pytest.raises(ValueError):
            ingest([rec(0, 1, 1.0)], 1.0, 1, origin=1)

    def test_rejections(self):
        with pytest.raises(errors.EmptyDatabase):
            ingest([], 1.0, 1)
        with pytest.raises(errors.UnknownProcess):
            ingest([rec(0, 0, 1.0)], 1.0, 1)
        with pytest.raises(errors.UnknownProcess):
            ingest([rec(0, 3, 1.0)], 1.0, 2)
        for bad in (0.0, -1.0, np.nan):
            with pytest.raises(errors.NonPositiveAmount):
                ingest([rec(0, 1, bad)], 1.0, 1)
        with pytest.raises(ValueError):
            ingest([rec(0, 1, 1.0)], 0.0, 1)


def _ts(text):
    from datetime import datetime

    return datetime.fromisoformat(text).timestamp()


class TestDatabaseFiles:
    def test_round_trip_is_lossless(self, tmp_path, small_parameters):
        p = small_parameters
        traj = simulate(p, None, 64, NoiseSpec(rates=p.lam, seed=9))
        path = tmp_path / "db.csv"
        write_loss_database(path, traj.losses)
        records = read_loss_records(path)
        back = ingest(records, 1.0, p.n, origin=1, n_steps=64)
        assert np.array_equal(back.losses, traj.losses.losses)

    def test_round_trip_preserves_silent_edges(self, tmp_path):
        losses = np.zeros((5, 2))
        losses[2, 1] = 1.25
        path = tmp_path / "db.csv"
        write_loss_database(path, LossMatrix(losses))
        back = ingest(read_loss_records(path), 1.0, 2, origin=1, n_steps=5)
        assert np.array_equal(back.losses, losses)

    def test_database_file_shape(self, tmp_path):
        losses = np.array([[0.0, 2.5], [1.5, 0.0]])
        path = tmp_path / "db.csv"
        write_loss_database(path, losses)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["t", "process", "amount"]
        assert rows[1] == ["1", "2", "2.5"]
        assert rows[2] == ["2", "1", "1.5"]

    def test_header_is_enforced(self, tmp_path):
        path = tmp_path / "db.csv"
        path.write_text("time,proc,amt\n1,1,1.0\n")
        with pytest.raises(errors.MalformedRecord) as exc:
            read_loss_records(path)
        assert exc.value.line_no == 1

    @pytest.mark.parametrize(
        "line,reason_part",
        [
            ("2,1", "3 fields"),
            ("x,1,1.0", "timestamp"),
            ("2,one,1.0", "process id"),
            ("2,1,lots", "amount"),
        ],
    )
    def test_malformed_lines_carry_line_numbers(self, tmp_path, line, reason_part):
        path = tmp_path / "db.csv"
        path.write_text(f"t,process,amount\n1,1,1.0\n{line}\n")
        with pytest.raises(errors.MalformedRecord) as exc:
            read_loss_records(path)
        assert exc.value.line_no == 3
        assert reason_part in str(exc.value)

    def test_iso_and_blank_lines_parse(self, tmp_path):
        path = tmp_path / "db.csv"
        path.write_text(
            "t,process,amount\n2026-01-01T00:00:00,1,1.0\n\n2026-01-01T00:00:02Z,1,2.0\n"
        )
        records = read_loss_records(path)
        assert len(records) == 2
        assert records[0].amount == 1.0


class TestSeriesAndHistograms:
    def test_series_grid_round_trip(self, tmp_path):
        values = np.arange(12.0).reshape(4, 3) / 7.0
        path = tmp_path / "series.csv"
        write_series(path, values)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["t", "process", "value"]
        assert len(rows) == 1 + 12
        back = np.zeros((4, 3))
        for t, i, v in rows[1:]:
            back[int(t) - 1, int(i) - 1] = float(v)
        assert np.array_equal(back, values)

    def test_histogram_counts_cover_all_samples(self, tmp_path):
        rng = np.random.default_rng(3)
        samples = rng.exponential(size=500)
        path = tmp_path / "hist.csv"
        write_histogram(path, samples, n_bins=20)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["bin_left", "bin_right", "count"]
        assert len(rows) == 21
        assert sum(int(r[2]) for r in rows[1:]) == 500
        lefts = [float(r[0]) for r in rows[1:]]
        rights = [float(r[1]) for r in rows[1:]]
        assert all(l < r for l, r in zip(lefts, rights))
        assert lefts[1:] == rights[:-1]

    def test_histogram_rejects_empty(self, tmp_path):
        with pytest.raises(errors.EmptySample):
            write_histogram(tmp_path / "h.csv", [])

    def test_read_samples(self, tmp_path):
        path = tmp_path / "samples.txt"
        path.write_text("# terminal z\n1.5\n\n2.5\n-3.0\n")
        assert np.array_equal(read_samples(path), [1.5, 2.5, -3.0])
        bad = tmp_path / "bad.txt"
        bad.write_text("1.0\noops\n")
        with pytest.raises(errors.MalformedRecord) as exc:
            read_samples(bad)
        assert exc.value.line_no == 2
        empty = tmp_path / "empty.txt"
        empty.write_text("\n")
        with pytest.raises(errors.EmptySample):
            read_samples(empty)


def write_config(tmp_path, mutate=None):
    doc = json.loads(open(reference_config_path()).read())
    if mutate:
        mutate(doc)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


class TestLoadConfig:
    def test_reference_config_matches_builtin_scenario(self):
        config = load_config(reference_config_path())
        expected = build_reference_parameters()
        assert config.parameters.n == 5
        assert np.array_equal(config.parameters.theta, expected.theta)
        np.testing.assert_allclose(config.parameters.lam, expected.lam, rtol=1e-15)
        assert np.array_equal(config.parameters.couplings, expected.couplings)
        assert np.array_equal(config.parameters.horizons, expected.horizons)
        assert config.n_steps == 200000
        assert config.master_seed == 1
        assert config.m_trajectories == 1000
        assert config.fraction == 1.0
        assert config.collapse == "sample-per-run"
        assert config.confidences == (0.999,)

    def test_noise_specs_lambda_and_quantile(self, tmp_path):
        def mutate(doc):
            doc["model"]["theta"] = [-1.0, -2.0]
            doc["model"]["noise"] = [
                {"lambda": 4.0},
                {"quantile": {"value": 2.0, "alpha": 0.5}},
            ]
            doc["model"]["couplings"] = []
            doc["model"]["horizons"] = 0

        config = load_config(write_config(tmp_path, mutate))
        assert config.parameters.lam[0] == 4.0
        assert config.parameters.lam[1] == pytest.approx(np.log(2.0) / 2.0, rel=1e-12)

    def test_horizons_matrix_form(self, tmp_path):
        def mutate(doc):
            doc["model"]["theta"] = [-1.0, -1.0]
            doc["model"]["noise"] = [{"p": 0.1}, {"p": 0.1}]
            doc["model"]["couplings"] = [[1, 2, 0.3]]
            doc["model"]["horizons"] = [[0, 4], [0, 0]]

        config = load_config(write_config(tmp_path, mutate))
        assert config.parameters.horizons[0, 1] == 4

    @pytest.mark.parametrize(
        "key_part,mutate",
        [
            ("model.theta", lambda d: d["model"].pop("theta")),
            ("model.theta", lambda d: d["model"].update(theta=[])),
            ("model.noise", lambda d: d["model"].update(noise=[{"p": 0.5}])),
            ("model.noise[2]", lambda d: d["model"]["noise"].__setitem__(1, {})),
            (
                "model.noise[1]",
                lambda d: d["model"]["noise"].__setitem__(0, {"p": 0.1, "lambda": 1.0}),
            ),
            ("model.noise[1]", lambda d: d["model"]["noise"].__setitem__(0, {"p": 1.5})),
            (
                "model.couplings[2]",
                lambda d: d["model"]["couplings"].__setitem__(1, [0, 9, 0.1]),
            ),
            ("model.couplings[1]", lambda d: d["model"]["couplings"].__setitem__(0, [1, 2])),
            ("model.horizons", lambda d: d["model"].update(horizons=[[1]])),
            ("simulation.n_steps", lambda d: d["simulation"].pop("n_steps")),
            ("simulation.n_steps", lambda d: d["simulation"].update(n_steps=0)),
            ("simulation.seed", lambda d: d["simulation"].update(seed=-1)),
            ("simulation.m_trajectories", lambda d: d["simulation"].update(m_trajectories=1)),
            ("estimation.fraction", lambda d: d["estimation"].update(fraction=0.0)),
            ("estimation.collapse", lambda d: d["estimation"].update(collapse="median")),
            ("output.confidences", lambda d: d["output"].update(confidences=[2.0])),
            ("output.resolution", lambda d: d["output"].update(resolution=0)),
            ("output.histogram_bins", lambda d: d["output"].update(histogram_bins=0)),
        ],
    )
    def test_rejections_name_the_key(self, tmp_path, key_part, mutate):
        path = write_config(tmp_path, mutate)
        with pytest.raises(errors.ConfigError) as exc:
            load_config(path)
        assert key_part in str(exc.value)

    def test_theta_zero_with_p_spec_is_a_config_error(self, tmp_path):
        def mutate(doc):
            doc["model"]["theta"][0] = 0.0

        with pytest.raises(errors.ConfigError) as exc:
            load_config(write_config(tmp_path, mutate))
        assert "model.noise[1]" in str(exc.value)

    def test_model_level_inconsistency_is_wrapped(self, tmp_path):
        def mutate(doc):
            doc["model"]["horizons"] = 0  # nonzero couplings need a horizon

        with pytest.raises(errors.ConfigError) as exc:
            load_config(write_config(tmp_path, mutate))
        assert "model" in str(exc.value)

    def test_invalid_json_and_missing_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(errors.ConfigError):
            load_config(path)
        with pytest.raises(errors.ConfigError):
            load_config(tmp_path / "absent.json")

    def test_seed_may_be_omitted(self, tmp_path):
        def mutate(doc):
            doc["simulation"].pop("seed")

        config = load_config(write_config(tmp_path, mutate))
        assert config.master_seed is None
