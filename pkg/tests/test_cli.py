import csv
import math

import pytest

from fracsir.cli import (
    EXIT_CONFIG,
    EXIT_INVARIANT,
    EXIT_NUMERIC,
    EXIT_OK,
    SWEEP_HEADER,
    TRAJECTORY_HEADER,
    final_distances,
    main,
    run_sweep,
    run_verify,
)
from fracsir.config import (
    PRESETS,
    ParseError,
    RunConfig,
    ValidationError,
    parse_config,
)
from fracsir.solver import HistoryBuffer, simulate


def read_csv(path):
    with open(path, newline="") as fd:
        return list(csv.reader(fd))


# {{{ config


def test_presets():
    dfe = parse_config("", preset="paper-dfe")
    assert (dfe.beta, dfe.alpha, dfe.dt, dfe.dx, dfe.M) == (0.2144, 0.8, 0.1, 0.1, 50)
    assert parse_config("preset = paper-ee").beta == 0.6217
    assert set(PRESETS) == {"paper-dfe", "paper-ee"}


def test_document_overrides_preset():
    cfg = parse_config("preset = paper-ee\nalpha = 0.9  # comment\nlambda = 0.3", steps=7)
    assert (cfg.alpha, cfg.lam, cfg.steps, cfg.beta) == (0.9, 0.3, 7, 0.6217)


def test_dx_key():
    assert parse_config("dx = 0.25").M == 20
    with pytest.raises(ValidationError):
        parse_config("dx = 0.3")


@pytest.mark.parametrize(
    "text, key",
    [
        ("alpha = 0", "alpha"),
        ("alpha = 1.5", "alpha"),
        ("lambda = -1", "lambda"),
        ("d2 = -0.1", "d2"),
        ("M = 1", "M"),
        ("steps = 2.5", "steps"),
        ("beta = x", "beta"),
        ("colour = red", "colour"),
        ("preset = nope", "preset"),
        ("incidence = cubic", "incidence"),
    ],
)
def test_validation_names_the_key(text, key):
    with pytest.raises(ValidationError) as info:
        parse_config(text)
    assert info.value.key == key


@pytest.mark.parametrize("text", ["alpha 0.5", "alpha = 0.5\nalpha = 0.6", " = 3"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_config(text)


def test_round_trip():
    cfg = parse_config("preset = paper-ee\nalpha = 0.123456789012345\nincidence = saturated\nw = 0.3")
    assert parse_config(cfg.to_text()) == cfg
    assert parse_config(RunConfig().to_text()) == RunConfig()


# }}}

# {{{ simulate / equilibria


def test_simulate_trajectory(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--preset", "paper-ee", "--steps", "3", "--out", str(out)]) == EXIT_OK

    rows = read_csv(out / "trajectory.csv")
    assert tuple(rows[0]) == TRAJECTORY_HEADER
    assert len(rows) == 1 + 4 * 51
    assert rows[1][:4] == ["0", "0.0", "0", "0.0"]
    assert float(rows[1][5]) == 1.0

    summary = capsys.readouterr().out
    assert summary.startswith("steps=3 dist_E0=")
    assert "dist_Estar=" in summary

    echoed = parse_config((out / "config.txt").read_text())
    assert echoed == parse_config("", preset="paper-ee", steps=3, out=str(out))


def test_smallest_run_row_count(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("M = 2\nsteps = 1\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    assert len(read_csv(tmp_path / "trajectory.csv")) == 1 + 2 * 3


def test_simulate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        main(["simulate", "--preset", "paper-dfe", "--steps", "40", "--out", str(tmp_path / name)])
    first = (tmp_path / "a" / "trajectory.csv").read_bytes()
    assert first == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_equilibria_report(capsys):
    assert main(["equilibria", "--preset", "paper-ee"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "R0 = 1.38156" in out
    assert "E* = (0.723822, 0.122746, 0.153432)" in out

    main(["equilibria", "--preset", "paper-dfe"])
    out = capsys.readouterr().out
    assert "E0 = (1, 0, 0)" in out
    assert "E* = none: R0 <= 1" in out


def test_config_error_exit(tmp_path, capsys):
    assert main(["simulate", "--alpha", "0", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "alpha" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.txt")]) == EXIT_CONFIG


def test_numerical_failure_exit(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("lambda = 1e308\ndt = 5\nsteps = 3\nM = 2\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_NUMERIC
    assert "at step 1" in capsys.readouterr().err


# }}}

# {{{ verify


def test_verify_writes_diagnostics(tmp_path, capsys):
    code = main(["verify", "--preset", "paper-ee", "--steps", "300", "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "diagnostics.csv")
    assert rows[0] == ["k", "G", "bound", "W", "deltaW", "dist"]
    assert len(rows) == 301
    assert all(float(r[4]) <= 1e-10 for r in rows[1:])

    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out


def test_verify_reports_corrupted_history(tmp_path, capsys):
    cfg = parse_config("", preset="paper-dfe", steps=30)
    hist = simulate(cfg.params, cfg.incidence_model, cfg.grid, cfg.initial_condition, cfg.alpha)
    data = hist.data.copy()
    data[17, 2, 3] = -1.0
    bad = HistoryBuffer.from_arrays(
        cfg.params, data[:, 0], data[:, 1], data[:, 2], cfg.alpha, cfg.dt, cfg.dx
    )
    assert run_verify(cfg, tmp_path, hist=bad) == EXIT_INVARIANT
    captured = capsys.readouterr()
    assert "FAIL positivity at step 17" in captured.out
    assert "invariant violated: positivity at step 17" in captured.err


# }}}

# {{{ sweep


def test_empty_sweep(tmp_path):
    assert main(["sweep", "--axis", "beta", "--values", "", "--out", str(tmp_path)]) == EXIT_OK
    assert read_csv(tmp_path / "sweep.csv") == [list(SWEEP_HEADER)]


def test_unknown_axis(tmp_path):
    assert main(["sweep", "--axis", "colour", "--values", "1", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_sweep_order_and_independence(tmp_path):
    base = parse_config("", preset="paper-dfe", steps=200)
    values = [1.0, 0.1, 0.6217, 0.3]
    run_sweep(base, "beta", values, tmp_path, workers=3)
    rows = read_csv(tmp_path / "sweep.csv")[1:]
    assert [float(r[0]) for r in rows] == values

    for row, beta in zip(rows, values):
        cfg = base.replace(beta=beta)
        hist = simulate(cfg.params, cfg.incidence_model, cfg.grid, cfg.initial_condition, cfg.alpha)
        d0, dstar = final_distances(cfg, hist)
        assert float(row[2]) == d0
        assert math.isnan(dstar) == math.isnan(float(row[3]))
        if not math.isnan(dstar):
            assert float(row[3]) == dstar
        assert row[4] == "ok"


def test_sweep_records_bad_values_in_row(tmp_path):
    base = parse_config("", steps=5)
    run_sweep(base, "alpha", [0.5, 2.0], tmp_path, workers=1)
    rows = read_csv(tmp_path / "sweep.csv")[1:]
    assert rows[0][4] == "ok"
    assert rows[1][4].startswith("config error")


@pytest.mark.slow
def test_sweep_across_threshold(tmp_path):
    base = parse_config("", preset="paper-dfe", steps=2000)
    run_sweep(base, "beta", [0.2144, 0.6217], tmp_path, workers=2)
    below, above = read_csv(tmp_path / "sweep.csv")[1:]
    assert float(below[1]) < 1 < float(above[1])
    assert float(below[2]) < 0.05 and below[3] == "nan"
    assert float(above[3]) < 0.05 < float(above[2])


# }}}
