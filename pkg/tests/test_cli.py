"""Tests for the command line driver"""
import pandas as pd
import pytest

import heatassim
from libs.harness import CSV_COLUMNS


TINY = ["--cells", "4", "--steps", "2", "--final-time", "0.1", "--freq-k", "1", "--no-timing"]


def test_parser_defaults():
    args = heatassim.build_parser().parse_args(["converge-h"])
    assert args.command == "converge-h"
    assert args.timings
    assert args.cells is None


def test_parser_ranges():
    args = heatassim.build_parser().parse_args(
        ["param-sweep", "--gamma-0", "0.1", "1", "--gamma-1", "0.01", "--cells", "20"])
    assert args.gamma_0 == [0.1, 1.]
    assert args.gamma_1 == [0.01]
    assert args.cells == [20]


def test_parser_rejects_unknown_solver():
    with pytest.raises(SystemExit):
        heatassim.build_parser().parse_args(["solve", "--solver", "lu"])


def test_make_spec_uses_preset_and_flags(tmp_path):
    args = heatassim.build_parser().parse_args(
        ["converge-tau", "--steps", "5", "10", "--out", str(tmp_path / "tau.csv")])
    spec = heatassim.make_spec(args)
    assert spec.mode == "converge_tau"
    assert spec.cells == [200]
    assert spec.steps == [5, 10]
    assert spec.out == tmp_path / "tau.csv"


def test_make_spec_default_output():
    spec = heatassim.make_spec(heatassim.build_parser().parse_args(["solve"]))
    assert spec.out.name == "single_solve.csv"


def test_help_lists_columns(capsys):
    with pytest.raises(SystemExit):
        heatassim.main(["converge-h", "--help"])
    output = capsys.readouterr().out
    for column in CSV_COLUMNS:
        assert column in output


@pytest.mark.parametrize("command", ["solve", "converge-h"])
def test_main_writes_csv(tmp_path, command):
    out = tmp_path / "results.csv"
    assert heatassim.main([command, *TINY, "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == CSV_COLUMNS
    assert len(frame) == 1
    assert frame["wall_time_s"].isna().all()


def test_main_gradient_descent(tmp_path):
    out = tmp_path / "graddesc.csv"
    assert heatassim.main(["solve", *TINY, "--solver", "graddesc", "--alpha", "0.02",
                           "--out", str(out)]) == 0
    assert pd.read_csv(out)["solver"][0] == "graddesc"


def test_bad_config(tmp_path, capsys):
    config = tmp_path / "bad.yaml"
    config.write_text("mode: converge_h\ngamma_2: [1.0]\n")
    assert heatassim.main(["converge-h", "--config", str(config)]) == 2
    assert "gamma_2" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert heatassim.main(["solve", "--config", str(tmp_path / "absent.yaml")]) == 2


def test_unwritable_output(tmp_path):
    out = tmp_path / "missing" / "results.csv"
    assert heatassim.main(["solve", *TINY, "--out", str(out)]) == 1


def test_perturb_check(tmp_path, capsys):
    out = tmp_path / "perturbation.csv"
    assert heatassim.main(["perturb-check", *TINY, "--solver", "direct",
                           "--noise-levels", "0", "0.001", "0.01", "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert list(frame["mode"]) == ["perturbation"]*3
    assert "Perturbation constant" in capsys.readouterr().out


def test_perturb_check_needs_noise_free_run(tmp_path, capsys):
    assert heatassim.main(["perturb-check", *TINY, "--noise-levels", "0.001", "0.01",
                           "--out", str(tmp_path / "perturbation.csv")]) == 2
    assert "contain 0" in capsys.readouterr().err


def test_diverge_check_reports_direct_gap(tmp_path, capsys):
    assert heatassim.main(["diverge-check", *TINY, "--out", str(tmp_path / "diverge.csv")]) == 0
    assert "Distance to the direct solve" in capsys.readouterr().out
