"""Tests for the szego-lab command line."""

import json

import pandas as pd
import pytest
from click.testing import CliRunner

from szego_lab.cli import (
    CSV_SCHEMA_VERSION,
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_ERROR,
    EXIT_OK,
    cli,
)
from tests.settings import RESONANT_R, V3_SYMBOL, V4_SYMBOL

SCAN_CONFIG = {"scenario": "v4_example_scan", "scan_points": 11}


@pytest.fixture
def write_json(tmp_path):
    def write(name, document):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return str(path)

    return write


def test_run_writes_artifacts(tmp_path, write_json):
    out_dir = tmp_path / "out"
    config = write_json("config.json", SCAN_CONFIG)
    result = CliRunner().invoke(cli, ["run", config, "--out-dir", str(out_dir)])
    assert result.exit_code == EXIT_OK, result.output

    frame = pd.read_csv(out_dir / "trajectory.csv")
    assert list(frame.columns) == ["r", "ell_1"]
    assert len(frame) == 11

    report = json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
    assert report["scenario"] == "v4_example_scan"
    assert report["passed"] is True
    assert report["metadata"]["r_star"] == pytest.approx(RESONANT_R, abs=1e-8)
    assert {check["name"] for check in report["checks"]} >= {"resonance_location"}

    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["csv"] == {
        "schema_version": CSV_SCHEMA_VERSION,
        "columns": ["r", "ell_1"],
    }
    assert manifest["config"] == SCAN_CONFIG
    assert manifest["workers"] >= 1
    assert manifest["wall_time_seconds"] >= 0


@pytest.mark.parametrize(
    "config",
    [
        {"scenario": "unknown"},
        {"scenario": "v4_example_scan", "scan_min": 0.3, "scan_max": 0.2},
        {"scenario": "involution", "control": True},
        {"scenario": "involution", "initial": V4_SYMBOL},
        {"scenario": "v4_turbulence", "rtol": -1.0},
        {
            "scenario": "v4_turbulence",
            "initial": {"type": "rational", "num": [[1, 0]], "den": [[1, 0], [-2, 0]]},
        },
    ],
)
def test_run_rejects_config(tmp_path, write_json, config):
    path = write_json("config.json", config)
    result = CliRunner().invoke(cli, ["run", path, "--out-dir", str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG_ERROR
    assert not (tmp_path / "report.json").exists()


def test_run_rejects_unreadable_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{not json", encoding="utf-8")
    result = CliRunner().invoke(cli, ["run", str(path)])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_run_reports_numerical_failure(tmp_path, write_json):
    """A class-3 datum cannot start the V(4) closed-form run."""
    config = {"scenario": "v4_turbulence", "initial": V3_SYMBOL, "T": 0.1}
    path = write_json("config.json", config)
    result = CliRunner().invoke(cli, ["run", path, "--out-dir", str(tmp_path)])
    assert result.exit_code == EXIT_NUMERICAL_ERROR
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert report["error"] == "InconsistentInputs"


def test_inspect(write_json):
    path = write_json("symbol.json", V4_SYMBOL)
    result = CliRunner().invoke(cli, ["inspect", path])
    assert result.exit_code == EXIT_OK, result.output
    document = json.loads(result.output)
    assert set(document) == {"symbol", "conservation", "spectral"}
    conservation = document["conservation"]
    assert conservation["Q"] == pytest.approx(1.25 / 0.75**3, rel=1e-12)
    assert len(conservation["ell"]) == 2
    assert document["spectral"]["dominance"] == ["H", "K", "H", "K"]


def test_inspect_rejects_pole_inside_disc(write_json):
    path = write_json(
        "symbol.json",
        {"type": "rational", "num": [[1.0, 0.0]], "den": [[1.0, 0.0], [-2.0, 0.0]]},
    )
    result = CliRunner().invoke(cli, ["inspect", path])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_bracket(write_json):
    path = write_json("symbol.json", V3_SYMBOL)
    result = CliRunner().invoke(
        cli, ["bracket", path, "--pairs", "Q,M", "--pairs", "Q,H"]
    )
    assert result.exit_code == EXIT_OK, result.output
    brackets = json.loads(result.output)["brackets"]
    assert [(b["f"], b["g"]) for b in brackets] == [("Q", "M"), ("Q", "H")]
    assert all(abs(b["bracket"]) < 1e-8 for b in brackets)


@pytest.mark.parametrize("pair", ["Q", "Q,M,H", "Q,P"])
def test_bracket_rejects_pairs(write_json, pair):
    path = write_json("symbol.json", V3_SYMBOL)
    result = CliRunner().invoke(cli, ["bracket", path, "--pairs", pair])
    assert result.exit_code == EXIT_CONFIG_ERROR
