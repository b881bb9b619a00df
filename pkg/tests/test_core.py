"""Tests standard tap features using the built-in SDK tests library."""

import copy
import json

import pytest
from singer_sdk.exceptions import ConfigValidationError
from singer_sdk.testing import get_tap_test_class, suites
from singer_sdk.testing.runners import TapTestRunner
from singer_sdk.testing.templates import TapTestTemplate

from szego_lab.client import THREADS_ENV, ScenarioRunner, thread_limit
from szego_lab.scenarios import SCENARIOS, ScenarioSettings
from szego_lab.tap import TapSzegoLab
from tests.settings import RESONANT_R

SAMPLE_CONFIG = {
    "scenario": "v4_example_scan",
    "scan_points": 11,
}


def checks_pass_test(tap):
    """Every check of the scenario is emitted once and passes."""
    stream = tap.streams["checks"]
    records = list(stream.get_records(context=None))
    names = [record["name"] for record in records]
    assert len(names) == len(set(names))
    assert "resonance_location" in names
    for record in records:
        assert record["passed"], record


class TapTestChecksPass(TapTestTemplate):
    name = "checks_pass"

    def test(self):
        checks_pass_test(self.tap)


custom_test_checks_pass = suites.TestSuite(kind="tap", tests=[TapTestChecksPass])

TapSzegoLabTest = get_tap_test_class(
    tap_class=TapSzegoLab,
    config=SAMPLE_CONFIG,
    custom_suites=[custom_test_checks_pass],
)


class TestTapSzegoLab(TapSzegoLabTest):
    pass


def test_sync_emits_scan():
    test_runner = TapTestRunner(tap_class=TapSzegoLab, config=SAMPLE_CONFIG)
    test_runner.sync_all()

    rows = test_runner.records["trajectory"]
    assert [row["r"] for row in rows] == pytest.approx(
        [0.2 + 0.01 * k for k in range(11)]
    )
    signs = [row["ell_1"] > 0 for row in rows]
    assert signs[0] != signs[-1]

    schemas = {
        message["stream"]: message["schema"]
        for message in test_runner.schema_messages
    }
    assert set(schemas["trajectory"]["properties"]) == {"r", "ell_1"}
    assert schemas["checks"]["properties"]["passed"]["type"] == ["boolean", "null"]


def test_runner_caches_result():
    runner = ScenarioRunner(SAMPLE_CONFIG, workers=1)
    assert runner.wall_time is None
    first = runner.result
    assert runner.result is first
    assert runner.wall_time is not None
    assert first.metadata["r_star"] == pytest.approx(RESONANT_R, abs=1e-8)


def test_catalog_lists_both_streams():
    tap = TapSzegoLab(config=SAMPLE_CONFIG, parse_env_config=False)
    catalog = json.loads(tap.catalog_json_text)
    assert sorted(stream["stream"] for stream in catalog["streams"]) == [
        "checks",
        "trajectory",
    ]


@pytest.mark.parametrize(
    ("update", "error"),
    [
        ({"scenario": "unknown"}, ConfigValidationError),
        ({"field": "G"}, ConfigValidationError),
        ({"rtol": 0.0}, AssertionError),
        ({"T": float("inf")}, AssertionError),
        ({"truncation": 8192, "max_truncation": 4096}, AssertionError),
        ({"scan_min": 0.3}, AssertionError),
        ({"scan_points": 1}, AssertionError),
        ({"samples": 0}, AssertionError),
        ({"control": True}, AssertionError),
        ({"initial": {"type": "fourier", "coeffs": [[1.0, 0.0]]}}, AssertionError),
    ],
)
def test_invalid_config(update, error):
    config = copy.deepcopy(SAMPLE_CONFIG)
    config.update(update)
    with pytest.raises(error):
        TapSzegoLab(config=config, parse_env_config=False, setup_mapper=False)


def test_settings_defaults():
    settings = ScenarioSettings.from_config({"scenario": "involution"})
    assert settings.scenario in SCENARIOS
    assert settings.sample_count == 20
    assert settings.initial_symbol() is None
    assert settings.dt_factor == pytest.approx((settings.sample_dt / 1e-3) ** 2)

    fine = ScenarioSettings.from_config({"scenario": "lax_residual", "sample_dt": 1e-3})
    assert fine.dt_factor == 1.0


def test_thread_limit(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert thread_limit() == 1
    monkeypatch.setenv(THREADS_ENV, "4")
    assert thread_limit() == 4
    for raw in ("0", "many"):
        monkeypatch.setenv(THREADS_ENV, raw)
        with pytest.raises(ValueError, match=THREADS_ENV):
            thread_limit()


@pytest.mark.parametrize("scenario", ["v3_turbulence", "v4_turbulence"])
def test_control_accepted_for_turbulence(scenario):
    config = {"scenario": scenario, "control": True}
    tap = TapSzegoLab(config=config, parse_env_config=False, setup_mapper=False)
    assert ScenarioSettings.from_config(tap.config).control
