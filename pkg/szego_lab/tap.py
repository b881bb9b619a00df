"""Szego lab tap class."""

from __future__ import annotations

import math
from functools import cached_property
from typing import TYPE_CHECKING

from singer_sdk import Stream, Tap
from singer_sdk import typing as th

from szego_lab.client import ChecksStream, ScenarioRunner, TrajectoryStream
from szego_lab.scenarios import SCENARIOS
from szego_lab.symbol import DEFAULT_TRUNCATION, MAX_TRUNCATION, TAIL_TOL

if TYPE_CHECKING:
    from collections.abc import Sequence

_COMPLEX_LIST = th.ArrayType(th.ArrayType(th.NumberType))


class TapSzegoLab(Tap):
    """Singer tap emitting quadratic Szego experiment output."""

    name = "tap-szego-lab"

    def __init__(self, *args, **kwargs) -> None:
        """Constructor.

        Checks the cross-field rules the JSON schema cannot express.
        """
        super().__init__(*args, **kwargs)
        config = self.config
        for key in ("rtol", "atol", "sample_dt", "tail_tol", "group_tol"):
            assert config.get(key) is None or config[key] > 0, f"{key} must be positive"

        assert config.get("T") is None or math.isfinite(config["T"]), "T must be finite"

        assert config.get("truncation", DEFAULT_TRUNCATION) <= config.get(
            "max_truncation", MAX_TRUNCATION
        ), "truncation must not exceed max_truncation"

        assert config.get("scan_min", 0.2) < config.get("scan_max", 0.3), (
            "scan_min must be below scan_max"
        )
        assert config.get("scan_points", 101) > 1, "scan_points must be at least 2"
        assert config.get("samples") is None or config["samples"] > 0, (
            "samples must be positive"
        )

        assert not config.get("control") or config["scenario"] in {
            "v3_turbulence",
            "v4_turbulence",
        }, "control only applies to the turbulence scenarios"

        assert config.get("initial") is None or config["scenario"] not in {
            "v4_example_scan",
            "involution",
            "series_identity",
        }, f"initial is not used by {config['scenario']}"

    config_jsonschema = th.PropertiesList(
        th.Property(
            "scenario",
            th.StringType,
            required=True,
            allowed_values=list(SCENARIOS),
            description="Experiment to run.",
        ),
        th.Property(
            "initial",
            th.ObjectType(
                th.Property(
                    "type",
                    th.StringType,
                    required=True,
                    allowed_values=["rational", "fourier"],
                ),
                th.Property("num", _COMPLEX_LIST),
                th.Property("den", _COMPLEX_LIST),
                th.Property("coeffs", _COMPLEX_LIST),
            ),
            description=(
                "Initial symbol. Rational A/B as [re, im] coefficient pairs in "
                "ascending powers, or Fourier coefficients. Scenarios that draw "
                "their own symbols ignore it."
            ),
        ),
        th.Property(
            "amplitude",
            th.NumberType,
            default=1.0,
            description=(
                "Factor applied to the initial symbol. Time scales as "
                "amplitude^-4."
            ),
        ),
        th.Property("T", th.NumberType, default=1.0, description="Final time."),
        th.Property(
            "rtol",
            th.NumberType,
            default=1e-10,
            description="Relative tolerance of the adaptive integrator.",
        ),
        th.Property(
            "atol",
            th.NumberType,
            default=1e-12,
            description="Absolute tolerance of the adaptive integrator.",
        ),
        th.Property(
            "sample_dt",
            th.NumberType,
            default=1e-2,
            description="Time between recorded samples.",
        ),
        th.Property(
            "field",
            th.StringType,
            default="H",
            allowed_values=["H", "F"],
            description="Hamiltonian field: the energy H or the generating F(x).",
        ),
        th.Property(
            "field_x",
            th.NumberType,
            default=-0.5,
            description="The x of F(x) when field is F.",
        ),
        th.Property(
            "s_list",
            th.ArrayType(th.NumberType),
            default=[1.0, 2.0],
            description="Sobolev exponents to monitor.",
        ),
        th.Property(
            "x_grid",
            th.ArrayType(th.NumberType),
            default=[],
            description=(
                "Points x for generating-function checks and F(x) monitoring. "
                "Empty selects a non-resonant default grid."
            ),
        ),
        th.Property(
            "seed",
            th.IntegerType,
            default=1,
            description="Seed of the random corpus.",
        ),
        th.Property(
            "samples",
            th.IntegerType,
            description="Corpus size. Defaults depend on the scenario.",
        ),
        th.Property(
            "class_d",
            th.IntegerType,
            default=4,
            description="Class V(d) of random corpus symbols.",
        ),
        th.Property(
            "control",
            th.BooleanType,
            default=False,
            description=(
                "Also integrate a bounded control datum (turbulence scenarios)."
            ),
        ),
        th.Property(
            "scan_min",
            th.NumberType,
            default=0.2,
            description="Lower end of the r scan (v4_example_scan).",
        ),
        th.Property(
            "scan_max",
            th.NumberType,
            default=0.3,
            description="Upper end of the r scan (v4_example_scan).",
        ),
        th.Property(
            "scan_points",
            th.IntegerType,
            default=101,
            description="Number of scan points (v4_example_scan).",
        ),
        th.Property(
            "truncation",
            th.IntegerType,
            default=DEFAULT_TRUNCATION,
            description="Initial number of Fourier modes.",
        ),
        th.Property(
            "max_truncation",
            th.IntegerType,
            default=MAX_TRUNCATION,
            description="Largest number of Fourier modes before TailNotResolved.",
        ),
        th.Property(
            "tail_tol",
            th.NumberType,
            default=TAIL_TOL,
            description="Relative tail mass that triggers a truncation doubling.",
        ),
        th.Property(
            "group_tol",
            th.NumberType,
            default=1e-8,
            description="Relative tolerance for grouping equal singular values.",
        ),
        th.Property(
            "out_dir",
            th.StringType,
            default="out",
            description="Directory for trajectory.csv, report.json and manifest.json.",
        ),
    ).to_dict()

    @cached_property
    def runner(self) -> ScenarioRunner:
        """Shared runner, so both streams read one scenario run."""
        return ScenarioRunner(self.config)

    def discover_streams(self) -> Sequence[Stream]:
        """Return the trajectory and checks streams.

        Returns:
            List of discovered Stream objects.
        """
        return [TrajectoryStream(self), ChecksStream(self)]
