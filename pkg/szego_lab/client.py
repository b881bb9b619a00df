"""Scenario runner and the Singer streams that emit its output."""

from __future__ import annotations

import math
import os
import typing as t
from functools import cached_property

import pendulum
from singer_sdk import Stream
from singer_sdk import typing as th

from szego_lab.scenarios import ScenarioResult, ScenarioSettings, run_scenario

if t.TYPE_CHECKING:
    from collections.abc import Mapping

    from singer_sdk.helpers.types import Context

THREADS_ENV = "SZEGO_LAB_THREADS"


def thread_limit() -> int:
    """Worker threads for per-sample analysis, capped by ``SZEGO_LAB_THREADS``.

    Raises:
        ValueError: If the variable is set to anything but a positive integer.
    """
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        msg = f"{THREADS_ENV} must be a positive integer, got {raw!r}."
        raise ValueError(msg) from exc
    if value < 1:
        msg = f"{THREADS_ENV} must be a positive integer, got {value}."
        raise ValueError(msg)
    return value


def finite_or_none(value: t.Any) -> t.Any:
    """Map NaN and infinities to None so records stay valid JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class ScenarioRunner:
    """Runs one configured scenario at most once and keeps its result."""

    def __init__(self, config: Mapping[str, t.Any], workers: int | None = None) -> None:
        """Constructor.

        Args:
            config: A validated tap configuration.
            workers: Analysis threads; defaults to ``thread_limit()``.
        """
        self.settings = ScenarioSettings.from_config(config)
        self.workers = workers if workers is not None else thread_limit()
        self.wall_time: float | None = None

    @cached_property
    def result(self) -> ScenarioResult:
        """The scenario output, computed on first access."""
        started = pendulum.now("UTC")
        result = run_scenario(self.settings, self.workers)
        self.wall_time = (pendulum.now("UTC") - started).total_seconds()
        return result


class ScenarioStream(Stream):
    """Base stream reading from the tap's shared ``ScenarioRunner``."""

    @property
    def runner(self) -> ScenarioRunner:
        """The runner owned by the tap."""
        return self._tap.runner  # type: ignore[attr-defined]


class TrajectoryStream(ScenarioStream):
    """One record per sample (or per corpus member, for corpus scenarios)."""

    name = "trajectory"

    @property
    def schema(self) -> dict:
        """Numeric columns in the fixed CSV order of the scenario."""
        return th.PropertiesList(
            *(
                th.Property(column, th.NumberType)
                for column in self.runner.result.columns
            )
        ).to_dict()

    def get_records(self, context: Context | None) -> t.Iterable[dict[str, t.Any]]:
        """Yield the scenario rows.

        Raises:
            NotImplementedError: If partition is passed in context.
        """
        if context:
            msg = f"Stream '{self.name}' does not support partitioning."
            raise NotImplementedError(msg)
        for row in self.runner.result.rows:
            yield {key: finite_or_none(value) for key, value in row.items()}


class ChecksStream(ScenarioStream):
    """One record per named acceptance check."""

    name = "checks"
    primary_keys: t.ClassVar[list[str]] = ["name"]
    schema = th.PropertiesList(
        th.Property("name", th.StringType, required=True),
        th.Property("value", th.NumberType),
        th.Property("threshold", th.NumberType),
        th.Property("passed", th.BooleanType),
    ).to_dict()

    def get_records(self, context: Context | None) -> t.Iterable[dict[str, t.Any]]:
        """Yield the checks of the scenario.

        Raises:
            NotImplementedError: If partition is passed in context.
        """
        if context:
            msg = f"Stream '{self.name}' does not support partitioning."
            raise NotImplementedError(msg)
        for check in self.runner.result.checks:
            record = check.to_dict()
            yield {key: finite_or_none(value) for key, value in record.items()}
