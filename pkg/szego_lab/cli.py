"""Command line entry point: ``szego-lab run | inspect | bracket``.

All file I/O of the lab lives here.
"""

from __future__ import annotations

import logging
import typing as t
from importlib import metadata
from pathlib import Path

import click
import numpy as np
import pandas as pd
import pendulum
import simplejson
from singer_sdk.exceptions import ConfigValidationError

from szego_lab import conservation, poisson
from szego_lab.exceptions import PoleInsideDiscError, SzegoLabError
from szego_lab.hankel import singular_spectrum, spectral_data_to_dict
from szego_lab.symbol import as_fourier, symbol_from_dict, symbol_to_dict
from szego_lab.tap import TapSzegoLab

if t.TYPE_CHECKING:
    from szego_lab.client import ScenarioRunner
    from szego_lab.conservation import ConservationReport
    from szego_lab.symbol import FourierSymbol

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3


def _jsonable(value: t.Any) -> t.Any:
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.generic):
        return value.item()
    return value


def dumps(document: t.Any) -> str:
    """Deterministic JSON: sorted keys, NaN and infinities as null."""
    return simplejson.dumps(
        _jsonable(document), sort_keys=True, indent=2, ignore_nan=True
    )


def _load_json(path: Path) -> dict[str, t.Any]:
    try:
        document = simplejson.loads(path.read_text(encoding="utf-8"))
    except (OSError, simplejson.JSONDecodeError) as exc:
        msg = f"Cannot read {path}: {exc}"
        raise click.UsageError(msg) from exc
    if not isinstance(document, dict):
        msg = f"{path} must hold a JSON object."
        raise click.UsageError(msg)
    return document


def _package_version() -> str:
    try:
        return metadata.version("szego-lab")
    except metadata.PackageNotFoundError:
        return "0.0.0"


def report_to_dict(report: ConservationReport) -> dict[str, t.Any]:
    """JSON form of a conservation report."""
    return {
        "Q": report.mass,
        "M": report.momentum,
        "H": report.hamiltonian,
        "J": report.j,
        "sigma_sq": list(report.sigma_sq),
        "ell": list(report.ell_values),
        "ell_inf": report.ell_inf,
        "ell_inf_kernel": report.ell_inf_kernel,
        "xi": [xi for _, xi in report.xis],
        "mults": list(report.mults),
        "residuals": report.residuals(),
    }


def write_artifacts(
    out_dir: Path,
    config: dict[str, t.Any],
    runner: ScenarioRunner,
) -> bool:
    """Write trajectory.csv, report.json and manifest.json; return the verdict."""
    result = runner.result
    out_dir.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(result.rows, columns=result.columns)
    frame.to_csv(out_dir / "trajectory.csv", index=False, float_format="%.17g")
    report = {
        "scenario": result.scenario,
        "passed": result.passed,
        "checks": [check.to_dict() for check in result.checks],
        "metadata": result.metadata,
    }
    (out_dir / "report.json").write_text(dumps(report) + "\n", encoding="utf-8")
    _write_manifest(out_dir, config, runner, result.columns)
    return result.passed


def _write_manifest(
    out_dir: Path,
    config: dict[str, t.Any],
    runner: ScenarioRunner,
    columns: list[str],
) -> None:
    settings = runner.settings
    manifest = {
        "package_version": _package_version(),
        "created_at": pendulum.now("UTC").to_iso8601_string(),
        "wall_time_seconds": runner.wall_time,
        "workers": runner.workers,
        "scenario": settings.scenario,
        "initial": settings.initial,
        "field": settings.field,
        "tolerances": {
            "rtol": settings.rtol,
            "atol": settings.atol,
            "tail_tol": settings.tail_tol,
            "group_tol": settings.group_tol,
        },
        "seed": settings.seed,
        "config": config,
        "csv": {"schema_version": CSV_SCHEMA_VERSION, "columns": columns},
    }
    (out_dir / "manifest.json").write_text(dumps(manifest) + "\n", encoding="utf-8")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log at debug level.")
def cli(verbose: bool) -> None:
    """Numerical lab for the quadratic Szego equation."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.argument("config_path", type=click.Path(path_type=Path))
@click.option(
    "--out-dir",
    type=click.Path(path_type=Path),
    default=None,
    help="Override the out_dir of the config.",
)
@click.pass_context
def run(ctx: click.Context, config_path: Path, out_dir: Path | None) -> None:
    """Run the scenario in CONFIG_PATH and write its artifacts."""
    try:
        config = _load_json(config_path)
        tap = TapSzegoLab(
            config=config,
            parse_env_config=False,
            validate_config=True,
            setup_mapper=False,
        )
        runner = tap.runner
        runner.settings.initial_symbol()
    except (
        click.UsageError,
        ConfigValidationError,
        AssertionError,
        ValueError,
        PoleInsideDiscError,
    ) as exc:
        click.echo(f"Configuration error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG_ERROR)
    target = out_dir or Path(config.get("out_dir", "out"))

    logger.info("Scenario %s started.", runner.settings.scenario)
    try:
        passed = write_artifacts(target, config, runner)
    except SzegoLabError as exc:
        logger.error("Scenario failed with %s: %s", exc.code, exc)
        target.mkdir(parents=True, exist_ok=True)
        failure = {"error": exc.code, "message": str(exc)}
        (target / "report.json").write_text(dumps(failure) + "\n", encoding="utf-8")
        ctx.exit(EXIT_NUMERICAL_ERROR)
    logger.info(
        "Scenario %s finished in %.1f s: %s.",
        runner.settings.scenario,
        runner.wall_time or 0.0,
        "passed" if passed else "failed",
    )
    ctx.exit(EXIT_OK if passed else EXIT_CHECKS_FAILED)


def _load_symbol(ctx: click.Context, path: Path, truncation: int) -> FourierSymbol:
    try:
        symbol = symbol_from_dict(_load_json(path))
        return as_fourier(symbol, truncation)
    except (click.UsageError, ValueError, PoleInsideDiscError) as exc:
        click.echo(f"Invalid symbol: {exc}", err=True)
        ctx.exit(EXIT_CONFIG_ERROR)
    except SzegoLabError as exc:
        click.echo(f"{exc.code}: {exc}", err=True)
        ctx.exit(EXIT_NUMERICAL_ERROR)


@cli.command()
@click.argument("symbol_path", type=click.Path(path_type=Path))
@click.option("--truncation", type=int, default=128, show_default=True)
@click.pass_context
def inspect(ctx: click.Context, symbol_path: Path, truncation: int) -> None:
    """Print the conservation report and spectral data of a symbol."""
    u = _load_symbol(ctx, symbol_path, truncation)
    try:
        sd = singular_spectrum(u)
        document = {
            "symbol": symbol_to_dict(u),
            "conservation": report_to_dict(conservation.conservation_report(u)),
            "spectral": spectral_data_to_dict(sd),
        }
    except SzegoLabError as exc:
        click.echo(f"{exc.code}: {exc}", err=True)
        ctx.exit(EXIT_NUMERICAL_ERROR)
    click.echo(dumps(document))


@cli.command()
@click.argument("symbol_path", type=click.Path(path_type=Path))
@click.option(
    "--pairs",
    multiple=True,
    required=True,
    help="Comma separated functional pair, e.g. 'Q,H' or 'F(-0.3),F(0.2)'.",
)
@click.option("--truncation", type=int, default=128, show_default=True)
@click.pass_context
def bracket(
    ctx: click.Context,
    symbol_path: Path,
    pairs: tuple[str, ...],
    truncation: int,
) -> None:
    """Print finite-difference Poisson brackets of functional pairs."""
    u = _load_symbol(ctx, symbol_path, truncation)
    u = u.trimmed()
    results = []
    for pair in pairs:
        names = [name.strip() for name in pair.split(",")]
        if len(names) != 2:  # noqa: PLR2004
            click.echo(f"Expected two functionals in {pair!r}.", err=True)
            ctx.exit(EXIT_CONFIG_ERROR)
        try:
            f, g = (poisson.functional_by_name(name, u) for name in names)
            value = poisson.bracket(f, g, u)
        except SzegoLabError as exc:
            click.echo(f"{exc.code}: {exc}", err=True)
            ctx.exit(EXIT_NUMERICAL_ERROR)
        except ValueError as exc:
            click.echo(str(exc), err=True)
            ctx.exit(EXIT_CONFIG_ERROR)
        results.append({"f": names[0], "g": names[1], "bracket": value})
    click.echo(dumps({"brackets": results}))
