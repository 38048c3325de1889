import json
import logging
from pathlib import Path
from typing import Callable, TypeVar

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table
from typer import Argument, Option

from kamlattice.storage.local.artifacts import dumps
from kamlattice.storage.local.config import ExperimentConfig, load_config
from kamlattice.tasks.exceptions import ArtifactError, ConfigurationError, KamLatticeError
from kamlattice.tasks.homology.types import Strategy
from kamlattice.tasks.model.types import Equation
from kamlattice.workflows.analysis import TREND_RADII, assumption_report, normal_form_report, write_report
from kamlattice.workflows.analysis import scan_divisors as scan_divisors_workflow
from kamlattice.workflows.experiment import run_experiment
from kamlattice.workflows.replay import replay as replay_workflow

logger = logging.getLogger(__name__)
console = Console()

T = TypeVar("T")

app = typer.Typer(
    name="kamlattice",
    add_completion=False,
    no_args_is_help=True,
    add_help_option=True,
    help="kamlattice CLI, a tool to build and verify quasi-periodic invariant tori of BBM and gPC lattices.",
)


def configure_logging(debug: bool, quiet: bool) -> None:
    level = logging.DEBUG if debug else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level)
    logging.getLogger("kamlattice").setLevel(level)


def guarded(func: Callable[..., T], *args, **kwargs) -> T:
    """Call a workflow; configuration and artifact errors exit with 2, other engine failures with 1."""
    try:
        return func(*args, **kwargs)
    except (ConfigurationError, ValidationError, ArtifactError) as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=2)
    except KamLatticeError as e:
        typer.echo(f"Failure: {type(e).__name__}: {e}", err=True)
        raise typer.Exit(code=1)


def config_from_options(config_path: Path | None, **overrides) -> ExperimentConfig:
    sections = {
        "model": {"equation": overrides.get("equation"), "radius": overrides.get("radius")},
        "schedule": {"epsilon0": overrides.get("epsilon0"), "steps": overrides.get("steps")},
        "solver": {"strategy": overrides.get("strategy")},
        "output_dir": overrides.get("output_dir"),
        "seed": overrides.get("seed"),
    }
    return load_config(config_path, sections)


def print_checks(title: str, checks: dict[str, bool], numbers: dict[str, float] | None = None) -> None:
    table = Table(title=title)
    table.add_column("check")
    table.add_column("passed")
    table.add_column("value", justify="right")
    for name, passed in checks.items():
        value = (numbers or {}).get(name)
        table.add_row(name, "yes" if passed else "no", f"{value:.3e}" if value is not None else "")
    console.print(table)


@app.command()
def run(
    config_path: Path = Option(None, "--config", "-c", help="JSON or TOML experiment configuration"),
    equation: Equation = Option(None, "--equation", "-e", help="Lattice equation"),
    radius: int = Option(None, "--radius", "-r", help="Lattice truncation radius"),
    epsilon0: float = Option(None, "--epsilon0", "-E", help="Initial perturbation size"),
    steps: int = Option(None, "--steps", "-n", help="Number of KAM steps"),
    strategy: Strategy = Option(None, "--strategy", "-s", help="Homological solver strategy"),
    output_dir: str = Option(None, "--output-dir", "-o", help="Output directory (relative to KAMLATTICE_OUTPUT_ROOT if set)"),
    seed: int = Option(None, "--seed", help="Random seed"),
    witness_format: str = Option("csv", "--witness-format", "-f", help="Format of the witness table (csv, parquet, jsonl)", show_default=True),
    debug: bool = Option(False, "--debug", "-D", help="Debug mode", show_default=True),
    quiet: bool = Option(False, "--quiet", "-q", help="Only warnings and errors", show_default=True),
):
    """
    Run an experiment: model, normal form, KAM iteration, verification and measure report.
    The exit status is 0 iff every enabled acceptance check passes.
    """
    configure_logging(debug, quiet)
    config = guarded(
        config_from_options, config_path,
        equation=equation, radius=radius, epsilon0=epsilon0, steps=steps, strategy=strategy, output_dir=output_dir, seed=seed,
    )
    result = guarded(run_experiment, config, witness_format)
    if not quiet:
        print_checks(f"Experiment in {result.output_dir}", result.checks, result.report.numbers() if result.report else None)
    raise typer.Exit(code=result.exit_code)


@app.command()
def replay(
    artifact_dir: Path = Argument(..., help="Directory of a finished experiment"),
    output: Path = Option(None, "--output", "-o", help="Write the replay report as JSON to this file"),
    debug: bool = Option(False, "--debug", "-D", help="Debug mode", show_default=True),
    quiet: bool = Option(False, "--quiet", "-q", help="Only warnings and errors", show_default=True),
):
    """
    Re-run the verification audits of a finished experiment from its artifacts, without solving anything.
    """
    configure_logging(debug, quiet)
    report = guarded(replay_workflow, artifact_dir)
    if output is not None:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(dumps(report.to_json()))
    if not quiet:
        print_checks(f"Replay of {artifact_dir}", report.checks, report.report.numbers() if report.report else None)
    raise typer.Exit(code=report.exit_code)


@app.command()
def scan_divisors(
    config_path: Path = Option(None, "--config", "-c", help="JSON or TOML experiment configuration"),
    equation: Equation = Option(None, "--equation", "-e", help="Lattice equation"),
    radius: int = Option(None, "--radius", "-r", help="Lattice truncation radius"),
    n_tilde: int = Option(None, "--n-tilde", "-N", help="Radius beyond which the tail bound replaces the scan"),
    Ks: list[int] = Option(list(TREND_RADII), "--K", "-K", help="Fourier radii of the excision trend"),
    output_dir: str = Option(None, "--output-dir", "-o", help="Output directory"),
    silent: bool = Option(False, "--silent", "-s", help="Hide the progress bar", show_default=True),
    debug: bool = Option(False, "--debug", "-D", help="Debug mode", show_default=True),
    quiet: bool = Option(False, "--quiet", "-q", help="Only warnings and errors", show_default=True),
):
    """
    Scan the Birkhoff divisors and the first-Melnikov excision trend of a model.
    """
    configure_logging(debug, quiet)
    config = guarded(config_from_options, config_path, equation=equation, radius=radius, output_dir=output_dir)
    result = guarded(scan_divisors_workflow, config, tuple(Ks), n_tilde, not silent)
    if not quiet:
        minima = result["nonresonance"]["minima"]
        print_checks(
            "Birkhoff divisors",
            {name: m["value"] >= result["nonresonance"]["floor"] for name, m in minima.items()},
            {name: m["value"] for name, m in minima.items()},
        )
        typer.echo(f"Excision slopes: {result['trend']['slopes']}")
    raise typer.Exit(code=0 if result["nonresonance"]["passed"] else 1)


@app.command()
def normal_form(
    config_path: Path = Option(None, "--config", "-c", help="JSON or TOML experiment configuration"),
    equation: Equation = Option(None, "--equation", "-e", help="Lattice equation"),
    radius: int = Option(None, "--radius", "-r", help="Lattice truncation radius"),
    epsilon0: float = Option(None, "--epsilon0", "-E", help="Sets the default amplitudes 1.5√ε₀"),
    output_dir: str = Option(None, "--output-dir", "-o", help="Output directory"),
    debug: bool = Option(False, "--debug", "-D", help="Debug mode", show_default=True),
    quiet: bool = Option(False, "--quiet", "-q", help="Only warnings and errors", show_default=True),
):
    """
    Compute the Birkhoff normal form and its action-angle reduction; writes normal_form.json.
    """
    configure_logging(debug, quiet)
    config = guarded(config_from_options, config_path, equation=equation, radius=radius, epsilon0=epsilon0, output_dir=output_dir)
    result = guarded(normal_form_report, config)
    if not quiet:
        typer.echo(json.dumps(result["package"]["diagnostics"], indent=1, sort_keys=True))


@app.command()
def check_assumptions(
    config_path: Path = Option(None, "--config", "-c", help="JSON or TOML experiment configuration"),
    equation: Equation = Option(None, "--equation", "-e", help="Lattice equation"),
    radius: int = Option(None, "--radius", "-r", help="Lattice truncation radius"),
    candidates: list[str] = Option(None, "--candidate", "-J", help="Candidate tangent set as JSON, e.g. '[[1],[3]]'"),
    K: int = Option(8, "--K", "-K", help="Largest |k| of the directional-derivative scan", show_default=True),
    output: Path = Option(None, "--output", "-o", help="Write the report as JSON to this file"),
    debug: bool = Option(False, "--debug", "-D", help="Debug mode", show_default=True),
    quiet: bool = Option(False, "--quiet", "-q", help="Only warnings and errors", show_default=True),
):
    """
    Evaluate the standing assumptions on the reduced normal form; optionally rank candidate tangent sets.
    """
    configure_logging(debug, quiet)
    config = guarded(config_from_options, config_path, equation=equation, radius=radius)
    try:
        parsed = [tuple(tuple(site) for site in json.loads(c)) for c in candidates or []]
    except (json.JSONDecodeError, TypeError) as e:
        typer.echo(f"Error: invalid candidate tangent set: {e}", err=True)
        raise typer.Exit(code=2)
    result = guarded(assumption_report, config, parsed, K)
    if output is not None:
        write_report(output, result, config)
    if not quiet:
        results = result["assumptions"]["results"]
        print_checks("Assumptions", {r["name"]: r["passed"] for r in results}, {r["name"]: r["value"] for r in results})
        for candidate in result.get("candidates", []):
            typer.echo(f"J={candidate['J']} margin={candidate['margin']:.3e} det={candidate['det']:.3e}")
    raise typer.Exit(code=0 if result["passed"] else 1)


def main():
    app()


if __name__ == "__main__":
    typer.run(main)
