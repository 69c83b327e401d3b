"""CLI interface for vortex-patches."""

import inspect
import logging
from collections.abc import Callable
from pathlib import Path
from typing import Any, TypeVar

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from vortex_patches import __version__
from vortex_patches.config import RunConfig, parse_config
from vortex_patches.errors import ConfigError
from vortex_patches.experiments import (
    ALL_EXPERIMENTS,
    PATCH_EXPERIMENTS,
    Experiment,
    ExperimentResult,
    PatchExperiment,
    get_experiment_class,
)

console = Console()

F = TypeVar("F", bound=Callable[..., Any])

# command-line option -> configuration field
OPTION_FIELDS = {
    "domain": "domain.kind",
    "n": "domain.n",
    "backend": "domain.backend",
    "mask": "domain.mask",
    "kappa1": "vortex.kappa1",
    "kappa2": "vortex.kappa2",
    "lam": "solver.lam",
    "max_iters": "solver.max_iters",
    "lambdas": "solver.lambdas",
    "refine": "solver.refine",
    "perturb": "evolution.perturb",
    "turnovers": "evolution.turnovers",
    "trials": "evolution.trials",
    "out_dir": "run.out_dir",
    "seed": "run.seed",
    "threads": "run.threads",
    "baseline": "run.baseline",
}

COMMON_OPTIONS = [
    click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        help="Configuration file (INI or JSON)",
    ),
    click.option("--domain", help="Domain kind: disk, rectangle or bitmap"),
    click.option("--n", type=int, help="Cells across the domain's longer side"),
    click.option("--backend", help="Green backend: analytic, fast or masked"),
    click.option("--mask", help="Boolean .npy mask for bitmap domains"),
    click.option("--kappa1", type=float, help="Circulation of the positive patch"),
    click.option("--kappa2", type=float, help="Circulation of the negative patch"),
    click.option("--lambda", "lam", type=float, help="Vorticity bound"),
    click.option("--max-iters", type=int, help="Solver iteration limit"),
    click.option("--out-dir", help="Output directory"),
    click.option("--seed", type=int, help="Random seed"),
    click.option("--threads", type=int, help="Worker threads"),
]


def common_options(func: F) -> F:
    for option in reversed(COMMON_OPTIONS):
        func = option(func)
    return func


def configure_logging(verbosity: int) -> None:
    """WARNING by default, INFO with -v, DEBUG with -vv."""
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def load_config(options: dict[str, Any]) -> RunConfig:
    """Configuration file (if any) with command-line values on top."""
    config_path = options.pop("config_path", None)
    if config_path is None:
        cfg = RunConfig()
    else:
        cfg = parse_config(Path(config_path).read_text(encoding="utf-8"))
    overrides = {
        OPTION_FIELDS[key]: value for key, value in options.items() if key in OPTION_FIELDS
    }
    return cfg.with_overrides(overrides)


def print_result(name: str, result: ExperimentResult, out_dir: str) -> None:
    status = "[green]passed[/green]" if result.passed else "[red]failed[/red]"
    table = Table(title=f"{name}: {status}")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", style="green")
    for label, value in result.summary:
        table.add_row(label, value)
    console.print(table)
    for failure in result.failures:
        console.print(f"[red]✗ {failure}[/red]")
    console.print(f"\n[bold]Output:[/bold] {out_dir}")


def run_experiment(name: str, options: dict[str, Any], patch_dir: Path | None = None) -> None:
    """Run one experiment; exit 1 on configuration errors, 2 on failures."""
    experiment_class = get_experiment_class(name)
    assert experiment_class is not None
    experiment: Experiment
    try:
        cfg = load_config(options)
        if issubclass(experiment_class, PatchExperiment):
            assert patch_dir is not None
            experiment = experiment_class(cfg, patch_dir)
        else:
            experiment = experiment_class(cfg)
        result = experiment.execute()
    except ConfigError as exc:
        console.print(f"[red]Configuration error: {exc}[/red]")
        raise SystemExit(1) from None
    print_result(name, result, cfg.out_dir)
    if not result.passed:
        raise SystemExit(2)


@click.group()
@click.version_option(version=__version__, prog_name="vortex-patches")
@click.option("-v", "--verbose", count=True, help="More logging (-v info, -vv debug)")
def main(verbose: int) -> None:
    """Steady double vortex patches in bounded planar domains."""
    configure_logging(verbose)


@main.command("list")
def list_experiments() -> None:
    """List the available experiments."""
    table = Table(title="Experiments")
    table.add_column("Command", style="cyan")
    table.add_column("Input", style="dim")
    table.add_column("Description")
    for experiment in [*ALL_EXPERIMENTS, *PATCH_EXPERIMENTS]:
        module = inspect.getmodule(experiment)
        doc = (module.__doc__ if module else None) or ""
        source = "--patch" if issubclass(experiment, PatchExperiment) else "config"
        table.add_row(experiment.name, source, doc.strip().splitlines()[0] if doc else "")
    console.print(table)


@main.command("kr-min")
@common_options
def kr_min(**options: Any) -> None:
    """Locate a strict local minimum of the Kirchhoff-Routh function."""
    run_experiment("kr-min", options)


@main.command()
@common_options
def solve(**options: Any) -> None:
    """Compute a steady double vortex patch."""
    run_experiment("solve", options)


@main.command("sweep-lambda")
@common_options
@click.option("--lambdas", help="Comma-separated λ values, e.g. 100,200,400,800")
@click.option("--refine/--no-refine", default=None, help="Scale n with √λ")
@click.option("--baseline", help="Pinned reference values file (default: <out-dir>/baseline.json)")
def sweep_lambda(**options: Any) -> None:
    """Solve over several λ and check the asymptotic estimates."""
    run_experiment("sweep-lambda", options)


@main.command("green-check")
@common_options
def green_check(**options: Any) -> None:
    """Compare the Green operators with exact solutions."""
    run_experiment("green-check", options)


@main.command()
@common_options
@click.option("--trials", type=int, help="Number of random starting points")
def uniqueness(**options: Any) -> None:
    """Solve from random starts and compare the maximizers."""
    run_experiment("uniqueness", options)


@main.command()
@common_options
@click.option(
    "--patch",
    "patch_dir",
    required=True,
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    help="Output directory of a solve run",
)
@click.option("--perturb", help="translate:d, rotate:angle or flow:s")
@click.option("--turnovers", type=float, help="Horizon in turnover times")
@click.option("--baseline", help="Pinned reference values file (default: <out-dir>/baseline.json)")
def evolve(patch_dir: Path, **options: Any) -> None:
    """Evolve a perturbed steady patch under the Euler equations."""
    run_experiment("evolve", options, patch_dir)


@main.command()
@common_options
@click.option(
    "--patch",
    "patch_dir",
    required=True,
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    help="Output directory of a solve run",
)
@click.option("--trials", type=int, help="Number of random rearrangements")
def localmax(patch_dir: Path, **options: Any) -> None:
    """Check the energy comparison chain over nearby rearrangements."""
    run_experiment("localmax", options, patch_dir)


if __name__ == "__main__":
    main()
