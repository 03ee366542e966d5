"""Command-line interface for bootstrap bandit experiments.

This module handles argument parsing only. Experiment logic lives in
simulation.py, output formatting lives in formatters.py.
"""

import logging
from collections.abc import Iterator
from contextlib import contextmanager, nullcontext
from pathlib import Path
from typing import Annotated

import typer
from rich.console import Console
from rich.logging import RichHandler

from bootbandit import formatters, timing
from bootbandit.cache import RunCache
from bootbandit.config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    dump_config,
    load_config,
    load_grid,
    tuned_fragment,
)
from bootbandit.design import generate_initial_design, validate_design
from bootbandit.enums import OutputFormat
from bootbandit.environment import summarize_surfaces
from bootbandit.models import ContractViolationError, DegenerateSurfaceError, DesignSearchError
from bootbandit.results import DesignResult
from bootbandit.simulation import (
    baseline_ratios,
    design_stream,
    draw_surfaces,
    run_experiment,
    tune_sweep,
)

HELP_TEXT = """Bootstrap-UCB agents for combinatorial factorial experiments.

**Quick start:**
```
bootbandit validate-design --treatments 7 --runs 32   # Check the seeding design
bootbandit sample-surfaces -c base.yaml --count 10000 # Calibrate the meta-model
bootbandit tune -c base.yaml --grid grid.yaml         # Pick hyperparameters
bootbandit simulate -c base.yaml -c out/tuned.yaml    # Run the comparison
```

**Outputs:** `curve.csv`, `summary.csv`, `effective_config.yaml`, `tuned.yaml`,
`design.csv`, `surfaces.txt`
"""

app = typer.Typer(
    name="bootbandit",
    help=HELP_TEXT,
    no_args_is_help=True,
    rich_markup_mode="markdown",
)

console = Console()
err_console = Console(stderr=True)

log = logging.getLogger("bootbandit")

ConfigOption = Annotated[
    list[Path],
    typer.Option("--config", "-c", help="YAML config; repeat to layer files, later wins"),
]
OutDir = Annotated[Path, typer.Option("--out", "-o", help="Directory for output files")]
SeedOption = Annotated[
    int | None, typer.Option("--seed", help="Root seed (overrides experiment.root_seed)")
]
ThreadsOption = Annotated[
    int | None,
    typer.Option(
        "--threads",
        envvar="BOOTBANDIT_THREADS",
        help="Worker processes (overrides experiment.threads)",
    ),
]
NoCacheOption = Annotated[bool, typer.Option("--no-cache", help="Disable the run cache")]
FormatOption = Annotated[str, typer.Option("--format", "-f", help="Output format")]


@app.callback()
def main_callback(
    verbose: Annotated[
        int,
        typer.Option("--verbose", "-v", count=True, help="Log progress (-v info, -vv debug)"),
    ] = 0,
    enable_timing: Annotated[
        bool,
        typer.Option(
            "--timing",
            help="Show timing breakdown per experiment phase",
        ),
    ] = False,
) -> None:
    """Bootstrap bandits: simulate, tune and inspect."""
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose > 1:
        level = logging.DEBUG
    log.handlers.clear()
    log.addHandler(RichHandler(console=err_console, show_path=False))
    log.setLevel(level)
    if enable_timing:
        timing.enable(console)


@contextmanager
def _reported_errors() -> Iterator[None]:
    """Turn library errors into red console messages and exit status 1."""
    try:
        yield
    except ConfigError as e:
        err_console.print("[red]Invalid configuration:[/red]")
        for issue in e.issues:
            err_console.print(f"  [red]-[/red] {issue}")
        raise typer.Exit(1) from None
    except DesignSearchError as e:
        err_console.print(f"[red]Design search failed:[/red] {e}")
        err_console.print(
            f"  best rank {e.best_rank} of {e.required_rank} "
            f"after {e.candidates_tried:,} candidates"
        )
        raise typer.Exit(1) from None
    except (ContractViolationError, DegenerateSurfaceError) as e:
        err_console.print(f"[red]Error:[/red] {e}")
        raise typer.Exit(1) from None


def _log_cache(run_cache: RunCache | None) -> None:
    if run_cache is not None:
        stats = run_cache.stats()
        log.info(
            "Run cache %s holds %d runs (%d bytes)",
            run_cache.db_path,
            stats["run_count"],
            stats["size_bytes"],
        )


def _load(
    config: list[Path], seed: int | None = None, threads: int | None = None
) -> ExperimentConfig:
    return apply_overrides(load_config(config), seed=seed, threads=threads)


@app.command()
def simulate(
    config: ConfigOption,
    out: OutDir = Path("results"),
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    no_cache: NoCacheOption = False,
) -> None:
    """Run every agent on every surface and noise level; write curve and summary CSVs."""
    with _reported_errors():
        cfg = _load(config, seed, threads)
        out.mkdir(parents=True, exist_ok=True)
        with nullcontext() if no_cache else RunCache.for_output(out) as run_cache:
            with console.status(
                f"[bold blue]Simulating[/bold blue] {cfg.n_surfaces} surfaces x "
                f"{len(cfg.noise_sigmas)} noise levels x {len(cfg.roster)} agents..."
            ):
                report = run_experiment(cfg, run_cache)
            _log_cache(run_cache)

    formatters.write_curve_csv(out / "curve.csv", report.curve)
    formatters.write_summary_csv(out / "summary.csv", report.summary)
    (out / "effective_config.yaml").write_text(dump_config(cfg))
    failures_path = out / "failures.csv"
    if report.failures:
        formatters.write_failures_csv(failures_path, report.failures)
    else:
        failures_path.unlink(missing_ok=True)

    formatters.simulation(report, baseline_ratios(report), console)
    console.print(f"[green]Results written to {out}/[/green]")


@app.command()
def tune(
    config: ConfigOption,
    grid: Annotated[Path, typer.Option("--grid", "-g", help="YAML grid: agent -> field -> values")],
    out: OutDir = Path("results"),
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    no_cache: NoCacheOption = False,
) -> None:
    """Sweep a hyperparameter grid on tuning surfaces; write the winners as tuned.yaml."""
    with _reported_errors():
        cfg = _load(config, seed, threads)
        points = load_grid(grid)
        out.mkdir(parents=True, exist_ok=True)
        with nullcontext() if no_cache else RunCache.for_output(out) as run_cache:
            with console.status(
                f"[bold blue]Tuning[/bold blue] {sum(len(p) for p in points.values())} "
                f"grid points on {cfg.n_tune_surfaces} surfaces..."
            ):
                result = tune_sweep(cfg, points, run_cache)
            _log_cache(run_cache)

    formatters.write_yaml(out / "tuned.yaml", tuned_fragment(cfg, result.best))
    formatters.tuning(result, console)
    console.print(f"[green]Wrote {out / 'tuned.yaml'}[/green]")


@app.command("validate-design")
def validate_design_command(
    treatments: Annotated[int, typer.Option("--treatments", "-k", help="Number of treatments")],
    runs: Annotated[int, typer.Option("--runs", "-n", help="Number of design runs")],
    seed: Annotated[int, typer.Option("--seed", help="Root seed")] = 0,
    out: OutDir = Path("."),
    output_format: FormatOption = "text",
) -> None:
    """Generate an orthogonal-array design, report its quality and write design.csv."""
    with _reported_errors():
        rng = design_stream(seed, treatments, runs)
        design = generate_initial_design(treatments, runs, rng)
        result = DesignResult(design=design, report=validate_design(design), seed=seed)

    out.mkdir(parents=True, exist_ok=True)
    formatters.write_design_csv(out / "design.csv", result)
    formatters.design(result, OutputFormat(output_format), console)
    if not result.report.passed:
        raise typer.Exit(1)


@app.command("sample-surfaces")
def sample_surfaces_command(
    count: Annotated[int, typer.Option("--count", "-n", help="Number of surfaces to draw")],
    config: Annotated[
        list[Path] | None,
        typer.Option("--config", "-c", help="YAML config; repeat to layer files, later wins"),
    ] = None,
    seed: SeedOption = None,
    out: OutDir = Path("."),
    output_format: FormatOption = "text",
) -> None:
    """Draw response surfaces from the meta-model and report activation statistics."""
    with _reported_errors():
        cfg = _load(config or [], seed)
        drawn = draw_surfaces(cfg, count)
        n_rejected = sum(1 for _, rejected in drawn if rejected)
        summary = summarize_surfaces([surface for surface, _ in drawn], n_rejected)

    out.mkdir(parents=True, exist_ok=True)
    formatters.write_surfaces(out / "surfaces.txt", drawn)
    formatters.surfaces(summary, OutputFormat(output_format), console)


if __name__ == "__main__":
    app()
