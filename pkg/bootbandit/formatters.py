"""Output formatters for CLI results.

Console renderers take a result dataclass and print it as text or JSON; file
writers produce the CSV and text artifacts. All Rich console output is
contained here.
"""

import csv
import json
import math
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from rich.console import Console
from rich.table import Table

from bootbandit.arms import feature_label, feature_terms
from bootbandit.enums import AgentKind, OutputFormat
from bootbandit.models import ResponseSurface, RunFailure
from bootbandit.results import (
    CurvePoint,
    DesignResult,
    ExperimentReport,
    SummaryRow,
    SurfaceSummary,
    TuneResult,
)

CURVE_HEADER = [
    "agent",
    "noise_sigma",
    "trial",
    "mean_pseudo_performance",
    "stderr",
    "n_surfaces",
]
SUMMARY_HEADER = [
    "agent",
    "noise_sigma",
    "horizon",
    "mean_cumulative_regret",
    "stderr",
    "n_surfaces",
    "seed",
    "mean_cumulative_regret_with_init",
]
FAILURES_HEADER = ["surface_id", "agent", "noise_sigma", "error_type", "message"]

_ORDER_NAMES = {1: "main effects", 2: "two-way", 3: "three-way"}


def format_number(value: float) -> str:
    """Six significant digits, positional notation, no trailing zeros."""
    value = float(value)
    if value == 0.0:
        return "0"
    if not math.isfinite(value):
        return str(value)
    return np.format_float_positional(value, precision=6, unique=False, fractional=False, trim="-")


def _write_csv(path: Path, header: Sequence[str] | None, rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        if header is not None:
            writer.writerow(header)
        writer.writerows(rows)


def write_curve_csv(path: Path, curve: Sequence[CurvePoint]) -> None:
    _write_csv(
        path,
        CURVE_HEADER,
        [
            [
                p.agent.value,
                format_number(p.noise_sigma),
                p.trial,
                format_number(p.mean_pseudo_performance),
                format_number(p.stderr),
                p.n_surfaces,
            ]
            for p in curve
        ],
    )


def write_summary_csv(path: Path, summary: Sequence[SummaryRow]) -> None:
    _write_csv(
        path,
        SUMMARY_HEADER,
        [
            [
                r.agent.value,
                format_number(r.noise_sigma),
                r.horizon,
                format_number(r.mean_cumulative_regret),
                format_number(r.stderr),
                r.n_surfaces,
                r.seed,
                format_number(r.mean_cumulative_regret_with_init),
            ]
            for r in summary
        ],
    )


def write_failures_csv(path: Path, failures: Sequence[RunFailure]) -> None:
    _write_csv(
        path,
        FAILURES_HEADER,
        [
            [f.surface_id, f.agent.value, format_number(f.noise_sigma), f.error_type, f.message]
            for f in failures
        ],
    )


def write_design_csv(path: Path, result: DesignResult) -> None:
    """The +/-1 run matrix, one run per row, no header."""
    _write_csv(path, None, result.design.levels_matrix().tolist())


def write_surfaces(path: Path, drawn: Sequence[tuple[ResponseSurface, bool]]) -> None:
    """Each surface as a comment header followed by index,coefficient,active lines."""
    lines: list[str] = []
    for surface, rejected in drawn:
        lines.append(f"# surface {surface.surface_id} rejected={str(rejected).lower()}")
        for index, (value, active) in enumerate(
            zip(surface.theta, surface.active_mask, strict=True)
        ):
            lines.append(f"{index},{format_number(value)},{int(bool(active))}")
    path.write_text("\n".join(lines) + "\n")


def write_yaml(path: Path, data: dict[str, Any]) -> None:
    path.write_text(yaml.safe_dump(data, sort_keys=False))


def simulation(
    report: ExperimentReport,
    ratios: dict[float, dict[AgentKind, float]],
    console: Console,
) -> None:
    """One summary line per agent and noise level at the longest horizon."""
    final = report.final_rows()
    if not final:
        console.print("[yellow]No completed runs to summarize[/yellow]")
    else:
        table = Table(title=f"Cumulative regret at horizon {final[0].horizon}")
        table.add_column("agent", style="cyan")
        table.add_column("noise_sigma", justify="right")
        table.add_column("mean regret", justify="right")
        table.add_column("stderr", justify="right")
        table.add_column("surfaces", justify="right")
        for row in final:
            table.add_row(
                row.agent.value,
                format_number(row.noise_sigma),
                format_number(row.mean_cumulative_regret),
                format_number(row.stderr),
                str(row.n_surfaces),
            )
        console.print(table)

    for sigma, by_agent in ratios.items():
        for kind, ratio in sorted(by_agent.items(), key=lambda item: item[0].value):
            console.print(
                f"  sigma {format_number(sigma)}: {kind.value} / best baseline = "
                f"[bold]{format_number(ratio)}[/bold]"
            )

    if report.n_rejected_surfaces:
        console.print(
            f"[dim]Rejected {report.n_rejected_surfaces:,} degenerate surface draws[/dim]"
        )
    if report.failures:
        console.print(
            f"[yellow]{len(report.failures)} runs failed; see failures.csv[/yellow]"
        )


def tuning(result: TuneResult, console: Console) -> None:
    """Selected hyperparameters per agent and noise level."""
    if not result.best:
        console.print("[yellow]No grid point was evaluated[/yellow]")
        return
    console.print("\n[bold]Selected hyperparameters:[/bold]\n")
    scores = {(s.agent, s.noise_sigma, s.hyperparams): s for s in result.scores}
    for (kind, sigma), hp in sorted(result.best.items(), key=lambda i: (i[0][1], i[0][0].value)):
        score = scores[(kind, sigma, hp)]
        level = hp.exploration_level(kind)
        console.print(
            f"  sigma {format_number(sigma):>6}  [cyan]{kind.value:10s}[/cyan] "
            f"exploration {format_number(level):>8}  "
            f"regret {format_number(score.mean_cumulative_regret)}"
        )
    console.print()


def design(result: DesignResult, output_format: OutputFormat, console: Console) -> None:
    """Balance, orthogonality and rank report for a generated design."""
    report = result.report
    if output_format == OutputFormat.JSON:
        data = {
            "query": "validate-design",
            "n_treatments": report.n_treatments,
            "n_runs": report.n_runs,
            "seed": result.seed,
            "balanced": report.balanced,
            "max_balance_residual": max(report.balance_residuals, default=0.0),
            "max_main_correlation": report.max_main_correlation,
            "rank": report.rank,
            "required_rank": report.required_rank,
            "duplicated_columns": [list(pair) for pair in report.duplicated_columns],
            "passed": report.passed,
            "runs": result.design.levels_matrix().tolist(),
        }
        console.print_json(json.dumps(data, indent=2))
        return

    console.print(
        f"\n[bold]Design:[/bold] K={report.n_treatments}, {report.n_runs} runs "
        f"(seed {result.seed})\n"
    )
    console.print(f"  Column balance:        {'exact' if report.balanced else 'NOT balanced'}")
    console.print(f"  Max main correlation:  {format_number(report.max_main_correlation)}")
    console.print(f"  Model-matrix rank:     {report.rank} of {report.required_rank}")
    if report.duplicated_columns:
        terms = feature_terms(report.n_treatments, 2)
        pairs = ", ".join(
            f"{feature_label(terms[i])}={feature_label(terms[j])}"
            for i, j in report.duplicated_columns[:5]
        )
        console.print(f"  Aliased columns:       {pairs}")
    verdict = "[green]pass[/green]" if report.passed else "[red]fail[/red]"
    console.print(f"  Result:                {verdict}")
    console.print()


def surfaces(summary: SurfaceSummary, output_format: OutputFormat, console: Console) -> None:
    """Empirical activation rate and spread of active coefficients per effect order."""
    if output_format == OutputFormat.JSON:
        data = {
            "query": "sample-surfaces",
            "n_surfaces": summary.n_surfaces,
            "n_rejected": summary.n_rejected,
            "orders": [
                {
                    "order": order,
                    "activation_rate": summary.activation_rate[order],
                    "active_std": summary.active_std[order],
                    "n_active": summary.n_active[order],
                }
                for order in sorted(summary.activation_rate)
            ],
        }
        console.print_json(json.dumps(data, indent=2))
        return

    console.print(
        f"\n[bold]Sampled {summary.n_surfaces:,} surfaces[/bold] "
        f"({summary.n_rejected:,} flagged degenerate)\n"
    )
    for order in sorted(summary.activation_rate):
        console.print(
            f"  {_ORDER_NAMES[order]:14s} active {format_number(summary.activation_rate[order]):>8}"
            f"   std {format_number(summary.active_std[order]):>8}"
            f"   ({summary.n_active[order]:,} active)"
        )
    console.print()
