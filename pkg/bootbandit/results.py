"""Result dataclasses for experiment, tuning and inspection commands.

These define the contract between the simulation layer and formatters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from bootbandit.enums import AgentKind
from bootbandit.models import AgentHyperparams, InitialDesign, RunFailure, ValidationReport


@dataclass
class SurfaceSummary:
    """Activation rates and active-coefficient spread per effect order."""

    n_surfaces: int
    n_rejected: int
    activation_rate: dict[int, float]
    active_std: dict[int, float]
    n_active: dict[int, int]


@dataclass
class CurvePoint:
    """Mean pseudo-performance of one agent at one trial."""

    agent: AgentKind
    noise_sigma: float
    trial: int
    mean_pseudo_performance: float
    stderr: float
    n_surfaces: int


@dataclass
class SummaryRow:
    """Mean cumulative regret of one agent up to one horizon."""

    agent: AgentKind
    noise_sigma: float
    horizon: int
    mean_cumulative_regret: float
    stderr: float
    n_surfaces: int
    seed: int
    mean_cumulative_regret_with_init: float


@dataclass
class ExperimentReport:
    """Aggregated output of run_experiment."""

    curve: list[CurvePoint] = field(default_factory=list)
    summary: list[SummaryRow] = field(default_factory=list)
    failures: list[RunFailure] = field(default_factory=list)
    n_rejected_surfaces: int = 0

    def final_rows(self) -> list[SummaryRow]:
        """Summary rows at the longest horizon of each (agent, noise) pair."""
        longest: dict[tuple[AgentKind, float], SummaryRow] = {}
        for row in self.summary:
            key = (row.agent, row.noise_sigma)
            if key not in longest or row.horizon > longest[key].horizon:
                longest[key] = row
        return [longest[k] for k in sorted(longest, key=lambda k: (k[0].value, k[1]))]


@dataclass
class TuneScore:
    """Mean cumulative regret of one grid point."""

    agent: AgentKind
    noise_sigma: float
    hyperparams: AgentHyperparams
    mean_cumulative_regret: float
    n_runs: int


@dataclass
class TuneResult:
    """Best hyperparameters per (agent, noise level) plus every score."""

    best: dict[tuple[AgentKind, float], AgentHyperparams] = field(default_factory=dict)
    scores: list[TuneScore] = field(default_factory=list)


@dataclass
class DesignResult:
    """A generated design together with its validation report."""

    design: InitialDesign
    report: ValidationReport
    seed: int
