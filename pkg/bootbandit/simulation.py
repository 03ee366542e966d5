"""Experiment orchestration: surfaces x noise levels x agents x trials.

Every (surface, agent, noise level, phase) task owns a stream derived from
those keys, so results do not depend on scheduling or on the thread count.
Aggregation is an ordered reduction over tasks sorted by their keys.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from functools import cache
from typing import TYPE_CHECKING, Any

import numpy as np

from bootbandit import timing
from bootbandit.agents import init_agent, select, update
from bootbandit.arms import enumerate_arms
from bootbandit.config import ExperimentConfig
from bootbandit.design import generate_initial_design
from bootbandit.enums import AgentKind, Phase
from bootbandit.environment import (
    draw_noise,
    expected_reward,
    expected_rewards,
    optimal_arm,
    sample_surface,
    sample_valid_surface,
)
from bootbandit.models import (
    AgentHyperparams,
    Arm,
    ArmSet,
    ContractViolationError,
    DegenerateSurfaceError,
    InitialDesign,
    NoiseModel,
    ResponseSurface,
    RunFailure,
    RunResult,
)
from bootbandit.numerics import RngStream, derive_stream_id
from bootbandit.results import CurvePoint, ExperimentReport, SummaryRow, TuneResult, TuneScore

if TYPE_CHECKING:
    from bootbandit.cache import RunCache

log = logging.getLogger(__name__)

TUNE_SURFACE_OFFSET = 2**32


@cache
def _arm_set(n_treatments: int) -> ArmSet:
    return enumerate_arms(n_treatments)


def _positive_optimum(surface: ResponseSurface, arms: ArmSet) -> float:
    _, best = optimal_arm(surface, arms)
    if not best > 0.0:
        raise ContractViolationError(
            f"Surface {surface.surface_id} has non-positive optimum {best}"
        )
    return best


def pseudo_performance(surface: ResponseSurface, arm: Arm, arms: ArmSet | None = None) -> float:
    """Expected reward of arm as a percentage of the optimal expected reward."""
    arms = arms or _arm_set(surface.n_treatments)
    return 100.0 * expected_reward(surface, arm) / _positive_optimum(surface, arms)


def cumulative_regret(
    trajectory: Sequence[Arm], surface: ResponseSurface, arms: ArmSet | None = None
) -> float:
    """Sum over the given trials of 1 - (expected reward / optimal expected reward)."""
    if not trajectory:
        raise ContractViolationError("Cannot score an empty trajectory")
    arms = arms or _arm_set(surface.n_treatments)
    best = _positive_optimum(surface, arms)
    return float(sum(1.0 - expected_reward(surface, arm) / best for arm in trajectory))


def surface_stream(root_seed: int, surface_id: int) -> RngStream:
    return RngStream(root_seed, derive_stream_id("surface", surface_id))


def design_stream(root_seed: int, n_treatments: int, n_runs: int) -> RngStream:
    return RngStream(root_seed, derive_stream_id("design", n_treatments, n_runs))


def run_stream(
    root_seed: int, surface_id: int, kind: AgentKind, sigma: float, phase: Phase
) -> RngStream:
    """Stream for one run, keyed by (surface id, agent, noise level, phase)."""
    return RngStream(
        root_seed, derive_stream_id(surface_id, kind.value, float(sigma), phase.value)
    )


def run_single(
    surface: ResponseSurface,
    kind: AgentKind,
    hp: AgentHyperparams,
    horizon: int,
    stream: RngStream,
    design: InitialDesign,
    arms: ArmSet | None = None,
) -> RunResult:
    """Seed an agent from the design, then play horizon select/observe/update rounds.

    Rewards come from the stream's "observe" child and agent randomness from
    its "select" child, so the two never interleave.
    """
    if horizon < 1:
        raise ContractViolationError(f"Horizon must be at least 1, got {horizon}")
    arms = arms or _arm_set(surface.n_treatments)
    observe = stream.child("observe")
    choose = stream.child("select")

    values = expected_rewards(surface, arms)
    best = _positive_optimum(surface, arms)

    init_indices = [arms.index_of(run) for run in design.runs]
    init_rewards = np.array([values[i] + draw_noise(surface.noise, observe) for i in init_indices])
    initial_regret = float(np.sum(1.0 - values[init_indices] / best))

    state = init_agent(kind, design, init_rewards, hp)
    result = RunResult(
        surface_id=surface.surface_id,
        agent=kind,
        noise_sigma=surface.noise.sigma_eps,
        seed=stream.seed,
        initial_regret=initial_regret,
    )
    for _ in range(horizon):
        arm = select(state, arms, choose)
        index = arms.index_of(arm)
        reward = float(values[index]) + draw_noise(surface.noise, observe)
        update(state, arm, reward)
        ratio = float(values[index]) / best
        result.chosen.append(index)
        result.pseudo_performance.append(100.0 * ratio)
        result.regret.append(1.0 - ratio)
    return result


@dataclass(frozen=True)
class RunTask:
    """Everything one worker needs to reproduce one run."""

    surface: ResponseSurface
    kind: AgentKind
    hp: AgentHyperparams
    horizon: int
    seed: int
    phase: Phase
    design: InitialDesign

    @property
    def stream(self) -> RngStream:
        return run_stream(
            self.seed, self.surface.surface_id, self.kind, self.surface.noise.sigma_eps, self.phase
        )


def _run_task(task: RunTask) -> RunResult | RunFailure:
    """Run one task, turning any exception into a RunFailure.

    Called directly or from a ProcessPoolExecutor worker.
    """
    try:
        return run_single(task.surface, task.kind, task.hp, task.horizon, task.stream, task.design)
    except Exception as e:
        return RunFailure(
            surface_id=task.surface.surface_id,
            agent=task.kind,
            noise_sigma=task.surface.noise.sigma_eps,
            error_type=type(e).__name__,
            message=str(e),
        )


def execute_tasks(
    tasks: Sequence[RunTask], threads: int = 1, run_cache: RunCache | None = None
) -> list[RunResult | RunFailure]:
    """Run tasks, in parallel when threads > 1; results come back in task order."""
    results: list[RunResult | RunFailure | None] = [None] * len(tasks)
    pending: list[int] = []
    hits = 0

    if run_cache is not None:
        for i, task in enumerate(tasks):
            cached = run_cache.get(task)
            if cached is not None:
                results[i] = cached
                hits += 1
            else:
                pending.append(i)
        timing.record_count("cache_hits", hits)
    else:
        pending = list(range(len(tasks)))

    log.info("Running %d tasks (%d cached) on %d threads", len(pending), hits, threads)
    with timing.timed("simulation"):
        if threads > 1 and len(pending) > 1:
            with ProcessPoolExecutor(max_workers=threads) as executor:
                futures = {executor.submit(_run_task, tasks[i]): i for i in pending}
                for future in as_completed(futures):
                    results[futures[future]] = future.result()
        else:
            for i in pending:
                results[i] = _run_task(tasks[i])

    if run_cache is not None:
        with timing.timed("cache_writes"):
            run_cache.put_many(
                (tasks[i], outcome)
                for i in pending
                if isinstance(outcome := results[i], RunResult)
            )

    return [r for r in results if r is not None]


def sample_surfaces(
    cfg: ExperimentConfig, arms: ArmSet, surface_ids: Sequence[int]
) -> tuple[list[ResponseSurface], list[tuple[int, DegenerateSurfaceError]], int]:
    """One valid surface per id, plus ids whose sampling gave up and the rejection total."""
    surfaces: list[ResponseSurface] = []
    degenerate: list[tuple[int, DegenerateSurfaceError]] = []
    n_rejected = 0
    with timing.timed("surface_sampling"):
        for surface_id in surface_ids:
            rng = surface_stream(cfg.root_seed, surface_id)
            try:
                surface, rejected = sample_valid_surface(
                    rng, cfg.hpm, arms, surface_id=surface_id
                )
            except DegenerateSurfaceError as e:
                log.warning("Surface %d: %s", surface_id, e)
                degenerate.append((surface_id, e))
                n_rejected += e.attempts
                continue
            surfaces.append(surface)
            n_rejected += rejected
    if n_rejected:
        log.warning("Rejected %d degenerate surface draws", n_rejected)
        timing.record_count("surfaces_rejected", n_rejected)
    return surfaces, degenerate, n_rejected


def experiment_design(cfg: ExperimentConfig) -> InitialDesign:
    with timing.timed("design_generation"):
        return generate_initial_design(
            cfg.n_treatments,
            cfg.design_runs,
            design_stream(cfg.root_seed, cfg.n_treatments, cfg.design_runs),
        )


def _stderr(values: np.ndarray) -> float:
    if values.shape[0] < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(values.shape[0]))


def aggregate(
    runs: Sequence[RunResult], horizons: Sequence[int], seed: int
) -> tuple[list[CurvePoint], list[SummaryRow]]:
    """Mean pseudo-performance per trial and mean cumulative regret per horizon.

    Rows are ordered by (agent, noise sigma, trial or horizon).
    """
    groups: dict[tuple[AgentKind, float], list[RunResult]] = {}
    for run in runs:
        groups.setdefault((run.agent, run.noise_sigma), []).append(run)

    curve: list[CurvePoint] = []
    summary: list[SummaryRow] = []
    for kind, sigma in sorted(groups, key=lambda k: (k[0].value, k[1])):
        group = sorted(groups[(kind, sigma)], key=lambda r: r.surface_id)
        n = len(group)
        performance = np.array([r.pseudo_performance for r in group])
        regret = np.array([r.regret for r in group])
        initial = np.array([r.initial_regret for r in group])

        for t in range(performance.shape[1]):
            column = performance[:, t]
            curve.append(
                CurvePoint(
                    agent=kind,
                    noise_sigma=sigma,
                    trial=t + 1,
                    mean_pseudo_performance=float(np.mean(column)),
                    stderr=_stderr(column),
                    n_surfaces=n,
                )
            )
        for h in horizons:
            totals = regret[:, :h].sum(axis=1)
            summary.append(
                SummaryRow(
                    agent=kind,
                    noise_sigma=sigma,
                    horizon=h,
                    mean_cumulative_regret=float(np.mean(totals)),
                    stderr=_stderr(totals),
                    n_surfaces=n,
                    seed=seed,
                    mean_cumulative_regret_with_init=float(np.mean(totals + initial)),
                )
            )
    return curve, summary


def _split(
    outcomes: Sequence[RunResult | RunFailure],
) -> tuple[list[RunResult], list[RunFailure]]:
    runs = [o for o in outcomes if isinstance(o, RunResult)]
    failures = [o for o in outcomes if isinstance(o, RunFailure)]
    for failure in failures:
        log.warning(
            "Run failed: surface %d, %s, sigma %s: %s: %s",
            failure.surface_id,
            failure.agent.value,
            failure.noise_sigma,
            failure.error_type,
            failure.message,
        )
    if failures:
        timing.record_count("runs_failed", len(failures))
    return runs, failures


def _degenerate_failures(
    degenerate: Sequence[tuple[int, DegenerateSurfaceError]],
    sigmas: Sequence[float],
    kinds: Sequence[AgentKind],
) -> list[RunFailure]:
    return [
        RunFailure(
            surface_id=surface_id,
            agent=kind,
            noise_sigma=float(sigma),
            error_type=type(error).__name__,
            message=str(error),
        )
        for surface_id, error in degenerate
        for sigma in sigmas
        for kind in kinds
    ]


def _failure_order(failure: RunFailure) -> tuple[str, float, int]:
    return (failure.agent.value, failure.noise_sigma, failure.surface_id)


def run_experiment(cfg: ExperimentConfig, run_cache: RunCache | None = None) -> ExperimentReport:
    """Run every roster agent on every surface at every noise level and aggregate."""
    arms = _arm_set(cfg.n_treatments)
    design = experiment_design(cfg)
    surfaces, degenerate, n_rejected = sample_surfaces(cfg, arms, range(cfg.n_surfaces))

    tasks = [
        RunTask(
            surface=surface.with_noise(NoiseModel(cfg.noise_kind, float(sigma))),
            kind=kind,
            hp=cfg.hyperparams_for(kind, sigma),
            horizon=cfg.horizon,
            seed=cfg.root_seed,
            phase=Phase.EVALUATE,
            design=design,
        )
        for surface in surfaces
        for sigma in cfg.noise_sigmas
        for kind in cfg.roster
    ]
    runs, failures = _split(execute_tasks(tasks, cfg.threads, run_cache))
    failures.extend(_degenerate_failures(degenerate, cfg.noise_sigmas, cfg.roster))

    with timing.timed("aggregation"):
        curve, summary = aggregate(runs, cfg.report_horizons or (cfg.horizon,), cfg.root_seed)
    log.info("Experiment finished: %d runs, %d failures", len(runs), len(failures))
    return ExperimentReport(
        curve=curve,
        summary=summary,
        failures=sorted(failures, key=_failure_order),
        n_rejected_surfaces=n_rejected,
    )


def tune_surface_ids(cfg: ExperimentConfig) -> range:
    """Tuning surface ids; disjoint from the evaluation ids 0..n_surfaces-1."""
    return range(TUNE_SURFACE_OFFSET, TUNE_SURFACE_OFFSET + cfg.n_tune_surfaces)


def tune_sweep(
    cfg: ExperimentConfig,
    grid: dict[AgentKind, list[dict[str, Any]]],
    run_cache: RunCache | None = None,
) -> TuneResult:
    """Pick, per agent and noise level, the grid point with least mean cumulative regret.

    Every point is scored at cfg.horizon on the same tuning surfaces and streams.
    Ties go to the smaller exploration level, then to the earlier point.
    """
    if not grid or not any(grid.values()):
        raise ContractViolationError("Tuning grid is empty")
    arms = _arm_set(cfg.n_treatments)
    design = experiment_design(cfg)
    surfaces, degenerate, _ = sample_surfaces(cfg, arms, tune_surface_ids(cfg))

    candidates: list[tuple[AgentKind, float, AgentHyperparams]] = []
    tasks: list[RunTask] = []
    for sigma in cfg.noise_sigmas:
        for kind, points in grid.items():
            for point in points:
                hp = replace(cfg.hyperparams_for(kind, sigma), **point)
                candidates.append((kind, float(sigma), hp))
                tasks.extend(
                    RunTask(
                        surface=surface.with_noise(NoiseModel(cfg.noise_kind, float(sigma))),
                        kind=kind,
                        hp=hp,
                        horizon=cfg.horizon,
                        seed=cfg.root_seed,
                        phase=Phase.TUNE,
                        design=design,
                    )
                    for surface in surfaces
                )

    if degenerate:
        log.warning("%d tuning surfaces were degenerate and are skipped", len(degenerate))
    outcomes = execute_tasks(tasks, cfg.threads, run_cache)
    per_candidate = len(surfaces)
    result = TuneResult()
    ranked: dict[tuple[AgentKind, float], list[tuple[float, float, int]]] = {}
    for c, (kind, sigma, hp) in enumerate(candidates):
        block = outcomes[c * per_candidate : (c + 1) * per_candidate]
        runs, _ = _split(block)
        score = (
            float(np.mean([r.cumulative_regret_at(cfg.horizon) for r in runs]))
            if runs
            else float("inf")
        )
        result.scores.append(
            TuneScore(
                agent=kind,
                noise_sigma=sigma,
                hyperparams=hp,
                mean_cumulative_regret=score,
                n_runs=len(runs),
            )
        )
        ranked.setdefault((kind, sigma), []).append((score, hp.exploration_level(kind), c))

    for key, entries in ranked.items():
        _, _, c = min(entries)
        result.best[key] = candidates[c][2]
        log.info(
            "Tuned %s at sigma %s: regret %.4g",
            key[0].value,
            key[1],
            result.scores[c].mean_cumulative_regret,
        )
    return result


def baseline_ratios(report: ExperimentReport) -> dict[float, dict[AgentKind, float]]:
    """Final-horizon regret of each bootstrap agent over the best baseline's, per noise level."""
    final = report.final_rows()
    ratios: dict[float, dict[AgentKind, float]] = {}
    for sigma in sorted({row.noise_sigma for row in final}):
        rows = [row for row in final if row.noise_sigma == sigma]
        baselines = [row.mean_cumulative_regret for row in rows if not row.agent.is_bootstrap]
        if not baselines:
            continue
        best = min(baselines)
        ratios[sigma] = {
            row.agent: (row.mean_cumulative_regret / best if best > 0 else float("inf"))
            for row in rows
            if row.agent.is_bootstrap
        }
    return ratios


def draw_surfaces(cfg: ExperimentConfig, count: int) -> list[tuple[ResponseSurface, bool]]:
    """Raw meta-model draws for ids 0..count-1, each flagged when degenerate.

    Uses the same per-id streams as run_experiment, so surface 0 here is the
    first draw simulate would make for surface 0.
    """
    if count < 1:
        raise ContractViolationError(f"Surface count must be at least 1, got {count}")
    arms = _arm_set(cfg.n_treatments)
    drawn: list[tuple[ResponseSurface, bool]] = []
    with timing.timed("surface_sampling"):
        for surface_id in range(count):
            surface = sample_surface(
                surface_stream(cfg.root_seed, surface_id),
                cfg.hpm,
                cfg.n_treatments,
                NoiseModel(cfg.noise_kind, cfg.noise_sigmas[0]),
                surface_id,
            )
            _, best = optimal_arm(surface, arms)
            drawn.append((surface, not best > cfg.hpm.reject_threshold))
    return drawn
