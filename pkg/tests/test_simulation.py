"""Tests for run orchestration, metrics, aggregation and tuning."""

import numpy as np
import pytest
from conftest import make_surface, no_triples_hpm, valid_surface

from bootbandit.agents import init_agent, select, update, xrandom_select
from bootbandit.arms import enumerate_arms
from bootbandit.config import ExperimentConfig
from bootbandit.enums import AgentKind, Phase
from bootbandit.environment import draw_noise, expected_rewards
from bootbandit.models import (
    AgentHyperparams,
    ContractViolationError,
    HpmConfig,
    NoiseModel,
    RunResult,
)
from bootbandit.numerics import RngStream, sample_indices_with_replacement
from bootbandit.results import ExperimentReport, SummaryRow
from bootbandit.simulation import (
    aggregate,
    baseline_ratios,
    cumulative_regret,
    draw_surfaces,
    experiment_design,
    pseudo_performance,
    run_experiment,
    run_single,
    run_stream,
    sample_surfaces,
    tune_surface_ids,
    tune_sweep,
)

NOISELESS = AgentHyperparams(
    n_bootstrap=100,
    delta=95.0,
    ridge_lambda=1e-9,
    oful_radius=0.0,
    linucb_alpha=0.0,
    ts_v=0.0,
)


def small_config(**overrides) -> ExperimentConfig:
    """A K=3 experiment small enough for unit tests."""
    values = {
        "n_treatments": 3,
        "n_surfaces": 3,
        "horizon": 5,
        "horizons": (2, 5),
        "noise_sigmas": (1.0,),
        "design_runs": 8,
        "root_seed": 5,
        "n_tune_surfaces": 4,
        "roster": (AgentKind.X_RANDOM, AgentKind.LINUCB),
        "defaults": AgentHyperparams(n_bootstrap=20),
    }
    values.update(overrides)
    return ExperimentConfig(**values)


class TestPseudoPerformance:
    def test_optimal_arm_scores_100(self, arms3):
        surface = make_surface([0.0, 3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 3)
        best = arms3.arms[int(np.argmax(expected_rewards(surface, arms3)))]
        assert pseudo_performance(surface, best, arms3) == pytest.approx(100.0)

    def test_half_of_optimum_scores_50(self, arms3):
        """3*x1 + x2 peaks at 4; (+1, -1, *) earns 2."""
        surface = make_surface([0.0, 3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 3)
        arm = next(a for a in arms3.arms if a.levels[:2] == (1, -1))
        assert pseudo_performance(surface, arm, arms3) == pytest.approx(50.0)

    def test_matches_expected_reward_ratio(self, arms3):
        surface = valid_surface(1, arms3)
        values = expected_rewards(surface, arms3)
        for m, arm in enumerate(arms3.arms):
            assert pseudo_performance(surface, arm) == pytest.approx(
                100.0 * values[m] / values.max()
            )

    def test_non_positive_optimum_rejected(self, arms3):
        surface = make_surface([0.0] * 8, 3)
        with pytest.raises(ContractViolationError):
            pseudo_performance(surface, arms3.arms[0], arms3)


class TestCumulativeRegret:
    def test_always_optimal_is_zero(self, arms3):
        surface = make_surface([0.0, 3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 3)
        best = next(a for a in arms3.arms if a.levels[:2] == (1, 1))
        assert cumulative_regret([best] * 10, surface, arms3) == 0.0

    def test_half_ratio_gives_half_per_trial(self, arms3):
        surface = make_surface([0.0, 3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 3)
        arm = next(a for a in arms3.arms if a.levels[:2] == (1, -1))
        assert cumulative_regret([arm] * 12, surface, arms3) == pytest.approx(6.0)

    def test_matches_direct_summation(self, arms3):
        surface = valid_surface(2, arms3)
        values = expected_rewards(surface, arms3)
        picks = np.random.default_rng(0).integers(0, 8, size=25)
        expected = sum(1.0 - values[m] / values.max() for m in picks)
        trajectory = [arms3.arms[int(m)] for m in picks]
        assert cumulative_regret(trajectory, surface, arms3) == pytest.approx(expected)

    def test_empty_trajectory_rejected(self, arms3):
        with pytest.raises(ContractViolationError):
            cumulative_regret([], valid_surface(0, arms3), arms3)


class TestRunSingle:
    def test_same_stream_same_result(self, design3_32, arms3):
        surface = valid_surface(3, arms3, sigma=5.0)
        hp = AgentHyperparams(n_bootstrap=30)
        a = run_single(surface, AgentKind.X_RANDOM, hp, 15, RngStream(1, 2), design3_32)
        b = run_single(surface, AgentKind.X_RANDOM, hp, 15, RngStream(1, 2), design3_32)
        assert a.chosen == b.chosen
        assert a.regret == b.regret
        assert a.seed == b.seed

    def test_regret_and_performance_agree(self, design3_32, arms3):
        """Cumulative regret equals (100 T - sum of pseudo-performance) / 100."""
        surface = valid_surface(4, arms3, sigma=5.0)
        run = run_single(
            surface, AgentKind.THOMPSON, AgentHyperparams(), 30, RngStream(4), design3_32
        )
        assert run.horizon == 30
        assert run.cumulative_regret == pytest.approx(
            (100.0 * 30 - sum(run.pseudo_performance)) / 100.0
        )
        assert all(p <= 100.0 + 1e-9 for p in run.pseudo_performance)
        trajectory = [arms3.arms[m] for m in run.chosen]
        assert run.cumulative_regret == pytest.approx(
            cumulative_regret(trajectory, surface, arms3)
        )

    def test_matches_manual_replay(self, design3_32, arms3):
        """Ten X-Fixed trials replayed by hand from the same child streams."""
        surface = valid_surface(5, arms3, sigma=2.0)
        hp = AgentHyperparams(n_bootstrap=50)
        stream = RngStream(8, 8)
        run = run_single(surface, AgentKind.X_FIXED, hp, 10, stream, design3_32)

        observe = stream.child("observe")
        choose = stream.child("select")
        values = expected_rewards(surface, arms3)
        rewards = [
            values[arms3.index_of(r)] + draw_noise(surface.noise, observe)
            for r in design3_32.runs
        ]
        state = init_agent(AgentKind.X_FIXED, design3_32, np.array(rewards), hp)
        chosen = []
        for _ in range(10):
            arm = select(state, arms3, choose)
            m = arms3.index_of(arm)
            chosen.append(m)
            update(state, arm, float(values[m]) + draw_noise(surface.noise, observe))
        assert run.chosen == chosen

    def test_initial_regret_counts_design_pulls(self, factorial3, arms3):
        surface = valid_surface(6, arms3, sigma=1.0)
        values = expected_rewards(surface, arms3)
        run = run_single(surface, AgentKind.LINUCB, AgentHyperparams(), 3, RngStream(0), factorial3)
        assert run.initial_regret == pytest.approx(float(np.sum(1.0 - values / values.max())))

    def test_horizon_must_be_positive(self, factorial3, arms3):
        surface = valid_surface(0, arms3)
        with pytest.raises(ContractViolationError):
            run_single(surface, AgentKind.OFUL, AgentHyperparams(), 0, RngStream(0), factorial3)


@pytest.mark.parametrize("kind", list(AgentKind))
def test_noiseless_well_specified_regret_is_zero(kind, design3_32, arms3):
    """No three-way terms and no noise: every trial picks the optimum."""
    for seed in range(100):
        surface = valid_surface(seed, arms3, no_triples_hpm(), sigma=0.0)
        run = run_single(surface, kind, NOISELESS, 50, RngStream(seed, 77), design3_32)
        assert run.cumulative_regret == 0.0
        assert all(p == 100.0 for p in run.pseudo_performance)



@pytest.mark.parametrize(
    "kind", [AgentKind.X_FIXED, AgentKind.OFUL, AgentKind.LINUCB, AgentKind.THOMPSON]
)
def test_noiseless_regret_is_zero_at_seven_treatments(kind, design7_32, arms7):
    """The 32-run design fixes all 29 features, so exact data gives the optimum."""
    for seed in range(20):
        surface = valid_surface(seed, arms7, no_triples_hpm(), sigma=0.0)
        run = run_single(surface, kind, NOISELESS, 50, RngStream(seed, 77), design7_32, arms7)
        assert run.cumulative_regret == pytest.approx(0.0, abs=1e-9)


def test_noiseless_x_random_with_full_rank_resamples(design7_32, arms7):
    """Resamples that keep every design row are full rank, so every replicate is exact."""
    n_design = design7_32.n_runs

    def keep_design_rows(rng, n):
        extra = sample_indices_with_replacement(rng, n)[: n - n_design]
        return np.concatenate([np.arange(n_design), extra])

    for seed in range(20):
        surface = valid_surface(seed, arms7, no_triples_hpm(), sigma=0.0)
        values = expected_rewards(surface, arms7)
        seeded = values[[arms7.index_of(arm) for arm in design7_32.runs]]
        state = init_agent(AgentKind.X_RANDOM, design7_32, seeded, NOISELESS)
        rng = RngStream(seed, 77)
        for _ in range(30):
            arm = xrandom_select(state, arms7, rng, keep_design_rows)
            value = float(values[arms7.index_of(arm)])
            assert value == pytest.approx(values.max(), abs=1e-9)
            update(state, arm, value)


class TestAggregate:
    def _run(self, surface_id, agent, regret):
        return RunResult(
            surface_id=surface_id,
            agent=agent,
            noise_sigma=1.0,
            seed=0,
            chosen=[0] * len(regret),
            pseudo_performance=[100.0 * (1.0 - r) for r in regret],
            regret=list(regret),
            initial_regret=2.0,
        )

    def test_means_and_standard_errors(self):
        runs = [
            self._run(0, AgentKind.OFUL, [0.5, 0.5, 0.0]),
            self._run(1, AgentKind.OFUL, [0.1, 0.1, 0.0]),
        ]
        curve, summary = aggregate(runs, (1, 3), seed=7)
        assert [p.trial for p in curve] == [1, 2, 3]
        assert curve[0].mean_pseudo_performance == pytest.approx(70.0)
        assert curve[2].stderr == 0.0
        final = summary[-1]
        assert final.horizon == 3
        assert final.mean_cumulative_regret == pytest.approx(0.6)
        assert final.stderr == pytest.approx(np.std([1.0, 0.2], ddof=1) / np.sqrt(2))
        assert final.mean_cumulative_regret_with_init == pytest.approx(2.6)
        assert final.seed == 7

    def test_single_surface_has_zero_stderr(self):
        _, summary = aggregate([self._run(0, AgentKind.OFUL, [0.3, 0.2])], (2,), seed=0)
        assert summary[0].stderr == 0.0
        assert summary[0].n_surfaces == 1

    def test_rows_sorted_by_agent_then_sigma(self):
        runs = [
            self._run(0, AgentKind.THOMPSON, [0.1]),
            self._run(0, AgentKind.LINUCB, [0.2]),
            self._run(0, AgentKind.X_FIXED, [0.3]),
        ]
        _, summary = aggregate(runs, (1,), seed=0)
        assert [r.agent for r in summary] == [
            AgentKind.LINUCB,
            AgentKind.THOMPSON,
            AgentKind.X_FIXED,
        ]


class TestRunExperiment:
    def test_single_surface_single_agent_reduces_to_run(self):
        cfg = small_config(n_surfaces=1, roster=(AgentKind.X_RANDOM,), horizons=(5,))
        report = run_experiment(cfg)

        surfaces, _, _ = sample_surfaces(cfg, enumerate_arms(cfg.n_treatments), [0])
        surface = surfaces[0].with_noise(NoiseModel(cfg.noise_kind, 1.0))
        run = run_single(
            surface,
            AgentKind.X_RANDOM,
            cfg.hyperparams_for(AgentKind.X_RANDOM, 1.0),
            cfg.horizon,
            run_stream(cfg.root_seed, 0, AgentKind.X_RANDOM, 1.0, Phase.EVALUATE),
            experiment_design(cfg),
        )
        assert len(report.summary) == 1
        assert report.summary[0].mean_cumulative_regret == pytest.approx(run.cumulative_regret)
        assert report.summary[0].stderr == 0.0
        assert [p.mean_pseudo_performance for p in report.curve] == pytest.approx(
            run.pseudo_performance
        )

    def test_roster_order_does_not_change_results(self):
        a = run_experiment(small_config(roster=(AgentKind.X_RANDOM, AgentKind.OFUL)))
        b = run_experiment(small_config(roster=(AgentKind.OFUL, AgentKind.X_RANDOM)))
        assert a.summary == b.summary
        assert a.curve == b.curve

    def test_thread_count_does_not_change_results(self):
        a = run_experiment(small_config(threads=1))
        b = run_experiment(small_config(threads=2))
        assert a.summary == b.summary
        assert a.curve == b.curve

    def test_summary_has_one_row_per_agent_noise_horizon(self):
        report = run_experiment(small_config(noise_sigmas=(1.0, 5.0)))
        assert len(report.summary) == 2 * 2 * 2
        assert len(report.curve) == 2 * 2 * 5
        assert all(row.n_surfaces == 3 for row in report.summary)

    def test_failing_agent_recorded_without_aborting(self):
        cfg = small_config(
            roster=(AgentKind.OFUL, AgentKind.LINUCB),
            per_agent={AgentKind.OFUL: {"ridge_lambda": 0.0}},
        )
        report = run_experiment(cfg)
        assert len(report.failures) == 3
        assert {f.agent for f in report.failures} == {AgentKind.OFUL}
        assert {f.error_type for f in report.failures} == {"ContractViolationError"}
        assert {r.agent for r in report.summary} == {AgentKind.LINUCB}

    def test_degenerate_surfaces_become_failures(self):
        hpm = HpmConfig(
            p_main_active=0.0,
            heredity_2way=(0.0, 0.0, 0.0),
            heredity_3way=(0.0, 0.0, 0.0, 0.0),
            max_resample=3,
        )
        cfg = small_config(n_surfaces=2, hpm=hpm, noise_sigmas=(1.0, 5.0))
        report = run_experiment(cfg)
        assert report.summary == []
        assert len(report.failures) == 2 * 2 * 2
        assert {f.error_type for f in report.failures} == {"DegenerateSurfaceError"}
        assert report.n_rejected_surfaces == 6


class TestTuneSweep:
    def test_tuning_ids_disjoint_from_evaluation(self):
        cfg = small_config(n_surfaces=1000, n_tune_surfaces=1000)
        assert not set(tune_surface_ids(cfg)) & set(range(cfg.n_surfaces))

    def test_single_point_grid_returns_that_point(self):
        result = tune_sweep(small_config(), {AgentKind.X_RANDOM: [{"delta": 90.0}]})
        assert result.best[(AgentKind.X_RANDOM, 1.0)].delta == 90.0
        assert result.best[(AgentKind.X_RANDOM, 1.0)].n_bootstrap == 20

    def test_dominated_radius_not_selected(self):
        cfg = small_config(horizon=20, n_tune_surfaces=5)
        grid = {AgentKind.OFUL: [{"oful_radius": 0.5}, {"oful_radius": 1e6}]}
        result = tune_sweep(cfg, grid)
        assert result.best[(AgentKind.OFUL, 1.0)].oful_radius == 0.5

    def test_ties_go_to_smaller_exploration(self):
        grid = {AgentKind.OFUL: [{"oful_radius": 1e-12}, {"oful_radius": 0.0}]}
        result = tune_sweep(small_config(horizon=10), grid)
        scores = [s.mean_cumulative_regret for s in result.scores]
        assert scores[0] == scores[1]
        assert result.best[(AgentKind.OFUL, 1.0)].oful_radius == 0.0

    def test_selection_is_argmin_of_scores(self):
        cfg = small_config(noise_sigmas=(1.0, 5.0), horizon=8)
        grid = {AgentKind.X_RANDOM: [{"delta": 80.0}, {"delta": 99.0}]}
        result = tune_sweep(cfg, grid)
        assert len(result.scores) == 4
        for sigma in (1.0, 5.0):
            entries = [s for s in result.scores if s.noise_sigma == sigma]
            best = min(entries, key=lambda s: (s.mean_cumulative_regret, s.hyperparams.delta))
            assert result.best[(AgentKind.X_RANDOM, sigma)] == best.hyperparams

    def test_empty_grid_rejected(self):
        with pytest.raises(ContractViolationError):
            tune_sweep(small_config(), {})


def _row(agent, sigma, regret):
    return SummaryRow(
        agent=agent,
        noise_sigma=sigma,
        horizon=10,
        mean_cumulative_regret=regret,
        stderr=0.0,
        n_surfaces=1,
        seed=0,
        mean_cumulative_regret_with_init=regret,
    )


def test_baseline_ratios_against_best_baseline():
    report = ExperimentReport(
        summary=[
            _row(AgentKind.X_RANDOM, 1.0, 2.0),
            _row(AgentKind.X_FIXED, 1.0, 6.0),
            _row(AgentKind.OFUL, 1.0, 4.0),
            _row(AgentKind.LINUCB, 1.0, 5.0),
            _row(AgentKind.X_RANDOM, 5.0, 3.0),
        ]
    )
    ratios = baseline_ratios(report)
    assert ratios == {1.0: {AgentKind.X_RANDOM: 0.5, AgentKind.X_FIXED: 1.5}}


class TestDrawSurfaces:
    def test_valid_draws_match_experiment_surfaces(self):
        cfg = small_config()
        drawn = draw_surfaces(cfg, 5)
        surfaces, _, _ = sample_surfaces(cfg, enumerate_arms(cfg.n_treatments), range(5))
        for (surface, rejected), kept in zip(drawn, surfaces, strict=True):
            if not rejected:
                np.testing.assert_array_equal(surface.theta, kept.theta)

    def test_all_inactive_draws_flagged(self):
        hpm = HpmConfig(
            p_main_active=0.0,
            heredity_2way=(0.0, 0.0, 0.0),
            heredity_3way=(0.0, 0.0, 0.0, 0.0),
        )
        drawn = draw_surfaces(small_config(hpm=hpm), 4)
        assert all(rejected for _, rejected in drawn)

    def test_count_must_be_positive(self):
        with pytest.raises(ContractViolationError):
            draw_surfaces(small_config(), 0)
