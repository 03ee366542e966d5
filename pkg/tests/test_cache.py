"""Tests for the SQLite run cache."""

import sqlite3
from dataclasses import replace

import pytest
from conftest import valid_surface

from bootbandit.cache import CACHE_DIRNAME, RunCache, task_fingerprint
from bootbandit.enums import AgentKind, Phase
from bootbandit.models import AgentHyperparams, NoiseModel
from bootbandit.simulation import RunTask, execute_tasks, run_single


@pytest.fixture
def task(arms3, factorial3) -> RunTask:
    return RunTask(
        surface=valid_surface(0, arms3, sigma=1.0),
        kind=AgentKind.LINUCB,
        hp=AgentHyperparams(),
        horizon=6,
        seed=3,
        phase=Phase.EVALUATE,
        design=factorial3,
    )


@pytest.fixture
def cache(temp_dir):
    run_cache = RunCache.for_output(temp_dir)
    yield run_cache
    run_cache.close()


def _run(task: RunTask):
    return run_single(task.surface, task.kind, task.hp, task.horizon, task.stream, task.design)


def test_cache_lives_under_output_dir(temp_dir):
    run_cache = RunCache.for_output(temp_dir)
    try:
        assert (temp_dir / CACHE_DIRNAME / "cache.sqlite").exists()
    finally:
        run_cache.close()


def test_miss_returns_none(cache, task):
    assert cache.get(task) is None


def test_round_trip(cache, task):
    result = _run(task)
    cache.put_many([(task, result)])
    cached = cache.get(task)
    assert cached == result
    assert cached.agent is AgentKind.LINUCB
    assert cache.stats()["run_count"] == 1


def test_put_many_stores_every_result(cache, task):
    other = replace(task, seed=4)
    cache.put_many([(task, _run(task)), (other, _run(other))])
    assert cache.stats()["run_count"] == 2
    assert cache.get(other) == _run(other)


def test_version_mismatch_clears_cache(temp_dir, task):
    run_cache = RunCache.for_output(temp_dir)
    run_cache.put_many([(task, _run(task))])
    db_path = run_cache.db_path
    run_cache.close()

    db = sqlite3.connect(db_path)
    db.execute("UPDATE cache_meta SET value = '0' WHERE key = 'version'")
    db.commit()
    db.close()

    reopened = RunCache.for_output(temp_dir)
    try:
        assert reopened.get(task) is None
        assert reopened.stats()["run_count"] == 0
    finally:
        reopened.close()


class TestFingerprint:
    """Any input that changes the run must change the key."""

    def test_stable(self, task):
        assert task_fingerprint(task) == task_fingerprint(replace(task))

    def test_hyperparams(self, task):
        changed = replace(task, hp=AgentHyperparams(linucb_alpha=2.0))
        assert task_fingerprint(changed) != task_fingerprint(task)

    def test_noise_level(self, task):
        changed = replace(task, surface=task.surface.with_noise(NoiseModel(sigma_eps=5.0)))
        assert task_fingerprint(changed) != task_fingerprint(task)

    def test_seed_phase_and_agent(self, task):
        keys = {
            task_fingerprint(task),
            task_fingerprint(replace(task, seed=4)),
            task_fingerprint(replace(task, phase=Phase.TUNE)),
            task_fingerprint(replace(task, kind=AgentKind.OFUL)),
            task_fingerprint(replace(task, horizon=7)),
        }
        assert len(keys) == 5


def test_execute_tasks_uses_cache(cache, task):
    first = execute_tasks([task], run_cache=cache)
    assert cache.stats()["run_count"] == 1
    second = execute_tasks([task], run_cache=cache)
    assert second == first
