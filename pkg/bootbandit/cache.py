"""Run-level caching for simulation results.

A run is a pure function of its task, so results are stored under a hash of
everything in the task and replayed on later invocations that share an output
directory. The whole cache is dropped when the schema or package version moves.
"""

from __future__ import annotations

import hashlib
import sqlite3
from collections.abc import Iterable
from dataclasses import asdict
from pathlib import Path
from typing import TYPE_CHECKING, Any

import msgpack  # type: ignore[import-untyped]

from bootbandit import __version__
from bootbandit.enums import AgentKind
from bootbandit.models import RunResult

if TYPE_CHECKING:
    from bootbandit.simulation import RunTask

CACHE_VERSION = "1"
CACHE_DIRNAME = ".bootbandit"
CACHE_FILENAME = "cache.sqlite"

_SCHEMA = """
    CREATE TABLE IF NOT EXISTS cache_meta (
        key TEXT PRIMARY KEY,
        value TEXT
    );
    CREATE TABLE IF NOT EXISTS run_cache (
        fingerprint TEXT PRIMARY KEY,
        agent TEXT,
        result BLOB
    );
"""


def task_fingerprint(task: RunTask) -> str:
    """SHA-256 over every input that determines a run's output."""
    payload = {
        "version": __version__,
        "n_treatments": task.surface.n_treatments,
        "design": task.design.levels_matrix().tobytes(),
        "theta": task.surface.theta.tobytes(),
        "agent": task.kind.value,
        "hyperparams": asdict(task.hp),
        "horizon": task.horizon,
        "noise": [task.surface.noise.kind.value, task.surface.noise.sigma_eps],
        "surface_id": task.surface.surface_id,
        "seed": task.seed,
        "phase": task.phase.value,
    }
    return hashlib.sha256(msgpack.packb(payload)).hexdigest()


def _pack(result: RunResult) -> bytes:
    data = asdict(result)
    data["agent"] = result.agent.value
    return msgpack.packb(data)  # type: ignore[no-any-return]


def _unpack(blob: bytes) -> RunResult:
    data: dict[str, Any] = msgpack.unpackb(blob)
    data["agent"] = AgentKind(data["agent"])
    return RunResult(**data)


class RunCache:
    """SQLite-backed cache of RunResults keyed by task fingerprint."""

    def __init__(self, cache_dir: Path) -> None:
        cache_dir.mkdir(parents=True, exist_ok=True)
        self.cache_dir = cache_dir
        self.db_path = cache_dir / CACHE_FILENAME
        self.db = sqlite3.connect(self.db_path, check_same_thread=False)
        self.db.execute("PRAGMA journal_mode=WAL")
        self.db.execute("PRAGMA synchronous=NORMAL")
        self.db.executescript(_SCHEMA)
        self._check_versions()

    @classmethod
    def for_output(cls, out_dir: Path) -> RunCache:
        return cls(out_dir / CACHE_DIRNAME)

    def __enter__(self) -> RunCache:
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def _check_versions(self) -> None:
        expected = {"version": CACHE_VERSION, "package_version": __version__}
        stored = dict(self.db.execute("SELECT key, value FROM cache_meta").fetchall())
        if stored == expected:
            return
        with self.db:
            self.db.execute("DELETE FROM run_cache")
            self.db.execute("DELETE FROM cache_meta")
            self.db.executemany(
                "INSERT INTO cache_meta (key, value) VALUES (?, ?)", expected.items()
            )

    def get(self, task: RunTask) -> RunResult | None:
        row = self.db.execute(
            "SELECT result FROM run_cache WHERE fingerprint = ?", (task_fingerprint(task),)
        ).fetchone()
        return None if row is None else _unpack(row[0])

    def put_many(self, entries: Iterable[tuple[RunTask, RunResult]]) -> None:
        """Store results in one transaction."""
        rows = [
            (task_fingerprint(task), result.agent.value, _pack(result))
            for task, result in entries
        ]
        with self.db:
            self.db.executemany(
                "INSERT OR REPLACE INTO run_cache (fingerprint, agent, result) VALUES (?, ?, ?)",
                rows,
            )

    def stats(self) -> dict[str, int]:
        count = self.db.execute("SELECT COUNT(*) FROM run_cache").fetchone()[0]
        size = self.db_path.stat().st_size if self.db_path.exists() else 0
        return {"run_count": count, "size_bytes": size}

    def close(self) -> None:
        self.db.close()
