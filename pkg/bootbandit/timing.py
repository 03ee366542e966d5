"""Opt-in wall-clock instrumentation for experiment phases.

Phases accumulate elapsed seconds and call counts; counters accumulate plain
integers (surfaces rejected, runs failed, cache hits). Nothing is recorded until
enable() is called, which also schedules the report for interpreter exit.
"""

from __future__ import annotations

import atexit
import time
from collections import Counter
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field

from rich.console import Console
from rich.table import Table


@dataclass
class PhaseTiming:
    seconds: float = 0.0
    calls: int = 0

    @property
    def mean_ms(self) -> float:
        return self.seconds / self.calls * 1000.0 if self.calls else 0.0


@dataclass
class _Recorder:
    enabled: bool = False
    phases: dict[str, PhaseTiming] = field(default_factory=dict)
    counters: Counter[str] = field(default_factory=Counter)
    console: Console | None = None
    registered: bool = False


_recorder = _Recorder()


def enable(console: Console | None = None) -> None:
    _recorder.enabled = True
    _recorder.phases.clear()
    _recorder.counters.clear()
    _recorder.console = console
    if not _recorder.registered:
        atexit.register(_report_at_exit)
        _recorder.registered = True


def disable() -> None:
    _recorder.enabled = False


@contextmanager
def timed(phase: str) -> Iterator[None]:
    """Add the wall-clock time of the block to a phase."""
    if not _recorder.enabled:
        yield
        return
    start = time.perf_counter()
    try:
        yield
    finally:
        record(phase, time.perf_counter() - start)


def record(phase: str, elapsed: float) -> None:
    if not _recorder.enabled:
        return
    entry = _recorder.phases.setdefault(phase, PhaseTiming())
    entry.seconds += elapsed
    entry.calls += 1


def record_count(counter: str, amount: int) -> None:
    if _recorder.enabled:
        _recorder.counters[counter] += amount


def phases() -> dict[str, PhaseTiming]:
    """Recorded phases, slowest first."""
    ranked = sorted(_recorder.phases.items(), key=lambda item: item[1].seconds, reverse=True)
    return dict(ranked)


def counters() -> dict[str, int]:
    return dict(sorted(_recorder.counters.items()))


def report_table() -> Table:
    table = Table(title="Timing breakdown")
    table.add_column("phase", style="cyan")
    table.add_column("seconds", justify="right")
    table.add_column("calls", justify="right")
    table.add_column("mean ms", justify="right")
    for name, entry in phases().items():
        table.add_row(name, f"{entry.seconds:.3f}", f"{entry.calls:,}", f"{entry.mean_ms:.2f}")
    if _recorder.counters:
        table.add_section()
        for name, value in counters().items():
            table.add_row(name, "", f"{value:,}", "")
    return table


def _report_at_exit() -> None:
    if not _recorder.enabled or not (_recorder.phases or _recorder.counters):
        return
    (_recorder.console or Console(stderr=True)).print(report_table())
