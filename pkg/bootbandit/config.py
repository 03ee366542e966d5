"""Configuration loading for experiments.

A config is one or more YAML documents with the sections ``experiment``,
``hpm``, ``agents`` and ``tuned``. Every key has a default, later files
override earlier ones key by key, and problems are collected with the line
they came from before anything runs.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any

import yaml

from bootbandit.arms import MAX_TREATMENTS, n_agent_features
from bootbandit.enums import AgentKind, InactiveRule, NoiseKind
from bootbandit.models import AgentHyperparams, HpmConfig

log = logging.getLogger(__name__)

DEFAULT_ROSTER: tuple[AgentKind, ...] = tuple(AgentKind)


@dataclass
class ConfigIssue:
    """One problem found in a config document."""

    path: str
    message: str
    line: int | None = None
    source: str | None = None

    def __str__(self) -> str:
        where = self.source or "<config>"
        if self.line is not None:
            where = f"{where}:{self.line}"
        return f"{where}: {self.path}: {self.message}"


class ConfigError(ValueError):
    """Raised with every issue found while loading a config."""

    def __init__(self, issues: list[ConfigIssue]) -> None:
        self.issues = issues
        super().__init__("\n".join(str(i) for i in issues))


@dataclass
class ExperimentConfig:
    """Everything a simulation or tuning run needs, with defaults materialized.

    per_agent and tuned hold hyperparameter overrides layered over defaults:
    tuned (by noise sigma) wins over per_agent, which wins over defaults.
    """

    n_treatments: int = 7
    n_surfaces: int = 100
    horizon: int = 300
    horizons: tuple[int, ...] = (50, 100, 300)
    noise_kind: NoiseKind = NoiseKind.LAPLACE
    noise_sigmas: tuple[float, ...] = (1.0, 5.0, 10.0)
    design_runs: int = 32
    root_seed: int = 0
    threads: int = 1
    n_tune_surfaces: int = 50
    hpm: HpmConfig = field(default_factory=HpmConfig)
    roster: tuple[AgentKind, ...] = DEFAULT_ROSTER
    defaults: AgentHyperparams = field(default_factory=AgentHyperparams)
    per_agent: dict[AgentKind, dict[str, Any]] = field(default_factory=dict)
    tuned: dict[float, dict[AgentKind, dict[str, Any]]] = field(default_factory=dict)

    def hyperparams_for(self, kind: AgentKind, sigma: float) -> AgentHyperparams:
        overrides = {
            **self.per_agent.get(kind, {}),
            **self.tuned.get(float(sigma), {}).get(kind, {}),
        }
        return replace(self.defaults, **overrides)

    @property
    def report_horizons(self) -> tuple[int, ...]:
        """Configured horizons that fit in this run, ascending and unique."""
        return tuple(sorted({h for h in self.horizons if h <= self.horizon}))

    def problems(self) -> list[tuple[str, str]]:
        """Return (dotted path, message) pairs for every violated invariant."""
        issues: list[tuple[str, str]] = []
        if not 1 <= self.n_treatments <= MAX_TREATMENTS:
            issues.append(
                ("experiment.n_treatments", f"must lie in [1, {MAX_TREATMENTS}]")
            )
        if self.n_surfaces < 1:
            issues.append(("experiment.n_surfaces", "must be at least 1"))
        if self.horizon < 1:
            issues.append(("experiment.horizon", "must be at least 1"))
        if any(h < 1 for h in self.horizons):
            issues.append(("experiment.horizons", "entries must be at least 1"))
        if not self.noise_sigmas:
            issues.append(("experiment.noise_sigmas", "must list at least one noise level"))
        elif any(not s > 0.0 for s in self.noise_sigmas):
            issues.append(("experiment.noise_sigmas", "entries must be positive"))
        elif len(set(self.noise_sigmas)) != len(self.noise_sigmas):
            issues.append(("experiment.noise_sigmas", "entries must be distinct"))
        if 1 <= self.n_treatments <= MAX_TREATMENTS:
            required = n_agent_features(self.n_treatments)
            full = 2**self.n_treatments
            if self.design_runs < required:
                issues.append(
                    ("experiment.design_runs", f"must be at least {required} for this K")
                )
            elif self.design_runs != full and self.design_runs % 4 != 0:
                issues.append(("experiment.design_runs", "must be a multiple of 4"))
        if not 0 <= self.root_seed < 2**64:
            issues.append(("experiment.root_seed", "must be an unsigned 64-bit integer"))
        if self.threads < 1:
            issues.append(("experiment.threads", "must be at least 1"))
        if self.n_tune_surfaces < 1:
            issues.append(("experiment.n_tune_surfaces", "must be at least 1"))

        issues.extend((f"hpm.{name}", message) for name, message in self.hpm.problems())

        if not self.roster:
            issues.append(("agents.roster", "must name at least one agent"))
        elif len(set(self.roster)) != len(self.roster):
            issues.append(("agents.roster", "agents must not repeat"))
        issues.extend(
            (f"agents.defaults.{name}", message) for name, message in self.defaults.problems()
        )
        for kind, overrides in self.per_agent.items():
            hp = replace(self.defaults, **overrides)
            issues.extend(
                (f"agents.per_agent.{kind.value}.{name}", message)
                for name, message in hp.problems()
                if name in overrides
            )
        for sigma, by_agent in self.tuned.items():
            if sigma not in self.noise_sigmas:
                log.warning("tuned.%s does not match any experiment noise level", sigma)
            for kind in by_agent:
                hp = self.hyperparams_for(kind, sigma)
                issues.extend(
                    (f"tuned.{sigma}.{kind.value}.{name}", message)
                    for name, message in hp.problems()
                    if name in by_agent[kind]
                )
        return issues


class _OptionalFloat:
    """Schema marker for a float that may be null."""


_EXPERIMENT_SCHEMA: dict[str, Any] = {
    "n_treatments": int,
    "n_surfaces": int,
    "horizon": int,
    "horizons": [int],
    "noise_kind": NoiseKind,
    "noise_sigmas": [float],
    "design_runs": int,
    "root_seed": int,
    "threads": int,
    "n_tune_surfaces": int,
}

_HPM_SCHEMA: dict[str, Any] = {
    "p_main_active": float,
    "sigma_main": float,
    "hierarchy_ratios": [float],
    "heredity_2way": [float],
    "heredity_3way": [float],
    "sigma_intercept": float,
    "inactive_value": InactiveRule,
    "inactive_scale": float,
    "reject_threshold": float,
    "max_resample": int,
}

HYPERPARAM_SCHEMA: dict[str, Any] = {
    "n_bootstrap": int,
    "delta": float,
    "ridge_lambda": float,
    "oful_confidence": float,
    "oful_subgaussian": float,
    "oful_norm_bound": float,
    "oful_radius": _OptionalFloat,
    "linucb_alpha": float,
    "ts_v": float,
}

_AGENTS_KEYS = ("roster", "defaults", "per_agent")
_SECTIONS = ("experiment", "hpm", "agents", "tuned")

_INVALID = object()


class _Reader:
    """Converts merged YAML data into typed values, collecting issues."""

    def __init__(self, lines: dict[str, tuple[str | None, int]]) -> None:
        self.lines = lines
        self.issues: list[ConfigIssue] = []

    def issue(self, path: str, message: str) -> None:
        source, line = self._locate(path)
        self.issues.append(ConfigIssue(path=path, message=message, line=line, source=source))

    def _locate(self, path: str) -> tuple[str | None, int | None]:
        parts = path.split("[")[0].split(".")
        while parts:
            key = ".".join(parts)
            if key in self.lines:
                return self.lines[key]
            parts.pop()
        return None, None

    def mapping(self, value: Any, path: str) -> dict[Any, Any]:
        if value is None:
            return {}
        if not isinstance(value, dict):
            self.issue(path, "must be a mapping")
            return {}
        return value

    def convert(self, value: Any, kind: Any, path: str) -> Any:
        if isinstance(kind, list):
            if not isinstance(value, list):
                self.issue(path, "must be a list")
                return _INVALID
            items = [self.convert(v, kind[0], f"{path}[{i}]") for i, v in enumerate(value)]
            return _INVALID if _INVALID in items else tuple(items)
        if kind is _OptionalFloat:
            return None if value is None else self.convert(value, float, path)
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.issue(path, f"must be a number, got {value!r}")
                return _INVALID
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.issue(path, f"must be an integer, got {value!r}")
                return _INVALID
            return value
        if isinstance(kind, type) and issubclass(kind, Enum):
            try:
                return kind(value)
            except ValueError:
                allowed = ", ".join(m.value for m in kind)
                self.issue(path, f"must be one of {allowed}, got {value!r}")
                return _INVALID
        raise TypeError(f"Unsupported schema type {kind!r}")

    def section(self, data: Any, schema: dict[str, Any], path: str) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for key, value in self.mapping(data, path).items():
            key_path = f"{path}.{key}"
            if key not in schema:
                self.issue(key_path, "unknown key")
                continue
            converted = self.convert(value, schema[key], key_path)
            if converted is not _INVALID:
                out[key] = converted
        return out

    def agent_kind(self, value: Any, path: str) -> AgentKind | None:
        converted = self.convert(value, AgentKind, path)
        return None if converted is _INVALID else converted

    def sigma(self, value: Any, path: str) -> float | None:
        converted = self.convert(value, float, path)
        return None if converted is _INVALID else converted


def _line_index(
    node: yaml.Node | None, source: str | None, prefix: str = ""
) -> dict[str, tuple[str | None, int]]:
    """Map dotted key paths to the 1-based line of their key in the document."""
    index: dict[str, tuple[str | None, int]] = {}
    if not isinstance(node, yaml.MappingNode):
        return index
    for key_node, value_node in node.value:
        key = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
        index[key] = (source, key_node.start_mark.line + 1)
        index.update(_line_index(value_node, source, key))
    return index


def deep_merge(base: dict[Any, Any], override: dict[Any, Any]) -> dict[Any, Any]:
    """Merge override into a copy of base, recursing into nested mappings."""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _read_documents(
    texts: Sequence[tuple[str | None, str]],
) -> tuple[dict[str, Any], dict[str, tuple[str | None, int]], list[ConfigIssue]]:
    merged: dict[str, Any] = {}
    lines: dict[str, tuple[str | None, int]] = {}
    issues: list[ConfigIssue] = []
    for source, text in texts:
        try:
            node = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            issues.append(
                ConfigIssue(
                    path="<document>",
                    message=str(getattr(e, "problem", None) or e),
                    line=mark.line + 1 if mark is not None else None,
                    source=source,
                )
            )
            continue
        if data is None:
            continue
        if not isinstance(data, dict):
            issues.append(
                ConfigIssue(path="<document>", message="must be a mapping", line=1, source=source)
            )
            continue
        lines.update(_line_index(node, source))
        merged = deep_merge(merged, data)
    return merged, lines, issues


def _build(data: dict[str, Any], reader: _Reader) -> ExperimentConfig:
    for key in data:
        if key not in _SECTIONS:
            reader.issue(str(key), "unknown section")

    experiment = reader.section(data.get("experiment"), _EXPERIMENT_SCHEMA, "experiment")
    hpm_values = reader.section(data.get("hpm"), _HPM_SCHEMA, "hpm")

    agents = reader.mapping(data.get("agents"), "agents")
    for key in agents:
        if key not in _AGENTS_KEYS:
            reader.issue(f"agents.{key}", "unknown key")

    roster: tuple[AgentKind, ...] = DEFAULT_ROSTER
    if "roster" in agents:
        raw = agents["roster"]
        if not isinstance(raw, list):
            reader.issue("agents.roster", "must be a list")
        else:
            kinds = [reader.agent_kind(v, f"agents.roster[{i}]") for i, v in enumerate(raw)]
            roster = tuple(k for k in kinds if k is not None)

    defaults = reader.section(agents.get("defaults"), HYPERPARAM_SCHEMA, "agents.defaults")

    per_agent: dict[AgentKind, dict[str, Any]] = {}
    for name, overrides in reader.mapping(agents.get("per_agent"), "agents.per_agent").items():
        kind = reader.agent_kind(name, f"agents.per_agent.{name}")
        if kind is not None:
            per_agent[kind] = reader.section(
                overrides, HYPERPARAM_SCHEMA, f"agents.per_agent.{name}"
            )

    tuned: dict[float, dict[AgentKind, dict[str, Any]]] = {}
    for sigma_key, by_agent in reader.mapping(data.get("tuned"), "tuned").items():
        sigma = reader.sigma(sigma_key, f"tuned.{sigma_key}")
        if sigma is None:
            continue
        entry = tuned.setdefault(sigma, {})
        for name, overrides in reader.mapping(by_agent, f"tuned.{sigma_key}").items():
            kind = reader.agent_kind(name, f"tuned.{sigma_key}.{name}")
            if kind is not None:
                entry[kind] = reader.section(
                    overrides, HYPERPARAM_SCHEMA, f"tuned.{sigma_key}.{name}"
                )

    return ExperimentConfig(
        **experiment,
        hpm=HpmConfig(**hpm_values),
        roster=roster,
        defaults=AgentHyperparams(**defaults),
        per_agent=per_agent,
        tuned=tuned,
    )


def parse_config(texts: Sequence[tuple[str | None, str]]) -> ExperimentConfig:
    """Parse, merge and validate (source name, YAML text) pairs in order."""
    data, lines, issues = _read_documents(texts)
    reader = _Reader(lines)
    reader.issues.extend(issues)
    cfg = _build(data, reader)
    if not reader.issues:
        for path, message in cfg.problems():
            reader.issue(path, message)
    if reader.issues:
        raise ConfigError(reader.issues)
    return cfg


def load_config(paths: Sequence[Path]) -> ExperimentConfig:
    """Load and validate one or more config files; later files win."""
    texts: list[tuple[str | None, str]] = []
    for path in paths:
        try:
            texts.append((str(path), path.read_text()))
        except OSError as e:
            raise ConfigError(
                [ConfigIssue(path="<document>", message=f"cannot read: {e}", source=str(path))]
            ) from e
    return parse_config(texts)


def apply_overrides(
    cfg: ExperimentConfig, seed: int | None = None, threads: int | None = None
) -> ExperimentConfig:
    """Command-line overrides for the root seed and thread count."""
    if seed is not None:
        cfg = replace(cfg, root_seed=seed)
    if threads is not None:
        cfg = replace(cfg, threads=threads)
    issues = [ConfigIssue(path=p, message=m) for p, m in cfg.problems()]
    if issues:
        raise ConfigError(issues)
    return cfg


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {_plain(k): _plain(v) for k, v in value.items()}
    return value


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """The effective config as plain YAML-ready data; parsing it gives cfg back."""
    experiment = {
        f.name: _plain(getattr(cfg, f.name)) for f in fields(cfg) if f.name in _EXPERIMENT_SCHEMA
    }
    return {
        "experiment": experiment,
        "hpm": _plain(asdict(cfg.hpm)),
        "agents": {
            "roster": _plain(cfg.roster),
            "defaults": _plain(asdict(cfg.defaults)),
            "per_agent": _plain(cfg.per_agent),
        },
        "tuned": _plain(cfg.tuned),
    }


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def load_grid(path: Path) -> dict[AgentKind, list[dict[str, Any]]]:
    """Load a tuning grid: agent -> hyperparameter -> list of values.

    Returns the cartesian product of each agent's value lists as override dicts,
    in the order the values were written.
    """
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(
            [ConfigIssue(path="<document>", message=f"cannot read: {e}", source=str(path))]
        ) from e
    data, lines, issues = _read_documents([(str(path), text)])
    reader = _Reader(lines)
    reader.issues.extend(issues)

    grid: dict[AgentKind, list[dict[str, Any]]] = {}
    for name, axes in data.items():
        kind = reader.agent_kind(name, str(name))
        axes = reader.mapping(axes, str(name))
        if kind is None:
            continue
        names: list[str] = []
        values: list[list[Any]] = []
        for key, raw in axes.items():
            key_path = f"{name}.{key}"
            if key not in HYPERPARAM_SCHEMA:
                reader.issue(key_path, "unknown hyperparameter")
                continue
            if not isinstance(raw, list) or not raw:
                reader.issue(key_path, "must be a non-empty list of values")
                continue
            converted = [
                reader.convert(v, HYPERPARAM_SCHEMA[key], f"{key_path}[{i}]")
                for i, v in enumerate(raw)
            ]
            if _INVALID in converted:
                continue
            names.append(key)
            values.append(converted)
        if not names:
            reader.issue(str(name), "grid names no hyperparameters")
            continue
        grid[kind] = [dict(zip(names, combo, strict=True)) for combo in itertools.product(*values)]

    if not grid and not reader.issues:
        reader.issue("<document>", "grid is empty")
    if reader.issues:
        raise ConfigError(reader.issues)
    return grid


def tuned_fragment(
    cfg: ExperimentConfig, best: dict[tuple[AgentKind, float], AgentHyperparams]
) -> dict[str, Any]:
    """Config fragment with the selected hyperparameters, loadable by simulate."""
    roster = list(cfg.roster)
    for kind, _sigma in best:
        if kind not in roster:
            roster.append(kind)
    tuned: dict[float, dict[str, Any]] = {}
    for (kind, sigma), hp in sorted(best.items(), key=lambda item: (item[0][1], item[0][0].value)):
        tuned.setdefault(float(sigma), {})[kind.value] = asdict(hp)
    return {"agents": {"roster": _plain(roster)}, "tuned": tuned}
