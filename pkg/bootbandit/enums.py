"""Typed enums for the bandit simulator.

Centralizes all enum types to prevent magic string comparisons throughout the codebase.
All enums inherit from (str, Enum) so they serialize to YAML/CSV as plain strings.
"""

from enum import Enum


class AgentKind(str, Enum):
    """Arm-selection policies."""

    X_RANDOM = "x_random"
    X_FIXED = "x_fixed"
    OFUL = "oful"
    LINUCB = "linucb"
    THOMPSON = "thompson"

    @property
    def is_bootstrap(self) -> bool:
        return self in (AgentKind.X_RANDOM, AgentKind.X_FIXED)


class NoiseKind(str, Enum):
    """Reward noise distributions."""

    LAPLACE = "laplace"
    GAUSSIAN = "gaussian"


class InactiveRule(str, Enum):
    """How coefficients of inactive effects are set."""

    ZERO = "zero"
    SMALL = "small"


class Phase(str, Enum):
    """Experiment phase; keeps tuning and evaluation surfaces disjoint."""

    EVALUATE = "evaluate"
    TUNE = "tune"


class OutputFormat(str, Enum):
    """Output format for CLI commands."""

    JSON = "json"
    TEXT = "text"
