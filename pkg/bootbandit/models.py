"""Data models for the bandit simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from bootbandit.enums import AgentKind, InactiveRule, NoiseKind

Mat = NDArray[np.float64]
Vec = NDArray[np.float64]


class ContractViolationError(ValueError):
    """Raised when an operation is called outside its preconditions."""


class DesignSearchError(RuntimeError):
    """Raised when no full-rank initial design is found within the search budget."""

    def __init__(self, best_rank: int, required_rank: int, candidates_tried: int) -> None:
        self.best_rank = best_rank
        self.required_rank = required_rank
        self.candidates_tried = candidates_tried
        super().__init__(
            f"No full-rank design after {candidates_tried} candidates "
            f"(best rank {best_rank} of {required_rank})"
        )


class DegenerateSurfaceError(RuntimeError):
    """Raised when surface resampling cannot produce a positive optimum."""

    def __init__(self, attempts: int) -> None:
        self.attempts = attempts
        super().__init__(f"No surface with a positive optimum after {attempts} attempts")


__all__ = [
    "Mat",
    "Vec",
    "ContractViolationError",
    "DesignSearchError",
    "DegenerateSurfaceError",
    "Arm",
    "ArmSet",
    "InitialDesign",
    "ValidationReport",
    "HpmConfig",
    "NoiseModel",
    "ResponseSurface",
    "AgentHyperparams",
    "History",
    "RunResult",
    "RunFailure",
]


@dataclass(frozen=True)
class Arm:
    """A treatment combination under +/-1 factorial coding."""

    levels: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.levels:
            raise ContractViolationError("Arm needs at least one treatment")
        if any(level not in (-1, 1) for level in self.levels):
            raise ContractViolationError(f"Arm levels must be +/-1, got {self.levels}")

    @property
    def n_treatments(self) -> int:
        return len(self.levels)


@dataclass(frozen=True, eq=False)
class ArmSet:
    """All arms of the combinatorial space with both feature expansions.

    Row m of agent_matrix / true_matrix is the expansion of arms[m].
    """

    arms: tuple[Arm, ...]
    agent_matrix: Mat
    true_matrix: Mat
    _index: dict[tuple[int, ...], int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self._index:
            self._index.update({arm.levels: i for i, arm in enumerate(self.arms)})

    def __len__(self) -> int:
        return len(self.arms)

    @property
    def n_treatments(self) -> int:
        return self.arms[0].n_treatments

    def index_of(self, arm: Arm) -> int:
        """Position of an arm in the canonical ordering."""
        try:
            return self._index[arm.levels]
        except KeyError:
            raise ContractViolationError(f"Arm {arm.levels} is not in this arm set") from None


@dataclass(frozen=True, eq=False)
class InitialDesign:
    """Balanced two-level design used to seed every agent."""

    runs: tuple[Arm, ...]
    model_matrix: Mat

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    def levels_matrix(self) -> NDArray[np.int64]:
        """Runs as an integer +/-1 matrix, one run per row."""
        return np.array([arm.levels for arm in self.runs], dtype=np.int64)


@dataclass
class ValidationReport:
    """Balance, orthogonality and rank diagnostics for an initial design."""

    n_runs: int
    n_treatments: int
    balance_residuals: list[float]
    max_main_correlation: float
    rank: int
    required_rank: int
    duplicated_columns: list[tuple[int, int]] = field(default_factory=list)

    @property
    def balanced(self) -> bool:
        return all(r == 0.0 for r in self.balance_residuals)

    @property
    def orthogonal(self) -> bool:
        return self.max_main_correlation == 0.0

    @property
    def full_rank(self) -> bool:
        return self.rank == self.required_rank

    @property
    def passed(self) -> bool:
        return self.balanced and self.orthogonal and self.full_rank


@dataclass
class HpmConfig:
    """Parameters of the hierarchical probability meta-model.

    heredity_2way is (p_both, p_one, p_none); heredity_3way is indexed by the
    number of active parent main effects, 0 through 3.
    """

    p_main_active: float = 0.41
    sigma_main: float = 10.0
    hierarchy_ratios: tuple[float, float] = (1.0, 1.0)
    heredity_2way: tuple[float, float, float] = (0.33, 0.045, 0.0048)
    heredity_3way: tuple[float, float, float, float] = (0.001, 0.0048, 0.045, 0.33)
    sigma_intercept: float = 0.0
    inactive_value: InactiveRule = InactiveRule.ZERO
    inactive_scale: float = 0.1
    reject_threshold: float = 1e-6
    max_resample: int = 1000

    def problems(self) -> list[tuple[str, str]]:
        """Return (field, message) pairs for every violated invariant."""
        issues: list[tuple[str, str]] = []
        if not 0.0 <= self.p_main_active <= 1.0:
            issues.append(("p_main_active", "must be a probability in [0, 1]"))
        if not self.sigma_main > 0.0:
            issues.append(("sigma_main", "must be positive"))
        if len(self.hierarchy_ratios) != 2:
            issues.append(("hierarchy_ratios", "must have two entries (r2, r3)"))
        elif any(not 0.0 < r <= 1.0 for r in self.hierarchy_ratios):
            issues.append(("hierarchy_ratios", "entries must lie in (0, 1]"))
        if len(self.heredity_2way) != 3:
            issues.append(("heredity_2way", "must have three entries (p_both, p_one, p_none)"))
        elif any(not 0.0 <= p <= 1.0 for p in self.heredity_2way):
            issues.append(("heredity_2way", "entries must be probabilities"))
        if len(self.heredity_3way) != 4:
            issues.append(("heredity_3way", "must have four entries (0..3 active parents)"))
        elif any(not 0.0 <= p <= 1.0 for p in self.heredity_3way):
            issues.append(("heredity_3way", "entries must be probabilities"))
        if not self.sigma_intercept >= 0.0:
            issues.append(("sigma_intercept", "must be non-negative"))
        if not self.inactive_scale >= 0.0:
            issues.append(("inactive_scale", "must be non-negative"))
        if not self.reject_threshold >= 0.0:
            issues.append(("reject_threshold", "must be non-negative"))
        if self.max_resample < 1:
            issues.append(("max_resample", "must be at least 1"))
        return issues

    def check(self) -> None:
        issues = self.problems()
        if issues:
            raise ContractViolationError(
                "; ".join(f"hpm.{name}: {message}" for name, message in issues)
            )


@dataclass(frozen=True)
class NoiseModel:
    """Additive reward noise with standard deviation sigma_eps."""

    kind: NoiseKind = NoiseKind.LAPLACE
    sigma_eps: float = 1.0

    def __post_init__(self) -> None:
        if not (self.sigma_eps >= 0.0 and math.isfinite(self.sigma_eps)):
            raise ContractViolationError(f"sigma_eps must be >= 0, got {self.sigma_eps}")

    @property
    def laplace_scale(self) -> float:
        """Laplace b giving Var = sigma_eps**2."""
        return self.sigma_eps / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ResponseSurface:
    """Ground-truth coefficients in canonical true-feature order plus noise."""

    n_treatments: int
    theta: Vec
    active_mask: NDArray[np.bool_]
    noise: NoiseModel = field(default_factory=NoiseModel)
    surface_id: int = 0

    def with_noise(self, noise: NoiseModel) -> ResponseSurface:
        return ResponseSurface(
            n_treatments=self.n_treatments,
            theta=self.theta,
            active_mask=self.active_mask,
            noise=noise,
            surface_id=self.surface_id,
        )


@dataclass(frozen=True)
class AgentHyperparams:
    """Per-algorithm tunables.

    n_bootstrap and delta drive the bootstrap agents; ridge_lambda is shared by
    the three baselines. oful_radius, when set, replaces the computed radius.
    """

    n_bootstrap: int = 100
    delta: float = 95.0
    ridge_lambda: float = 1.0
    oful_confidence: float = 0.05
    oful_subgaussian: float = 1.0
    oful_norm_bound: float = 1.0
    oful_radius: float | None = None
    linucb_alpha: float = 1.0
    ts_v: float = 1.0

    def problems(self) -> list[tuple[str, str]]:
        issues: list[tuple[str, str]] = []
        if self.n_bootstrap < 1:
            issues.append(("n_bootstrap", "must be at least 1"))
        if not 0.0 < self.delta <= 100.0:
            issues.append(("delta", "must lie in (0, 100]"))
        if not self.ridge_lambda >= 0.0:
            issues.append(("ridge_lambda", "must be non-negative"))
        if not 0.0 < self.oful_confidence < 1.0:
            issues.append(("oful_confidence", "must lie in (0, 1)"))
        if not self.oful_subgaussian >= 0.0:
            issues.append(("oful_subgaussian", "must be non-negative"))
        if not self.oful_norm_bound >= 0.0:
            issues.append(("oful_norm_bound", "must be non-negative"))
        if self.oful_radius is not None and not self.oful_radius >= 0.0:
            issues.append(("oful_radius", "must be non-negative"))
        if not self.linucb_alpha >= 0.0:
            issues.append(("linucb_alpha", "must be non-negative"))
        if not self.ts_v >= 0.0:
            issues.append(("ts_v", "must be non-negative"))
        return issues

    def exploration_level(self, kind: AgentKind) -> float:
        """The scalar that controls how much the given agent explores."""
        if kind.is_bootstrap:
            return self.delta
        if kind == AgentKind.OFUL:
            return self.oful_radius if self.oful_radius is not None else self.oful_subgaussian
        if kind == AgentKind.LINUCB:
            return self.linucb_alpha
        return self.ts_v


@dataclass
class History:
    """Pulled arms (agent-feature rows) and their rewards."""

    X: Mat
    R: Vec

    def __post_init__(self) -> None:
        if self.X.ndim != 2 or self.R.ndim != 1 or self.X.shape[0] != self.R.shape[0]:
            raise ContractViolationError(
                f"History shapes disagree: X {self.X.shape}, R {self.R.shape}"
            )

    @property
    def n_rows(self) -> int:
        return int(self.R.shape[0])

    def append(self, row: Vec, reward: float) -> None:
        self.X = np.vstack([self.X, row[np.newaxis, :]])
        self.R = np.append(self.R, reward)


@dataclass
class RunResult:
    """Trajectory of one agent on one surface at one noise level."""

    surface_id: int
    agent: AgentKind
    noise_sigma: float
    seed: int
    chosen: list[int] = field(default_factory=list)
    pseudo_performance: list[float] = field(default_factory=list)
    regret: list[float] = field(default_factory=list)
    initial_regret: float = 0.0

    @property
    def horizon(self) -> int:
        return len(self.chosen)

    @property
    def cumulative_regret(self) -> float:
        return float(np.sum(self.regret)) if self.regret else 0.0

    def cumulative_regret_at(self, horizon: int) -> float:
        return float(np.sum(self.regret[:horizon])) if horizon > 0 else 0.0


@dataclass
class RunFailure:
    """A run that raised instead of completing."""

    surface_id: int
    agent: AgentKind
    noise_sigma: float
    error_type: str
    message: str
