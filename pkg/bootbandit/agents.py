"""Arm-selection policies behind one agent contract.

The two bootstrap agents refit from the full history every trial. The three
baselines keep a Gram matrix and response cross-product updated by rank-one
steps. Every argmax breaks ties toward the lowest arm index.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from bootbandit.arms import expand_agent_features
from bootbandit.enums import AgentKind
from bootbandit.models import (
    AgentHyperparams,
    Arm,
    ArmSet,
    ContractViolationError,
    History,
    InitialDesign,
    Mat,
    Vec,
)
from bootbandit.numerics import (
    RngStream,
    least_squares,
    least_squares_weighted_batch,
    lower_cholesky,
    percentile_rows,
    sample_indices_with_replacement,
)

log = logging.getLogger(__name__)

Resampler = Callable[[RngStream, int], NDArray[np.int64]]


def identity_resample(rng: RngStream, n: int) -> NDArray[np.int64]:
    """Resampler that returns every index once; turns bootstrap exploration off."""
    return np.arange(n, dtype=np.int64)


@dataclass
class AgentState:
    """Mutable per-run agent: history plus baseline sufficient statistics."""

    kind: AgentKind
    hp: AgentHyperparams
    history: History
    gram: Mat
    xty: Vec

    @property
    def n_features(self) -> int:
        return int(self.history.X.shape[1])


def init_agent(
    kind: AgentKind,
    design: InitialDesign,
    rewards: Vec,
    hp: AgentHyperparams,
) -> AgentState:
    """Seed an agent with the design's model matrix and observed rewards."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim != 1 or rewards.shape[0] == 0 or rewards.shape[0] != design.n_runs:
        raise ContractViolationError(
            f"Design has {design.n_runs} runs but {rewards.shape[0]} rewards were given"
        )
    problems = hp.problems()
    if problems:
        raise ContractViolationError("; ".join(f"{k}: {m}" for k, m in problems))
    X = design.model_matrix.copy()
    return AgentState(
        kind=kind,
        hp=hp,
        history=History(X=X, R=rewards.copy()),
        gram=X.T @ X,
        xty=X.T @ rewards,
    )


def _argmax_arm(scores: Vec, arms: ArmSet) -> Arm:
    return arms.arms[int(np.argmax(scores))]


def _require_rows(state: AgentState) -> None:
    if state.history.n_rows < state.n_features:
        raise ContractViolationError(
            f"Bootstrap agents need at least {state.n_features} history rows, "
            f"have {state.history.n_rows}"
        )


def xrandom_bootstrap_coefficients(
    state: AgentState,
    rng: RngStream,
    resampler: Resampler = sample_indices_with_replacement,
) -> Mat:
    """B pairs-bootstrap coefficient vectors, one per row.

    Replicate b resamples the history rows with replacement and refits by
    least squares. Each resample is drawn with its own call, in replicate order.
    """
    _require_rows(state)
    X, R = state.history.X, state.history.R
    t = state.history.n_rows
    weights = np.zeros((state.hp.n_bootstrap, t))
    for b in range(state.hp.n_bootstrap):
        weights[b] = np.bincount(resampler(rng, t), minlength=t)
    return least_squares_weighted_batch(X, R, weights)


def xfixed_bootstrap_coefficients(
    state: AgentState,
    rng: RngStream,
    resampler: Resampler = sample_indices_with_replacement,
) -> Mat:
    """B residual-bootstrap coefficient vectors, one per row.

    Fits beta* once, then refits fitted values plus resampled residuals on the
    fixed design.
    """
    _require_rows(state)
    X, R = state.history.X, state.history.R
    t = state.history.n_rows
    beta_star = least_squares(X, R)
    fitted = X @ beta_star
    residuals = R - fitted
    projector = np.linalg.pinv(X)
    errors = np.stack([residuals[resampler(rng, t)] for _ in range(state.hp.n_bootstrap)])
    return (fitted[np.newaxis, :] + errors) @ projector.T


def bootstrap_upper_bounds(coefficients: Mat, arms: ArmSet, delta: float) -> Vec:
    """delta-th percentile over replicates of every arm's predicted reward."""
    scores = arms.agent_matrix @ coefficients.T
    return percentile_rows(scores, delta)


def xrandom_select(
    state: AgentState,
    arms: ArmSet,
    rng: RngStream,
    resampler: Resampler = sample_indices_with_replacement,
) -> Arm:
    coefficients = xrandom_bootstrap_coefficients(state, rng, resampler)
    return _argmax_arm(bootstrap_upper_bounds(coefficients, arms, state.hp.delta), arms)


def xfixed_select(
    state: AgentState,
    arms: ArmSet,
    rng: RngStream,
    resampler: Resampler = sample_indices_with_replacement,
) -> Arm:
    coefficients = xfixed_bootstrap_coefficients(state, rng, resampler)
    return _argmax_arm(bootstrap_upper_bounds(coefficients, arms, state.hp.delta), arms)


def _regularized(state: AgentState) -> Mat:
    return state.gram + state.hp.ridge_lambda * np.eye(state.n_features)


def ridge_estimate(state: AgentState, strict: bool = False) -> tuple[Vec, Mat]:
    """Regularized estimate and inverse of V = X'X + lambda I.

    With lambda = 0 and a singular Gram matrix the minimum-norm least-squares
    estimate and a pseudo-inverse are used, unless strict is set.
    """
    V = _regularized(state)
    try:
        factor = scipy.linalg.cho_factor(V, lower=True)
    except np.linalg.LinAlgError as e:
        if strict or state.hp.ridge_lambda > 0.0:
            raise ContractViolationError(f"V is not positive definite: {e}") from e
        return least_squares(state.history.X, state.history.R), np.linalg.pinv(V)
    theta = scipy.linalg.cho_solve(factor, state.xty)
    V_inv = scipy.linalg.cho_solve(factor, np.eye(state.n_features))
    return theta, V_inv


def confidence_widths(arms: ArmSet, V_inv: Mat) -> Vec:
    """sqrt(u' V^-1 u) for every arm feature row u."""
    U = arms.agent_matrix
    quad = np.einsum("mi,ij,mj->m", U, V_inv, U)
    return np.sqrt(np.maximum(quad, 0.0))


def oful_radius(state: AgentState) -> float:
    """Confidence-ellipsoid radius for OFUL.

    R * sqrt(2 log(det(V)^1/2 det(lambda I)^-1/2 / confidence)) + sqrt(lambda) S,
    with R the sub-Gaussian constant and S the bound on ||theta||. A configured
    oful_radius replaces the whole expression.
    """
    hp = state.hp
    if hp.oful_radius is not None:
        return hp.oful_radius
    if hp.ridge_lambda <= 0.0:
        raise ContractViolationError("OFUL's computed radius needs ridge_lambda > 0")
    _, logdet = np.linalg.slogdet(_regularized(state))
    p = state.n_features
    log_term = 0.5 * logdet - 0.5 * p * math.log(hp.ridge_lambda) - math.log(hp.oful_confidence)
    return hp.oful_subgaussian * math.sqrt(2.0 * max(log_term, 0.0)) + math.sqrt(
        hp.ridge_lambda
    ) * hp.oful_norm_bound


def oful_select(state: AgentState, arms: ArmSet) -> Arm:
    theta, V_inv = ridge_estimate(state)
    radius = oful_radius(state)
    scores = arms.agent_matrix @ theta
    if radius > 0.0:
        scores = scores + radius * confidence_widths(arms, V_inv)
    return _argmax_arm(scores, arms)


def linucb_select(state: AgentState, arms: ArmSet) -> Arm:
    theta, A_inv = ridge_estimate(state)
    scores = arms.agent_matrix @ theta
    if state.hp.linucb_alpha > 0.0:
        scores = scores + state.hp.linucb_alpha * confidence_widths(arms, A_inv)
    return _argmax_arm(scores, arms)


def thompson_select(state: AgentState, arms: ArmSet, rng: RngStream) -> Arm:
    """Greedy arm under one draw from Normal(theta_hat, v^2 V^-1)."""
    theta, V_inv = ridge_estimate(state, strict=True)
    factor = lower_cholesky(V_inv)
    z = rng.standard_normal(state.n_features)
    sampled = theta + state.hp.ts_v * (factor @ z)
    return _argmax_arm(arms.agent_matrix @ sampled, arms)


def select(state: AgentState, arms: ArmSet, rng: RngStream) -> Arm:
    """Dispatch to the policy named by state.kind."""
    if state.kind == AgentKind.X_RANDOM:
        return xrandom_select(state, arms, rng)
    if state.kind == AgentKind.X_FIXED:
        return xfixed_select(state, arms, rng)
    if state.kind == AgentKind.OFUL:
        return oful_select(state, arms)
    if state.kind == AgentKind.LINUCB:
        return linucb_select(state, arms)
    return thompson_select(state, arms, rng)


def update(state: AgentState, arm: Arm, reward: float) -> AgentState:
    """Append one pull to the history and apply the rank-one Gram update."""
    row = expand_agent_features(arm)
    if row.shape[0] != state.n_features:
        raise ContractViolationError(
            f"Arm expands to {row.shape[0]} features, agent expects {state.n_features}"
        )
    state.history.append(row, reward)
    state.gram += np.outer(row, row)
    state.xty += reward * row
    return state
