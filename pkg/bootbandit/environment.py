"""Hierarchical probability meta-model surfaces and noisy rewards.

A surface is sampled ancestrally through the Bayesian network of effect
activity: main effects first, then two-way interactions conditioned on how
many parents are active, then three-way interactions likewise.
"""

from __future__ import annotations

import logging
from math import comb

import numpy as np
from numpy.typing import NDArray

from bootbandit.arms import expand_true_features, feature_terms
from bootbandit.enums import InactiveRule, NoiseKind
from bootbandit.models import (
    Arm,
    ArmSet,
    ContractViolationError,
    DegenerateSurfaceError,
    HpmConfig,
    NoiseModel,
    ResponseSurface,
    Vec,
)
from bootbandit.numerics import RngStream, sample_gaussian, sample_laplace
from bootbandit.results import SurfaceSummary

log = logging.getLogger(__name__)


def _parent_counts(
    n_treatments: int, order: int, main_active: NDArray[np.bool_]
) -> NDArray[np.int64]:
    terms = [t for t in feature_terms(n_treatments, order) if len(t) == order]
    return np.array([int(main_active[list(t)].sum()) for t in terms], dtype=np.int64)


def _draw_tier(
    rng: RngStream,
    probabilities: NDArray[np.float64],
    sigma: float,
    cfg: HpmConfig,
) -> tuple[Vec, NDArray[np.bool_]]:
    n = probabilities.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros(0, dtype=bool)
    active = rng.uniform(n) < probabilities
    draws = sigma * rng.standard_normal(n)
    if cfg.inactive_value == InactiveRule.SMALL:
        values = np.where(active, draws, cfg.inactive_scale * draws)
    else:
        values = np.where(active, draws, 0.0)
    return values, active


def sample_surface(
    rng: RngStream,
    cfg: HpmConfig,
    n_treatments: int = 7,
    noise: NoiseModel | None = None,
    surface_id: int = 0,
) -> ResponseSurface:
    """Draw one response surface from the meta-model."""
    cfg.check()
    r2, r3 = cfg.hierarchy_ratios

    main_probs = np.full(n_treatments, cfg.p_main_active)
    mains, main_active = _draw_tier(rng, main_probs, cfg.sigma_main, cfg)

    p_both, p_one, p_none = cfg.heredity_2way
    by_count_2 = np.array([p_none, p_one, p_both])
    pair_probs = by_count_2[_parent_counts(n_treatments, 2, main_active)]
    pairs, pair_active = _draw_tier(rng, pair_probs, r2 * cfg.sigma_main, cfg)

    by_count_3 = np.array(cfg.heredity_3way)
    triple_probs = by_count_3[_parent_counts(n_treatments, 3, main_active)]
    triples, triple_active = _draw_tier(rng, triple_probs, r3 * cfg.sigma_main, cfg)

    intercept = 0.0
    if cfg.sigma_intercept > 0.0:
        intercept = sample_gaussian(rng, cfg.sigma_intercept)

    theta = np.concatenate([[intercept], mains, pairs, triples])
    active = np.concatenate([[cfg.sigma_intercept > 0.0], main_active, pair_active, triple_active])
    return ResponseSurface(
        n_treatments=n_treatments,
        theta=theta,
        active_mask=active,
        noise=noise or NoiseModel(),
        surface_id=surface_id,
    )


def expected_reward(surface: ResponseSurface, arm: Arm) -> float:
    """Noise-free reward of an arm."""
    if arm.n_treatments != surface.n_treatments:
        raise ContractViolationError(
            f"Arm has {arm.n_treatments} treatments, surface has {surface.n_treatments}"
        )
    return float(surface.theta @ expand_true_features(arm))


def expected_rewards(surface: ResponseSurface, arms: ArmSet) -> Vec:
    """Noise-free reward of every arm, in arm-set order."""
    if arms.n_treatments != surface.n_treatments:
        raise ContractViolationError(
            f"Arm set has {arms.n_treatments} treatments, surface has {surface.n_treatments}"
        )
    return arms.true_matrix @ surface.theta


def draw_noise(noise: NoiseModel, rng: RngStream) -> float:
    if noise.sigma_eps == 0.0:
        return 0.0
    if noise.kind == NoiseKind.LAPLACE:
        return sample_laplace(rng, noise.laplace_scale)
    return sample_gaussian(rng, noise.sigma_eps)


def observe_reward(surface: ResponseSurface, arm: Arm, rng: RngStream) -> float:
    """Expected reward plus one noise draw from the run's stream."""
    return expected_reward(surface, arm) + draw_noise(surface.noise, rng)


def optimal_arm(surface: ResponseSurface, arms: ArmSet) -> tuple[Arm, float]:
    """Best arm by expected reward; ties go to the lowest index."""
    if len(arms) == 0:
        raise ContractViolationError("Cannot pick an optimum from an empty arm set")
    rewards = expected_rewards(surface, arms)
    best = int(np.argmax(rewards))
    return arms.arms[best], float(rewards[best])


def sample_valid_surface(
    rng: RngStream,
    cfg: HpmConfig,
    arms: ArmSet,
    noise: NoiseModel | None = None,
    surface_id: int = 0,
) -> tuple[ResponseSurface, int]:
    """Sample until the optimum exceeds cfg.reject_threshold.

    Returns the surface and how many degenerate draws were rejected first.
    """
    for rejected in range(cfg.max_resample):
        surface = sample_surface(rng, cfg, arms.n_treatments, noise, surface_id)
        _, best = optimal_arm(surface, arms)
        if best > cfg.reject_threshold:
            if rejected:
                log.debug("Surface %d: rejected %d degenerate draws", surface_id, rejected)
            return surface, rejected
    raise DegenerateSurfaceError(cfg.max_resample)


def summarize_surfaces(
    surfaces: list[ResponseSurface], n_rejected: int = 0
) -> SurfaceSummary:
    """Empirical activation rate and std of active coefficients for orders 1-3."""
    if not surfaces:
        raise ContractViolationError("Nothing to summarize")
    k = surfaces[0].n_treatments
    orders = np.array([len(t) for t in feature_terms(k, 3)])
    theta = np.stack([s.theta for s in surfaces])
    active = np.stack([s.active_mask for s in surfaces])

    rates: dict[int, float] = {}
    stds: dict[int, float] = {}
    counts: dict[int, int] = {}
    for order in (1, 2, 3):
        if comb(k, order) == 0:
            continue
        columns = orders == order
        tier_active = active[:, columns]
        tier_values = theta[:, columns][tier_active]
        rates[order] = float(tier_active.mean())
        counts[order] = int(tier_values.size)
        stds[order] = float(np.std(tier_values, ddof=1)) if tier_values.size > 1 else 0.0

    return SurfaceSummary(
        n_surfaces=len(surfaces),
        n_rejected=n_rejected,
        activation_rate=rates,
        active_std=stds,
        n_active=counts,
    )
