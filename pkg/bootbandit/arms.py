"""Combinatorial arm space and its feature expansions.

Feature ordering is canonical: intercept, main effects in treatment order, then
pairs (i, j) with i < j and triples (i, j, k) with i < j < k, each
lexicographic. Agent features stop after the pairs; true features add triples.
"""

from __future__ import annotations

import itertools
from functools import cache
from math import comb

import numpy as np

from bootbandit.models import Arm, ArmSet, ContractViolationError, Mat, Vec

MAX_TREATMENTS = 20


def n_agent_features(n_treatments: int) -> int:
    return 1 + n_treatments + comb(n_treatments, 2)


def n_true_features(n_treatments: int) -> int:
    return n_agent_features(n_treatments) + comb(n_treatments, 3)


@cache
def feature_terms(n_treatments: int, max_order: int = 3) -> tuple[tuple[int, ...], ...]:
    """Index tuples of every feature column; () is the intercept."""
    terms: list[tuple[int, ...]] = [()]
    for order in range(1, max_order + 1):
        terms.extend(itertools.combinations(range(n_treatments), order))
    return tuple(terms)


def feature_label(term: tuple[int, ...]) -> str:
    """Human-readable column name, e.g. 'x1:x3'."""
    if not term:
        return "intercept"
    return ":".join(f"x{i + 1}" for i in term)


def expand_levels(levels: np.ndarray, max_order: int) -> Mat:
    """Expand a (rows x K) +/-1 matrix into its model matrix up to max_order."""
    levels = np.atleast_2d(np.asarray(levels, dtype=np.float64))
    terms = feature_terms(levels.shape[1], max_order)
    columns = [
        np.prod(levels[:, list(term)], axis=1) if term else np.ones(levels.shape[0])
        for term in terms
    ]
    return np.column_stack(columns)


def expand_agent_features(arm: Arm) -> Vec:
    """Intercept, main effects and two-way interactions of an arm."""
    return expand_levels(np.array([arm.levels]), max_order=2)[0]


def expand_true_features(arm: Arm) -> Vec:
    """Agent features followed by every three-way interaction."""
    return expand_levels(np.array([arm.levels]), max_order=3)[0]


def enumerate_arms(n_treatments: int) -> ArmSet:
    """All 2^K arms in lexicographic order of levels (-1 before +1)."""
    if not 1 <= n_treatments <= MAX_TREATMENTS:
        raise ContractViolationError(
            f"Number of treatments must lie in [1, {MAX_TREATMENTS}], got {n_treatments}"
        )
    levels = np.array(list(itertools.product((-1, 1), repeat=n_treatments)), dtype=np.int64)
    arms = tuple(Arm(tuple(int(v) for v in row)) for row in levels)
    return ArmSet(
        arms=arms,
        agent_matrix=expand_levels(levels, max_order=2),
        true_matrix=expand_levels(levels, max_order=3),
    )
