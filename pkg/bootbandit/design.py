"""Orthogonal-array initial designs.

Candidates are strength-2 orthogonal arrays cut from normalized Hadamard
matrices (Sylvester, Paley types I and II and their doublings). A candidate is
a random choice of K columns with random sign flips and a random row order; the
first one whose intercept + mains + two-way model matrix has full column rank
wins. Run counts with no known Hadamard matrix build each candidate column by
pair exchanges from a random balanced column until it is orthogonal to the
columns before it.
"""

from __future__ import annotations

import logging
from functools import cache

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from bootbandit import timing
from bootbandit.arms import MAX_TREATMENTS, expand_levels, n_agent_features
from bootbandit.models import (
    Arm,
    ContractViolationError,
    DesignSearchError,
    InitialDesign,
    Mat,
    ValidationReport,
)
from bootbandit.numerics import RngStream

log = logging.getLogger(__name__)

SEARCH_BUDGET = 10_000
EXCHANGE_SWEEPS = 100


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % d for d in range(2, int(n**0.5) + 1))


def _jacobsthal(q: int) -> NDArray[np.int64]:
    residues = {(x * x) % q for x in range(1, q)}
    chi = np.array([0] + [1 if a in residues else -1 for a in range(1, q)], dtype=np.int64)
    return np.array([[chi[(j - i) % q] for j in range(q)] for i in range(q)])


def _paley_hadamard(q: int) -> NDArray[np.int64]:
    """Paley type I Hadamard matrix of order q + 1 for prime q = 3 mod 4."""
    jacobsthal = _jacobsthal(q)
    core = np.zeros((q + 1, q + 1), dtype=np.int64)
    core[0, 1:] = 1
    core[1:, 0] = -1
    core[1:, 1:] = jacobsthal
    return core + np.eye(q + 1, dtype=np.int64)


def _paley2_hadamard(q: int) -> NDArray[np.int64]:
    """Paley type II Hadamard matrix of order 2(q + 1) for prime q = 1 mod 4."""
    conference = np.zeros((q + 1, q + 1), dtype=np.int64)
    conference[0, 1:] = 1
    conference[1:, 0] = 1
    conference[1:, 1:] = _jacobsthal(q)
    on_signs = np.array([[1, 1], [1, -1]], dtype=np.int64)
    on_zeros = np.array([[1, -1], [-1, -1]], dtype=np.int64)
    return np.kron(conference, on_signs) + np.kron(np.eye(q + 1, dtype=np.int64), on_zeros)


@cache
def hadamard_bases(order: int) -> tuple[NDArray[np.int64], ...]:
    """Every Hadamard matrix of this order we know how to build."""
    bases: list[NDArray[np.int64]] = []
    if order >= 2 and order & (order - 1) == 0:
        bases.append(scipy.linalg.hadamard(order).astype(np.int64))
    q = order - 1
    if order % 4 == 0 and _is_prime(q) and q % 4 == 3:
        bases.append(_paley_hadamard(q))
    q2 = order // 2 - 1
    if order % 4 == 0 and _is_prime(q2) and q2 % 4 == 1:
        bases.append(_paley2_hadamard(q2))
    if order % 8 == 0:
        doubling = np.array([[1, 1], [1, -1]], dtype=np.int64)
        for half in hadamard_bases(order // 2):
            doubled = np.kron(doubling, half)
            if not any(np.array_equal(doubled, b) for b in bases):
                bases.append(doubled)
    return tuple(bases)


def _normalized_columns(hadamard: NDArray[np.int64]) -> NDArray[np.int64]:
    """Drop the first column after making it all +1; what remains is an OA of strength 2."""
    signed = hadamard * hadamard[:, [0]]
    return signed[:, 1:]


def model_matrix(levels: NDArray[np.int64]) -> Mat:
    return expand_levels(levels, max_order=2)


def _full_factorial(n_treatments: int) -> NDArray[np.int64]:
    grid = np.indices((2,) * n_treatments).reshape(n_treatments, -1).T
    return (2 * grid - 1).astype(np.int64)


def _orthogonal_by_exchange(
    n_runs: int, n_treatments: int, rng: RngStream, sweeps: int = EXCHANGE_SWEEPS
) -> NDArray[np.int64] | None:
    """Balanced, pairwise orthogonal columns built one at a time by pair swaps.

    Each column starts as a random balanced vector; swapping one +1 with one -1
    keeps it balanced and moves every inner product with earlier columns by
    -4, 0 or +4. Swaps that do not increase the squared inner products are kept.
    Returns None when a column is still not orthogonal after the sweeps.
    """
    half = n_runs // 2
    columns = np.zeros((n_runs, 0), dtype=np.int64)
    for _ in range(n_treatments):
        column = np.repeat(np.array([1, -1], dtype=np.int64), half)[rng.permutation(n_runs)]
        inner = columns.T @ column
        for _ in range(sweeps * n_runs):
            if not inner.any():
                break
            pick = rng.integers(half, 2)
            i = np.flatnonzero(column == 1)[pick[0]]
            k = np.flatnonzero(column == -1)[pick[1]]
            trial = inner - 2 * columns[i] + 2 * columns[k]
            if trial @ trial <= inner @ inner:
                column[i], column[k] = -1, 1
                inner = trial
        if inner.any():
            return None
        columns = np.column_stack([columns, column])
    return columns


def _to_design(levels: NDArray[np.int64]) -> InitialDesign:
    runs = tuple(Arm(tuple(int(v) for v in row)) for row in levels)
    return InitialDesign(runs=runs, model_matrix=model_matrix(levels))


def generate_initial_design(
    n_treatments: int,
    n_runs: int,
    rng: RngStream,
    budget: int = SEARCH_BUDGET,
) -> InitialDesign:
    """Search for a balanced design whose model matrix has full column rank."""
    if not 1 <= n_treatments <= MAX_TREATMENTS:
        raise ContractViolationError(
            f"Number of treatments must lie in [1, {MAX_TREATMENTS}], got {n_treatments}"
        )
    required = n_agent_features(n_treatments)
    if n_runs < required:
        raise ContractViolationError(
            f"{n_runs} runs cannot estimate {required} model columns for K={n_treatments}"
        )
    if n_runs == 2**n_treatments:
        return _to_design(_full_factorial(n_treatments))
    if n_runs % 4 != 0:
        raise ContractViolationError(f"Run count must be a multiple of 4, got {n_runs}")

    bases = [_normalized_columns(h) for h in hadamard_bases(n_runs)]
    bases = [b for b in bases if b.shape[1] >= n_treatments]
    if not bases:
        log.info("No Hadamard matrix of order %d; building columns by exchange", n_runs)

    best_rank = 0
    with timing.timed("design_search"):
        for attempt in range(1, budget + 1):
            if bases:
                base = bases[int(rng.integers(len(bases), 1)[0])]
                columns = np.sort(rng.choice(base.shape[1], n_treatments))
                signs = np.where(rng.uniform(n_treatments) < 0.5, -1, 1)
                rows = rng.permutation(n_runs)
                levels = base[np.ix_(rows, columns)] * signs
            else:
                exchanged = _orthogonal_by_exchange(n_runs, n_treatments, rng)
                if exchanged is None:
                    continue
                levels = exchanged
            rank = int(np.linalg.matrix_rank(model_matrix(levels)))
            best_rank = max(best_rank, rank)
            if rank == required:
                log.debug("Design found after %d candidates", attempt)
                timing.record_count("design_candidates", attempt)
                return _to_design(levels)

    raise DesignSearchError(best_rank=best_rank, required_rank=required, candidates_tried=budget)


def validate_design(design: InitialDesign) -> ValidationReport:
    """Balance, main-effect orthogonality and rank of a design's model matrix."""
    matrix = design.model_matrix
    n_treatments = design.runs[0].n_treatments if design.runs else 0
    balance = [float(abs(matrix[:, j].sum())) for j in range(1, matrix.shape[1])]

    mains = matrix[:, 1 : 1 + n_treatments]
    gram = mains.T @ mains
    off_diagonal = gram - np.diag(np.diag(gram))
    max_corr = 0.0
    if n_treatments > 1:
        max_corr = float(np.max(np.abs(off_diagonal))) / max(design.n_runs, 1)

    duplicated = [
        (i, j)
        for i in range(1, matrix.shape[1])
        for j in range(i + 1, matrix.shape[1])
        if abs(float(matrix[:, i] @ matrix[:, j])) == design.n_runs
    ]

    return ValidationReport(
        n_runs=design.n_runs,
        n_treatments=n_treatments,
        balance_residuals=balance,
        max_main_correlation=max_corr,
        rank=int(np.linalg.matrix_rank(matrix)) if matrix.size else 0,
        required_rank=matrix.shape[1],
        duplicated_columns=duplicated,
    )


def design_from_levels(levels: NDArray[np.int64]) -> InitialDesign:
    """Wrap an explicit +/-1 run matrix as a design (no search, no checks)."""
    return _to_design(np.asarray(levels, dtype=np.int64))
