"""Dense linear algebra, resampling, percentile and random-variate primitives.

Every stochastic helper draws from an RngStream, so outputs are a pure function
of (root seed, stream id, arguments).
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Sequence

import numpy as np
from numpy.typing import NDArray

from bootbandit.models import ContractViolationError, Mat, Vec

_SINGULAR_RCOND = 1e-10
_UNIT_OPEN_DENOMINATOR = float(2**53)


def derive_stream_id(*parts: object) -> int:
    """Stable 64-bit id from an ordered tuple of keys, identical across processes."""
    text = "|".join(f"{type(p).__name__}:{p}" for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """A reproducible random stream identified by (seed, stream id).

    Not shareable between threads; derive a child stream per unit of work.
    """

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def child(self, *keys: object) -> RngStream:
        """Independent stream for a named sub-task; does not consume draws."""
        return RngStream(self.seed, derive_stream_id(self.stream_id, *keys))

    def uniform(self, size: int | None = None) -> NDArray[np.float64]:
        return np.asarray(self.generator.random(size), dtype=np.float64)

    def open_uniform(self) -> float:
        """One uniform variate on the open interval (0, 1)."""
        return (float(self.generator.integers(0, 2**53)) + 0.5) / _UNIT_OPEN_DENOMINATOR

    def integers(self, high: int, size: int) -> NDArray[np.int64]:
        return self.generator.integers(0, high, size=size, dtype=np.int64)

    def standard_normal(self, size: int) -> NDArray[np.float64]:
        return self.generator.standard_normal(size)

    def permutation(self, n: int) -> NDArray[np.int64]:
        return self.generator.permutation(n)

    def choice(self, n: int, k: int) -> NDArray[np.int64]:
        """k distinct indices from range(n)."""
        return self.generator.choice(n, size=k, replace=False)


def _check_system(X: Mat, y: Vec) -> None:
    if X.ndim != 2 or y.ndim != 1:
        raise ContractViolationError(f"Expected matrix and vector, got {X.shape} and {y.shape}")
    if X.shape[0] != y.shape[0]:
        raise ContractViolationError(
            f"Design has {X.shape[0]} rows but response has {y.shape[0]} entries"
        )


def least_squares(X: Mat, y: Vec) -> Vec:
    """Minimum-norm least-squares solution of X beta = y.

    Solved through an SVD, so rank-deficient systems (e.g. degenerate bootstrap
    resamples) return the minimum-norm solution instead of failing.
    """
    _check_system(X, y)
    if X.shape[0] < X.shape[1]:
        raise ContractViolationError(
            f"Need at least as many rows as columns, got {X.shape[0]}x{X.shape[1]}"
        )
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta


def least_squares_weighted_batch(X: Mat, y: Vec, weights: NDArray[np.float64]) -> Mat:
    """Minimum-norm solutions for many row-reweightings of one system.

    Row b of the result solves the least-squares problem in which row i of
    (X, y) appears weights[b, i] times. Integer weights from bincount of a
    resample give exactly the pairs-bootstrap fit. Uses a pseudo-inverse of
    each replicate's Gram matrix, which equals the minimum-norm solution.
    """
    _check_system(X, y)
    gram = np.einsum("bt,ti,tj->bij", weights, X, X)
    cross = np.einsum("bt,ti,t->bi", weights, X, y)
    eigvals, eigvecs = np.linalg.eigh(gram)
    cutoff = _SINGULAR_RCOND * np.max(np.abs(eigvals), axis=1, keepdims=True)
    safe = np.where(eigvals > cutoff, eigvals, 1.0)
    inv = np.where(eigvals > cutoff, 1.0 / safe, 0.0)
    projected = np.einsum("bji,bj->bi", eigvecs, cross) * inv
    return np.einsum("bij,bj->bi", eigvecs, projected)


def ridge_solve(X: Mat, y: Vec, lam: float) -> Vec:
    """(X'X + lam I)^-1 X'y; lam = 0 defers to least_squares."""
    _check_system(X, y)
    if lam < 0.0:
        raise ContractViolationError(f"Ridge penalty must be >= 0, got {lam}")
    if lam == 0.0:
        return least_squares(X, y)
    gram = X.T @ X + lam * np.eye(X.shape[1])
    return np.linalg.solve(gram, X.T @ y)


def _nearest_rank(n: int, delta: float) -> int:
    if not 0.0 <= delta <= 100.0:
        raise ContractViolationError(f"Percentile must lie in [0, 100], got {delta}")
    k = math.ceil(delta / 100.0 * n)
    return min(max(k, 1), n)


def percentile(values: Vec | Sequence[float], delta: float) -> float:
    """Nearest-rank percentile: the k-th smallest value, k = ceil(delta/100 * n)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ContractViolationError("percentile of an empty vector")
    k = _nearest_rank(arr.size, delta)
    return float(np.partition(arr, k - 1)[k - 1])


def percentile_rows(values: Mat, delta: float) -> Vec:
    """Nearest-rank percentile of every row of a matrix."""
    if values.ndim != 2 or values.shape[1] == 0:
        raise ContractViolationError(f"Expected a non-empty matrix, got {values.shape}")
    k = _nearest_rank(values.shape[1], delta)
    return np.partition(values, k - 1, axis=1)[:, k - 1]


def sample_indices_with_replacement(rng: RngStream, n: int) -> NDArray[np.int64]:
    """n uniform draws from range(n)."""
    if n < 1:
        raise ContractViolationError(f"Need n >= 1, got {n}")
    return rng.integers(n, n)


def sample_laplace(rng: RngStream, b: float) -> float:
    """One Laplace(0, b) draw by inverting the CDF of a single open uniform."""
    if not b > 0.0:
        raise ContractViolationError(f"Laplace scale must be positive, got {b}")
    u = rng.open_uniform()
    if u < 0.5:
        return b * math.log(2.0 * u)
    return -b * math.log(2.0 - 2.0 * u)


def sample_gaussian(rng: RngStream, sigma: float) -> float:
    """One Normal(0, sigma^2) draw."""
    if not sigma > 0.0:
        raise ContractViolationError(f"Gaussian sigma must be positive, got {sigma}")
    return sigma * float(rng.standard_normal(1)[0])


def lower_cholesky(A: Mat) -> Mat:
    """Lower-triangular factor of a symmetric positive definite matrix."""
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as e:
        raise ContractViolationError(f"Matrix is not positive definite: {e}") from e
