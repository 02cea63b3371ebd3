"""Shared test utilities: synthetic signals and independent oracles."""

from __future__ import annotations

import numpy as np

from svshrink import linalg
from svshrink.experiments import quadratic_profile


def rank_one_positive(n: int, m: int, scale: float) -> np.ndarray:
    """Positive rank-one signal with unit-norm quadratic-profile vectors."""
    return scale * np.outer(quadratic_profile(n), quadratic_profile(m))


def spiked_signal(n: int, m: int, sigmas, rng: np.random.Generator) -> np.ndarray:
    """Low-rank signal with seeded random orthonormal singular vectors."""
    sigmas = np.asarray(sigmas, dtype=float)
    r = len(sigmas)
    u, _ = np.linalg.qr(rng.standard_normal((n, r)))
    v, _ = np.linalg.qr(rng.standard_normal((m, r)))
    return (u * sigmas) @ v.T


def apply_spectral(matrix: np.ndarray, values_fn) -> np.ndarray:
    """Evaluate a per-singular-value map on a matrix (independent recompute)."""
    fact = linalg.svd(matrix)
    return linalg.compose(fact, values_fn(fact.singular_values))


def fd_divergence(values_fn, matrix: np.ndarray, step: float = 1e-6) -> float:
    """Entrywise central-difference divergence oracle: sum_ij dF_ij/dY_ij."""
    n, m = matrix.shape
    total = 0.0
    for i in range(n):
        for j in range(m):
            bump = np.zeros_like(matrix)
            bump[i, j] = step
            plus = apply_spectral(matrix + bump, values_fn)[i, j]
            minus = apply_spectral(matrix - bump, values_fn)[i, j]
            total += (plus - minus) / (2.0 * step)
    return total


def grid_argmin(fn, lo: float, hi: float, step: float) -> float:
    """Dense grid argmin oracle for scalar objectives."""
    grid = np.arange(lo, hi + step / 2, step)
    values = np.array([fn(t) for t in grid])
    return float(grid[np.argmin(values)])
