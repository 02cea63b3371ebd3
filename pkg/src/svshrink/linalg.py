"""SVD with a reproducible sign convention, spectral reconstruction, and the
directional derivative (Jacobian-vector product) of spectral matrix maps.

A *spectral map* keeps the singular vectors of a matrix and replaces each
singular value ``sigma_k`` by ``f_k(sigma_k)``.  Everything downstream
(risk estimation, weight fitting) is built on the three primitives here:
``svd``, ``reconstruct``/``compose``, and ``directional_derivative``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateSpectrumError, DomainError, NumericalError

# Pairs (k, l) with |sigma_k^2 - sigma_l^2| below this fraction of sigma_1^2
# are treated as ties: the pair-interaction formulas are numerically singular
# there even though they hold almost everywhere under continuous noise.
DEGENERACY_RTOL = 1e-12


def _as_matrix(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DomainError(f"{name} must be a 2-D array with positive dimensions, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} entries must all be finite")
    return a


@dataclass(frozen=True)
class SvdFactorization:
    """Thin SVD ``Y = U diag(s) V^T`` with descending singular values.

    Attributes
    ----------
    singular_values : np.ndarray
        Shape ``(k,)`` with ``k = min(n, m)``, sorted descending, all >= 0.
    left_vectors : np.ndarray
        Shape ``(n, k)``; orthonormal columns.
    right_vectors : np.ndarray
        Shape ``(m, k)``; orthonormal columns (``V``, not ``V^T``).

    The sign convention fixes each pair ``(u_k, v_k)`` so that the
    largest-magnitude entry of ``u_k`` is positive (ties broken by the lowest
    row index); ``v_k`` is flipped jointly.  This makes repeated
    factorizations of the same matrix bitwise identical.
    """

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    def __post_init__(self):
        s = self.singular_values
        if s.ndim != 1 or len(s) != min(self.n, self.m):
            raise DomainError("singular_values must be a 1-D array of length min(n, m)")
        if np.any(s < 0) or np.any(np.diff(s) > 0):
            raise DomainError("singular values must be nonnegative and sorted descending")

    @property
    def n(self) -> int:
        return self.left_vectors.shape[0]

    @property
    def m(self) -> int:
        return self.right_vectors.shape[0]

    @property
    def rank_bound(self) -> int:
        """min(n, m), the number of stored singular triplets."""
        return len(self.singular_values)

    def transposed(self) -> "SvdFactorization":
        """Factorization of ``Y^T`` (swap the singular-vector roles)."""
        return SvdFactorization(self.singular_values, self.right_vectors, self.left_vectors)


@dataclass(frozen=True)
class ShrinkagePlan:
    """Active index set with per-index shrinkage weights.

    Singular-value indices are 1-based: ``k = 1`` refers to the largest
    singular value.  Indices outside ``active_set`` always receive weight 0.
    ``clamp_floor``, when set, applies an entrywise lower bound to the
    reconstructed matrix (positivity constraint for Gamma/Poisson signals).
    """

    active_set: tuple[int, ...]
    weights: dict[int, float] = field(default_factory=dict)
    clamp_floor: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "active_set", tuple(sorted(set(int(k) for k in self.active_set))))
        if any(k < 1 for k in self.active_set):
            raise DomainError("active-set indices are 1-based and must be >= 1")
        if set(self.weights) != set(self.active_set):
            raise DomainError("weights must be given for exactly the active-set indices")
        for k, w in self.weights.items():
            if not (0.0 <= w <= 1.0):
                raise DomainError(f"weight for index {k} is {w}, outside [0, 1]")
        if self.clamp_floor is not None and not self.clamp_floor > 0:
            raise DomainError("clamp_floor must be positive when given")

    @classmethod
    def identity(cls, k: int, clamp_floor: Optional[float] = None) -> "ShrinkagePlan":
        """Keep all ``k`` singular values unchanged."""
        idx = tuple(range(1, k + 1))
        return cls(idx, {i: 1.0 for i in idx}, clamp_floor)

    @classmethod
    def rank_one(cls, weight: float, clamp_floor: Optional[float] = None) -> "ShrinkagePlan":
        return cls((1,), {1: float(weight)}, clamp_floor)

    def values(self, sigmas: np.ndarray) -> np.ndarray:
        """Per-index shrunk singular values ``w_k * sigma_k`` (0 off the set)."""
        out = np.zeros_like(sigmas)
        for k in self.active_set:
            if k <= len(sigmas):
                out[k - 1] = self.weights[k] * sigmas[k - 1]
        return out

    def derivs(self, sigmas: np.ndarray) -> np.ndarray:
        out = np.zeros_like(sigmas)
        for k in self.active_set:
            if k <= len(sigmas):
                out[k - 1] = self.weights[k]
        return out

    def to_json(self) -> dict:
        return {
            "active_set": list(self.active_set),
            "weights": {str(k): self.weights[k] for k in self.active_set},
            "clamp_floor": self.clamp_floor,
        }


def svd(matrix: np.ndarray) -> SvdFactorization:
    """Thin SVD with the package-wide deterministic sign convention.

    Raises
    ------
    DomainError
        If the input is not a finite 2-D array.
    NumericalError
        If the underlying decomposition fails to converge.
    """
    a = _as_matrix(matrix)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    v = vt.T
    u, v = _apply_sign_convention(u, v)
    return SvdFactorization(s, u, v)


def _apply_sign_convention(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Largest-|entry| of each left vector made positive; np.argmax breaks ties
    # at the lowest index.  The right vector flips jointly.
    anchor = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[anchor, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, v * signs


def compose(fact: SvdFactorization, spectral_values: np.ndarray) -> np.ndarray:
    """Assemble ``sum_k f_k u_k v_k^T`` from per-index values ``f_k``."""
    vals = np.asarray(spectral_values, dtype=float)
    if vals.shape != fact.singular_values.shape:
        raise DomainError("spectral values must match the number of singular values")
    return (fact.left_vectors * vals) @ fact.right_vectors.T


def reconstruct(fact: SvdFactorization, plan: ShrinkagePlan) -> np.ndarray:
    """Weighted reconstruction ``sum_{k in s} w_k sigma_k u_k v_k^T``.

    With ``plan.clamp_floor`` set, every entry is raised to at least that
    floor after summation.
    """
    if plan.active_set and plan.active_set[-1] > fact.rank_bound:
        raise DomainError(
            f"plan index {plan.active_set[-1]} exceeds min(n, m) = {fact.rank_bound}"
        )
    out = compose(fact, plan.values(fact.singular_values))
    if plan.clamp_floor is not None:
        out = np.maximum(out, plan.clamp_floor)
    return out


def _tie_tolerance(sigmas: np.ndarray) -> float:
    top = sigmas[0] ** 2 if len(sigmas) else 0.0
    return DEGENERACY_RTOL * max(top, np.finfo(float).tiny)


def check_distinct(
    sigmas: np.ndarray,
    values: Optional[np.ndarray] = None,
    derivs: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Verify the pairwise separation needed by the spectral-derivative formulas.

    A near-tie ``|sigma_k^2 - sigma_l^2| < 1e-12 sigma_1^2`` is harmless only
    when the map vanishes identically on the tied pair (both values and both
    derivatives zero), e.g. a thresholded tail of an exactly low-rank matrix.
    Any other near-tie raises :class:`DegenerateSpectrumError` naming the
    offending pair (1-based).

    Returns the boolean matrix of exempt (tied but harmless) pairs, which the
    caller zeroes out of its pair interactions.
    """
    s = np.asarray(sigmas, dtype=float)
    k = len(s)
    if k < 2:
        return np.zeros((k, k), dtype=bool)
    sq = s**2
    tied = np.abs(sq[:, None] - sq[None, :]) < _tie_tolerance(s)
    np.fill_diagonal(tied, False)
    if values is None:
        inert = np.zeros(k, dtype=bool)
    else:
        inert = np.asarray(values) == 0.0
        if derivs is not None:
            inert &= np.asarray(derivs) == 0.0
    exempt = tied & inert[:, None] & inert[None, :]
    offending = tied & ~exempt
    if offending.any():
        i, j = np.argwhere(offending)[0]
        raise DegenerateSpectrumError(
            f"singular values {min(i, j) + 1} and {max(i, j) + 1} coincide to working "
            f"precision (sigma={s[i]:.6g} vs {s[j]:.6g}); spectral-derivative "
            "formulas are singular at ties"
        )
    return exempt


def _safe_ratio(values: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """``f_k / sigma_k`` with the 0/0 -> 0 convention for collapsed components."""
    num = np.asarray(values, dtype=float)
    den = np.asarray(sigmas, dtype=float)
    zero = (num == 0.0) & (den == 0.0)
    bad = (den == 0.0) & ~zero
    if bad.any():
        k = int(np.argwhere(bad)[0]) + 1
        raise DegenerateSpectrumError(
            f"singular value {k} is zero but the spectral map does not vanish there"
        )
    out = np.zeros_like(num)
    nz = den != 0.0
    out[nz] = num[nz] / den[nz]
    return out


def directional_derivative(
    fact: SvdFactorization,
    shrink_values: np.ndarray,
    shrink_derivs: np.ndarray,
    delta: np.ndarray,
) -> np.ndarray:
    """Jacobian-vector product of a spectral map at ``Y`` in direction ``delta``.

    Parameters
    ----------
    fact : SvdFactorization
        Factorization of the base matrix ``Y``.
    shrink_values, shrink_derivs : np.ndarray
        ``f_k(sigma_k)`` and ``f_k'(sigma_k)`` for each stored singular value.
    delta : np.ndarray
        Perturbation direction, same shape as ``Y``.

    Returns
    -------
    np.ndarray
        ``(d f(Y) / dY) . delta``, same shape as ``Y``.

    Notes
    -----
    The derivative decomposes in the singular basis into a diagonal part
    driven by ``f'``, symmetric and antisymmetric couplings between distinct
    singular values with denominators ``sigma_i -+ sigma_j``, and, for
    rectangular matrices, a residual block scaled by ``f_k / sigma_k``.
    Singular values tied to working precision make those denominators blow
    up, hence the distinctness guard.
    """
    n, m = fact.n, fact.m
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (n, m):
        raise DomainError(f"delta must have shape {(n, m)}, got {delta.shape}")
    if n > m:
        return directional_derivative(
            fact.transposed(), shrink_values, shrink_derivs, delta.T
        ).T

    s = fact.singular_values
    f = np.asarray(shrink_values, dtype=float)
    d = np.asarray(shrink_derivs, dtype=float)
    if f.shape != s.shape or d.shape != s.shape:
        raise DomainError("shrink_values and shrink_derivs must match the singular values")
    exempt = check_distinct(s, f, d)

    u, v = fact.left_vectors, fact.right_vectors
    dbar = u.T @ delta @ v  # square coupling block, (k, k)
    sym = 0.5 * (dbar + dbar.T)
    asym = 0.5 * (dbar - dbar.T)

    fdiff = f[:, None] - f[None, :]
    sdiff = s[:, None] - s[None, :]
    fsum = f[:, None] + f[None, :]
    ssum = s[:, None] + s[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        m_diff = np.where(sdiff != 0.0, fdiff / np.where(sdiff == 0.0, 1.0, sdiff), 0.0)
        m_sum = np.where(ssum != 0.0, fsum / np.where(ssum == 0.0, 1.0, ssum), 0.0)
    m_diff[exempt] = 0.0
    m_sum[exempt] = 0.0
    np.fill_diagonal(m_diff, 0.0)
    np.fill_diagonal(m_sum, 0.0)

    core = sym * m_diff + asym * m_sum
    np.fill_diagonal(core, np.diagonal(dbar) * d)
    out = u @ core @ v.T

    if n < m:
        # Couplings with the null right-singular directions reduce to f_k/sigma_k.
        ratio = _safe_ratio(f, s)
        resid = delta - (delta @ v) @ v.T
        out = out + (u * ratio) @ (u.T @ resid)
    return out


@dataclass(frozen=True)
class SpectralFunction:
    """A per-singular-value map packaged with its derivative.

    ``values_fn`` and ``derivs_fn`` receive the full descending vector of
    singular values and return same-length arrays ``f_k(sigma_k)`` and
    ``f_k'(sigma_k)``.  ``clamp_floor``, when set, applies ``max(., floor)``
    entrywise to the assembled matrix; the clamp derivative is taken as 0
    wherever the floor is active and 1 elsewhere.
    """

    values_fn: Callable[[np.ndarray], np.ndarray]
    derivs_fn: Callable[[np.ndarray], np.ndarray]
    clamp_floor: Optional[float] = None

    def values(self, sigmas: np.ndarray) -> np.ndarray:
        return np.asarray(self.values_fn(np.asarray(sigmas, dtype=float)), dtype=float)

    def derivs(self, sigmas: np.ndarray) -> np.ndarray:
        return np.asarray(self.derivs_fn(np.asarray(sigmas, dtype=float)), dtype=float)

    def apply_to_factorization(self, fact: SvdFactorization) -> np.ndarray:
        out = compose(fact, self.values(fact.singular_values))
        if self.clamp_floor is not None:
            out = np.maximum(out, self.clamp_floor)
        return out

    def __call__(self, matrix: np.ndarray) -> np.ndarray:
        return self.apply_to_factorization(svd(matrix))

    def derivative_probe(self, fact: SvdFactorization, delta: np.ndarray) -> np.ndarray:
        """Jacobian-vector product of the (possibly clamped) map."""
        s = fact.singular_values
        dd = directional_derivative(fact, self.values(s), self.derivs(s), delta)
        if self.clamp_floor is not None:
            raw = compose(fact, self.values(s))
            dd = np.where(raw >= self.clamp_floor, dd, 0.0)
        return dd


def identity_spectral_function() -> SpectralFunction:
    return SpectralFunction(lambda s: s.copy(), lambda s: np.ones_like(s))


def soft_threshold_values(sigmas: np.ndarray, lam: float) -> np.ndarray:
    return np.maximum(sigmas - lam, 0.0)


def soft_threshold_derivs(sigmas: np.ndarray, lam: float) -> np.ndarray:
    # 1 above the threshold, 0 below; an exact float tie takes the symmetric
    # subgradient 1/2 so that central-difference probes of the kink agree.
    out = np.where(sigmas > lam, 1.0, 0.0)
    out[sigmas == lam] = 0.5
    return out


def soft_threshold_function(lam: float, clamp_floor: Optional[float] = None) -> SpectralFunction:
    if lam < 0:
        raise DomainError("soft threshold must be nonnegative")
    return SpectralFunction(
        lambda s: soft_threshold_values(s, lam),
        lambda s: soft_threshold_derivs(s, lam),
        clamp_floor,
    )
