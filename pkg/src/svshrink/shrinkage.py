"""Spectral estimator constructors and data-driven weight selection.

The estimators keep the observation's singular vectors and modify its
singular values: hard truncation, soft thresholding, or per-index weighting.
Weights are chosen by minimizing an unbiased risk estimate: a closed form
under Gaussian noise, rank-one closed forms for the Gamma synthesis-KL and
Poisson analysis-KL criteria, and a greedy per-coordinate bounded search for
everything else.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Union

import numpy as np
from scipy.optimize import minimize_scalar

from . import linalg, metrics, risk
from .errors import DegenerateSpectrumError, DomainError, ParameterError
from .linalg import ShrinkagePlan, SpectralFunction, SvdFactorization
from .models import Gamma, Gaussian, NoiseModel, Poisson, model_from_config, validate_counts

BOUNDED_XATOL = 1e-6
BOUNDED_MAXITER = 200


@dataclass(frozen=True)
class EstimatorSpec:
    """A spectral estimator: hard rank truncation, soft thresholding, or a
    weighted plan, together with the noise model and an optional entrywise
    clamp floor for positive-signal families."""

    kind: str
    model: NoiseModel
    rank: Optional[int] = None
    threshold: Optional[float] = None
    plan: Optional[ShrinkagePlan] = None
    clamp_floor: Optional[float] = None

    def __post_init__(self):
        if self.kind == "pca":
            if self.rank is None or self.rank < 0:
                raise ParameterError("pca estimators need a rank >= 0")
        elif self.kind == "soft":
            if self.threshold is None or self.threshold < 0:
                raise ParameterError("soft-threshold estimators need a threshold >= 0")
        elif self.kind == "weighted":
            if self.plan is None:
                raise ParameterError("weighted estimators need a shrinkage plan")
        else:
            raise ParameterError(f"unknown estimator kind {self.kind!r}")
        if self.clamp_floor is not None and not self.clamp_floor > 0:
            raise ParameterError("clamp_floor must be positive when given")

    @classmethod
    def pca(cls, rank: int, model: NoiseModel, clamp_floor: Optional[float] = None):
        return cls("pca", model, rank=rank, clamp_floor=clamp_floor)

    @classmethod
    def soft_threshold(cls, threshold: float, model: NoiseModel, clamp_floor: Optional[float] = None):
        return cls("soft", model, threshold=threshold, clamp_floor=clamp_floor)

    @classmethod
    def weighted(cls, plan: ShrinkagePlan, model: NoiseModel, clamp_floor: Optional[float] = None):
        return cls("weighted", model, plan=plan, clamp_floor=clamp_floor)

    def spectral_values(self, sigmas: np.ndarray) -> np.ndarray:
        if self.kind == "pca":
            out = np.zeros_like(sigmas)
            r = min(self.rank, len(sigmas))
            out[:r] = sigmas[:r]
            return out
        if self.kind == "soft":
            return linalg.soft_threshold_values(sigmas, self.threshold)
        return self.plan.values(sigmas)

    def spectral_derivs(self, sigmas: np.ndarray) -> np.ndarray:
        if self.kind == "pca":
            out = np.zeros_like(sigmas)
            out[: min(self.rank, len(sigmas))] = 1.0
            return out
        if self.kind == "soft":
            return linalg.soft_threshold_derivs(sigmas, self.threshold)
        return self.plan.derivs(sigmas)

    def to_spectral_function(self) -> SpectralFunction:
        return SpectralFunction(self.spectral_values, self.spectral_derivs, self.clamp_floor)

    def to_config(self) -> dict:
        out = {"kind": self.kind, "model": self.model.to_config(), "clamp_floor": self.clamp_floor}
        if self.kind == "pca":
            out["rank"] = self.rank
        elif self.kind == "soft":
            out["threshold"] = self.threshold
        else:
            out["plan"] = self.plan.to_json()
        return out

    @classmethod
    def from_config(cls, config: dict) -> "EstimatorSpec":
        model = model_from_config(config["model"])
        clamp = config.get("clamp_floor")
        kind = config.get("kind")
        if kind == "pca":
            return cls.pca(int(config["rank"]), model, clamp)
        if kind == "soft":
            return cls.soft_threshold(float(config["threshold"]), model, clamp)
        if kind == "weighted":
            p = config["plan"]
            plan = ShrinkagePlan(
                tuple(int(k) for k in p["active_set"]),
                {int(k): float(w) for k, w in p["weights"].items()},
                p.get("clamp_floor"),
            )
            return cls.weighted(plan, model, clamp)
        raise ParameterError(f"unknown estimator kind {kind!r}")


def apply(spec: EstimatorSpec, fact: SvdFactorization) -> np.ndarray:
    """Evaluate the estimator on a factorized observation."""
    if spec.kind == "pca" and spec.rank > fact.rank_bound:
        raise ParameterError(f"rank {spec.rank} exceeds min(n, m) = {fact.rank_bound}")
    out = linalg.compose(fact, spec.spectral_values(fact.singular_values))
    if spec.clamp_floor is not None:
        out = np.maximum(out, spec.clamp_floor)
    return out


def _pair_ratio_sum(sigmas: np.ndarray, index: int) -> float:
    """``sum_{l != k} sigma_k^2 / (sigma_k^2 - sigma_l^2)`` for 0-based ``index``.

    Only pairs involving ``index`` matter here, so ties elsewhere in the
    spectrum (e.g. an exactly low-rank tail) are allowed.
    """
    sq = sigmas**2
    diff = sq[index] - np.delete(sq, index)
    tol = linalg._tie_tolerance(sigmas)
    if np.any(np.abs(diff) < tol):
        other = int(np.argwhere(np.abs(sq - sq[index]) < tol).ravel()[0])
        pair = sorted((index + 1, other + 1 if other != index else index + 2))
        raise DegenerateSpectrumError(
            f"singular values {pair[0]} and {pair[1]} coincide to working precision"
        )
    return float(np.sum(sq[index] / diff))


def _divergence_factor(fact: SvdFactorization, index: int) -> float:
    """``1 + |m - n| + 2 sum_{l != k} sigma_k^2 / (sigma_k^2 - sigma_l^2)``."""
    return 1.0 + abs(fact.m - fact.n) + 2.0 * _pair_ratio_sum(fact.singular_values, index)


def weights_gaussian(
    fact: SvdFactorization,
    tau: float,
    active_set: Optional[Iterable[int]] = None,
    clamp_floor: Optional[float] = None,
) -> ShrinkagePlan:
    """Closed-form weights minimizing the Gaussian MSE estimate per index.

    For each active index ``k`` (1-based) the unbiased-risk objective is a
    separable quadratic in the weight, minimized over [0, 1] by::

        w_k = clip(1 - tau^2 / sigma_k^2 * (1 + |m - n|
                   + 2 sum_{l != k} sigma_k^2 / (sigma_k^2 - sigma_l^2)), 0, 1)

    Indices outside ``active_set`` get weight zero (they are simply absent
    from the returned plan).  ``active_set=None`` activates every index.
    """
    if not tau > 0:
        raise ParameterError("tau must be positive")
    s = fact.singular_values
    if active_set is None:
        active = tuple(range(1, fact.rank_bound + 1))
    else:
        active = tuple(sorted(set(int(k) for k in active_set)))
    if active and (active[0] < 1 or active[-1] > fact.rank_bound):
        raise DomainError("active-set indices out of range")
    weights = {}
    for k in active:
        sk2 = s[k - 1] ** 2
        if sk2 == 0.0:
            raise DegenerateSpectrumError(f"singular value {k} is zero; weight formula undefined")
        w = 1.0 - tau**2 / sk2 * _divergence_factor(fact, k - 1)
        weights[k] = float(np.clip(w, 0.0, 1.0))
    return ShrinkagePlan(active, weights, clamp_floor)


def weight1_gamma_sukls(
    observed: np.ndarray,
    fact: SvdFactorization,
    shape: float,
    active_set: Optional[Iterable[int]] = None,
) -> float:
    """Closed-form leading weight minimizing the Gamma synthesis-KL estimate.

    Requires strictly positive observations (which make the leading singular
    vectors positive, hence a positive rank-one estimate) and ``L > 2``.
    Returns 0 when index 1 is not in the active set.
    """
    L = float(shape)
    if L <= 2:
        raise ParameterError(f"the synthesis KL closed form requires L > 2, got {L}")
    y = np.asarray(observed, dtype=float)
    if np.any(y <= 0):
        raise DomainError("all observations must be strictly positive")
    if active_set is not None and 1 not in set(int(k) for k in active_set):
        return 0.0
    n, m = y.shape
    rank1 = fact.singular_values[0] * np.outer(fact.left_vectors[:, 0], fact.right_vectors[:, 0])
    bracket = (L - 1.0) / (L * m * n) * float(np.sum(rank1 / y))
    bracket += _divergence_factor(fact, 0) / (L * m * n)
    if bracket <= 0:
        return 1.0
    return float(np.clip(1.0 / bracket, 0.0, 1.0))


def weight1_poisson_pukla(
    observed: np.ndarray,
    fact: SvdFactorization,
    active_set: Optional[Iterable[int]] = None,
) -> float:
    """Closed-form leading weight minimizing the Poisson analysis-KL estimate:
    ``min(1, sum Y / sum Xhat1)`` gated by the active set."""
    y = validate_counts(observed)
    if active_set is not None and 1 not in set(int(k) for k in active_set):
        return 0.0
    rank1_total = fact.singular_values[0] * float(
        np.sum(fact.left_vectors[:, 0]) * np.sum(fact.right_vectors[:, 0])
    )
    if rank1_total == 0.0:
        raise DomainError("the rank-one estimate sums to zero; the weight ratio is undefined")
    return float(np.clip(float(np.sum(y)) / rank1_total, 0.0, 1.0))


def _pca_rank1_function() -> SpectralFunction:
    def values(s):
        out = np.zeros_like(s)
        if len(s):
            out[0] = s[0]
        return out

    def derivs(s):
        out = np.zeros_like(s)
        if len(s):
            out[0] = 1.0
        return out

    return SpectralFunction(values, derivs)


def weight1_poisson_pure_exact(observed: np.ndarray, fact: Optional[SvdFactorization] = None) -> float:
    """Leading weight minimizing the exact Poisson MSE estimate.

    Enumerates the rank-one component of every one-count downdate, so it is
    guarded to small matrices; it serves as the small-matrix reference for
    the Monte-Carlo fitting path.
    """
    y = validate_counts(observed)
    risk._guard_exact_size(y)
    if fact is None:
        fact = linalg.svd(y)
    top = fact.singular_values[0]
    if top == 0.0:
        return 0.0
    nonzero = np.argwhere(y > 0)
    if len(nonzero) == 0:
        return 0.0
    down = risk.downdated_entries(_pca_rank1_function(), y, nonzero)
    total = float(np.sum(y[nonzero[:, 0], nonzero[:, 1]] * down))
    return float(np.clip(total / top**2, 0.0, 1.0))


def minimize_bounded(
    fn: Callable[[float], float],
    lower: float,
    upper: float,
    xatol: float = BOUNDED_XATOL,
    maxiter: int = BOUNDED_MAXITER,
) -> float:
    """Bounded scalar minimization (golden section with parabolic steps)."""
    res = minimize_scalar(
        fn, bounds=(lower, upper), method="bounded",
        options={"xatol": xatol, "maxiter": maxiter},
    )
    return float(res.x)


VALID_OBJECTIVES = {
    "gaussian": ("sure",),
    "gamma": ("gsure", "sukls"),
    "poisson": ("pure", "pukla"),
}


def default_objective(model: NoiseModel) -> str:
    return {"gaussian": "sure", "gamma": "sukls", "poisson": "pukla"}[model.family]


def _check_objective(model: NoiseModel, objective: str) -> str:
    objective = objective.lower()
    if objective not in VALID_OBJECTIVES[model.family]:
        raise ParameterError(
            f"objective {objective!r} is not defined for the {model.family} family; "
            f"valid pairings: {VALID_OBJECTIVES}"
        )
    return objective


def make_risk_objective(
    observed: np.ndarray,
    fact: SvdFactorization,
    model: NoiseModel,
    objective: str,
    *,
    rng: Optional[np.random.Generator] = None,
    samples: int = 1,
) -> Callable[[SpectralFunction], float]:
    """Build a deterministic map from spectral functions to risk values.

    Monte-Carlo criteria draw their probe directions once, here, and reuse
    them for every evaluation, so the returned objective is a fixed function
    suitable for bounded minimization.
    """
    objective = _check_objective(model, objective)
    y = np.asarray(observed, dtype=float)
    directions = None
    if objective in ("gsure", "pure", "pukla"):
        if rng is None:
            raise ParameterError(f"objective {objective!r} needs an rng for its probe directions")
        directions = [risk.rademacher(y.shape, rng) for _ in range(samples)]
    if objective in ("sure", "sukls") and rng is not None:
        # Closed-form divergences need no probes, but a clamped estimate has
        # no closed form; keep directions on hand for that fallback.
        directions = [risk.rademacher(y.shape, rng) for _ in range(samples)]

    def closed_or_probed_divergence(fn: SpectralFunction):
        s = fact.singular_values
        values = fn.values(s)
        if fn.clamp_floor is not None:
            raw = linalg.compose(fact, values)
            if np.any(raw < fn.clamp_floor):
                if directions is None:
                    raise ParameterError(
                        "the clamp floor is active; supply an rng so the divergence "
                        "can be probed"
                    )
                return risk.mc_divergence(fn, y, len(directions), directions=directions)
        return risk.divergence_closed_form(fact, values, fn.derivs(s))

    def evaluate(fn: SpectralFunction) -> float:
        estimate = fn.apply_to_factorization(fact)
        if objective == "sure":
            div = closed_or_probed_divergence(fn)
            return sure_value(y, estimate, model.tau, div)
        if objective == "sukls":
            div = closed_or_probed_divergence(fn)
            return risk.sukls_gamma(y, estimate, model.shape, div).value
        if objective == "gsure":
            theta_div = risk.mc_theta_divergence_gamma(
                fn, y, model.shape, len(directions), directions=directions
            )
            return risk.gsure_gamma(y, estimate, model.shape, theta_div).value
        if objective == "pure":
            return risk.pure_poisson(y, fn, mode="approx", directions=directions).value
        return risk.pukla_poisson(y, fn, mode="approx", directions=directions).value

    return evaluate


def sure_value(observed, estimate, tau, divergence) -> float:
    return risk.sure_gaussian(observed, estimate, tau, divergence).value


def optimize_weights_greedy(
    observed: np.ndarray,
    model: NoiseModel,
    objective: Union[str, Callable[[np.ndarray], float]],
    active_set: Iterable[int],
    *,
    clamp_floor: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    samples: int = 1,
    passes: int = 1,
    fact: Optional[SvdFactorization] = None,
) -> ShrinkagePlan:
    """Greedy per-coordinate weight optimization.

    Sweeps the indices in ascending order; each active weight is replaced by
    the bounded minimizer of the objective over [0, 1] with the other weights
    held fixed, and inactive weights stay at zero.  A single sweep is the
    default; ``passes`` repeats it from the previous sweep's result.
    """
    y = np.asarray(observed, dtype=float)
    if fact is None:
        fact = linalg.svd(y)
    active = tuple(sorted(set(int(k) for k in active_set)))
    if active and (active[0] < 1 or active[-1] > fact.rank_bound):
        raise DomainError("active-set indices out of range")

    if callable(objective):
        weight_objective = objective
    else:
        evaluate = make_risk_objective(y, fact, model, objective, rng=rng, samples=samples)

        def weight_objective(weights: np.ndarray) -> float:
            fn = SpectralFunction(
                lambda s, w=weights.copy(): w * s,
                lambda s, w=weights.copy(): w.copy(),
                clamp_floor,
            )
            return evaluate(fn)

    weights = np.zeros(fact.rank_bound)
    active_mask = set(active)
    for _ in range(max(1, passes)):
        for idx in range(1, fact.rank_bound + 1):
            if idx not in active_mask:
                weights[idx - 1] = 0.0
                continue

            def coordinate(t: float, i: int = idx - 1) -> float:
                trial = weights.copy()
                trial[i] = t
                try:
                    return weight_objective(trial)
                except Exception as exc:
                    raise type(exc)(f"objective failed at weight index {i + 1}: {exc}") from exc

            weights[idx - 1] = minimize_bounded(coordinate, 0.0, 1.0)
    return ShrinkagePlan(active, {k: float(weights[k - 1]) for k in active}, clamp_floor)


def soft_threshold_fit(
    observed: np.ndarray,
    model: NoiseModel,
    objective: Union[str, Callable[[float], float]],
    *,
    clamp_floor: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    samples: int = 1,
    fact: Optional[SvdFactorization] = None,
) -> float:
    """Fit the soft threshold by bounded minimization of a risk estimate over
    ``[0, sigma_1]``."""
    y = np.asarray(observed, dtype=float)
    if fact is None:
        fact = linalg.svd(y)
    top = float(fact.singular_values[0])
    if top == 0.0:
        return 0.0
    if callable(objective):
        lam_objective = objective
    else:
        evaluate = make_risk_objective(y, fact, model, objective, rng=rng, samples=samples)

        def lam_objective(lam: float) -> float:
            return evaluate(linalg.soft_threshold_function(lam, clamp_floor))

    return minimize_bounded(lam_objective, 0.0, top)


@dataclass(frozen=True)
class OracleWeights:
    """Best per-index singular values given the true signal.

    ``values`` holds the raw optimal spectral values ``u_k^T X v_k`` (kept
    unclipped for squared-error evaluation); ``raw_weights`` their ratios to
    the observed singular values; ``plan`` the [0, 1]-clipped reporting plan.
    """

    values: np.ndarray
    raw_weights: np.ndarray
    plan: ShrinkagePlan

    def estimate(self, fact: SvdFactorization) -> np.ndarray:
        return linalg.compose(fact, self.values)


def oracle_weights(
    signal: np.ndarray, fact: SvdFactorization, clamp_floor: Optional[float] = None
) -> OracleWeights:
    """Per-index squared-error-optimal shrinkage given the true signal.

    The optimal spectral value for index ``k`` is the signal's projection
    ``u_k^T X v_k`` onto the observed singular pair; it is a benchmark, not a
    practical estimator.
    """
    x = np.asarray(signal, dtype=float)
    if x.shape != (fact.n, fact.m):
        raise DomainError("signal shape must match the factorized observation")
    values = np.einsum("ik,ij,jk->k", fact.left_vectors, x, fact.right_vectors)
    s = fact.singular_values
    raw = np.divide(values, s, out=np.zeros_like(values), where=s != 0)
    active = tuple(range(1, fact.rank_bound + 1))
    clipped = {k: float(np.clip(raw[k - 1], 0.0, 1.0)) for k in active}
    return OracleWeights(values, raw, ShrinkagePlan(active, clipped, clamp_floor))


def oracle_soft_threshold(
    signal: np.ndarray,
    observed: np.ndarray,
    model: Optional[NoiseModel] = None,
    loss: str = "se",
    *,
    clamp_floor: Optional[float] = None,
    fact: Optional[SvdFactorization] = None,
) -> float:
    """Soft threshold minimizing a realized (non-expected) loss against the
    known signal; ``loss`` is one of the metric names in
    :mod:`svshrink.metrics` plus plain ``"se"``."""
    x = np.asarray(signal, dtype=float)
    y = np.asarray(observed, dtype=float)
    if fact is None:
        fact = linalg.svd(y)
    top = float(fact.singular_values[0])
    if top == 0.0:
        return 0.0

    def lam_objective(lam: float) -> float:
        fn = linalg.soft_threshold_function(lam, clamp_floor)
        xhat = fn.apply_to_factorization(fact)
        if loss == "se":
            return float(np.sum((xhat - x) ** 2))
        return metrics.metric(loss, xhat, x, model)

    return minimize_bounded(lam_objective, 0.0, top)
