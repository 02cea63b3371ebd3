"""Realized risk metrics between an estimate and the true signal."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import DomainError, ParameterError
from .models import Gamma, NoiseModel


def _pair(xhat: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    xhat = np.asarray(xhat, dtype=float)
    x = np.asarray(x, dtype=float)
    if xhat.shape != x.shape:
        raise DomainError("estimate and signal must share a shape")
    return xhat, x


def squared_error(xhat: np.ndarray, x: np.ndarray) -> float:
    xhat, x = _pair(xhat, x)
    return float(np.sum((xhat - x) ** 2))


def nmse(xhat: np.ndarray, x: np.ndarray) -> float:
    """Squared Frobenius error normalized by the signal energy."""
    xhat, x = _pair(xhat, x)
    denom = float(np.sum(x**2))
    if denom == 0.0:
        raise DomainError("NMSE is undefined for an all-zero signal")
    return float(np.sum((xhat - x) ** 2)) / denom


def mse_eta_gamma(xhat: np.ndarray, x: np.ndarray, shape: float) -> float:
    """Squared error between natural parameters under Gamma noise:
    ``L^2 sum ((x - xhat) / (x xhat))^2``."""
    xhat, x = _pair(xhat, x)
    if np.any(x <= 0) or np.any(xhat <= 0):
        raise DomainError("Gamma natural-parameter error needs positive entries")
    return float(shape**2 * np.sum(((x - xhat) / (x * xhat)) ** 2))


def kls_gamma(xhat: np.ndarray, x: np.ndarray, shape: float) -> float:
    """Synthesis Kullback-Leibler loss under Gamma noise:
    ``L sum [xhat/x - log(xhat/x) - 1]``; zero iff the estimate matches."""
    xhat, x = _pair(xhat, x)
    if np.any(x <= 0) or np.any(xhat <= 0):
        raise DomainError("Gamma KL losses need positive entries")
    r = xhat / x
    return float(shape * np.sum(r - np.log(r) - 1.0))


def kla_poisson(xhat: np.ndarray, x: np.ndarray) -> float:
    """Analysis Kullback-Leibler loss under Poisson noise:
    ``sum [xhat - x - x log(xhat/x)]``."""
    xhat, x = _pair(xhat, x)
    if np.any(x <= 0) or np.any(xhat <= 0):
        raise DomainError("Poisson KL losses need positive entries")
    return float(np.sum(xhat - x - x * np.log(xhat / x)))


METRIC_NAMES = ("nmse", "se", "kls", "kla", "mse_eta")


def metric(kind: str, xhat: np.ndarray, x: np.ndarray, model: Optional[NoiseModel] = None) -> float:
    """Dispatch on the metric name; Gamma-specific metrics read ``L`` from the
    model."""
    kind = kind.lower()
    if kind == "nmse":
        return nmse(xhat, x)
    if kind == "se":
        return squared_error(xhat, x)
    if kind == "kls":
        if not isinstance(model, Gamma):
            raise ParameterError("the synthesis KL metric is implemented for the Gamma family")
        return kls_gamma(xhat, x, model.shape)
    if kind == "kla":
        return kla_poisson(xhat, x)
    if kind == "mse_eta":
        if not isinstance(model, Gamma):
            raise ParameterError("the natural-parameter MSE metric is implemented for the Gamma family")
        return mse_eta_gamma(xhat, x, model.shape)
    raise ParameterError(f"unknown metric {kind!r}; choose from {METRIC_NAMES}")
