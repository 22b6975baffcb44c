"""Closed-form time-varying variances from sign means."""

import logging
from typing import Dict, Tuple

import numpy as np

from onebitcov.errors import DivergenceError, DomainError, SaturationError
from onebitcov.sampling import ThresholdSpec
from onebitcov.special import q_function, q_inverse

log = logging.getLogger(__name__)

# relative margin keeping |p_ij| strictly below p_m so det stays positive
DET_MARGIN = 1e-9


def expected_sign_mean(p_0i, d: float):
    """E[y_i] = 2 Q(d / sqrt(p_0i)) - 1, the forward map of recover_variances."""
    p = np.asarray(p_0i, dtype=float)
    if np.any(p <= 0.0):
        raise DomainError("p_0i must be positive")
    out = 2.0 * np.asarray(q_function(d / np.sqrt(p))) - 1.0
    return float(out) if out.ndim == 0 else out


def recover_variances(mu: np.ndarray, spec: ThresholdSpec) -> np.ndarray:
    """r_0i = (d / Q^{-1}((mu_i + 1)/2))^2 - Sigma(i, i), per entry."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if spec.d == 0.0:
        raise DomainError("variance recovery needs a nonzero threshold mean d")
    sigma_diag = np.diag(spec.sigma)
    if sigma_diag.shape[0] != mu.shape[0]:
        raise DomainError(f"mu has {mu.shape[0]} entries, threshold spec has {sigma_diag.shape[0]}")
    for i, m in enumerate(mu):
        if abs(m) >= 1.0:
            raise SaturationError(i, m)
        if m == 0.0:
            raise DivergenceError(i)
    q = np.asarray(q_inverse(0.5 * (mu + 1.0)))
    r_0 = (spec.d / q) ** 2 - sigma_diag
    if np.any(r_0 <= 0.0):
        bad = np.flatnonzero(r_0 <= 0.0).tolist()
        log.warning(f"Recovered non-positive variances at indices {bad}")
    return r_0


def p_feasible_bound(p_0i: float, p_0j: float) -> float:
    if p_0i <= 0.0 or p_0j <= 0.0:
        raise DomainError(f"variances must be positive, got ({p_0i}, {p_0j})")
    return float(min(p_0i, p_0j))


def feasible_box(p_0i: float, p_0j: float):
    """[-p_m + eps, p_m - eps] with eps = DET_MARGIN * p_m."""
    p_m = p_feasible_bound(p_0i, p_0j)
    eps = DET_MARGIN * p_m
    return -p_m + eps, p_m - eps


def recover_variances_masked(mu: np.ndarray, spec: ThresholdSpec) -> Tuple[np.ndarray, Dict[int, DomainError]]:
    """recover_variances index by index; failed indices are NaN and their errors are returned."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if spec.d == 0.0:
        raise DomainError("variance recovery needs a nonzero threshold mean d")
    sigma_diag = np.diag(spec.sigma)
    out = np.full(mu.shape, np.nan)
    failures: Dict[int, DomainError] = {}
    for i, m in enumerate(mu):
        if abs(m) >= 1.0:
            failures[i] = SaturationError(i, m)
        elif m == 0.0:
            failures[i] = DivergenceError(i)
        else:
            out[i] = (spec.d / q_inverse(0.5 * (m + 1.0))) ** 2 - sigma_diag[i]
    if failures:
        log.warning(f"Variance recovery failed at {len(failures)} of {len(mu)} indices")
    return out, failures
