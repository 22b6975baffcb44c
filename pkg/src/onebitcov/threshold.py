"""Maximum-likelihood estimate of the threshold mean d and spread sigma_tau^2 from sign data.

The unknown per-index variances are tied to (d, sigma_tau^2) through the sign
means, r_0i = (d / Q^{-1}((mu_i + 1)/2))^2 - sigma_tau^2, which leaves a
two-parameter problem. Each y_i(k) is scored against its realized threshold
tau_i(k), and the realized thresholds themselves are scored against the
threshold model tau_i(k) ~ N(d, sigma_tau^2).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial import hermite_e
from scipy import optimize
from scipy import special as sp
from scipy import stats

from onebitcov.errors import DivergenceError, DomainError, InfeasibleError, SaturationError
from onebitcov.sampling import OneBitDataset, sample_mean
from onebitcov.special import q_inverse

log = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-300
LOG_PROBABILITY_FLOOR = float(np.log(PROBABILITY_FLOOR))

D_RANGE = (0.05, 1.0)
SIGMA_RANGE = (0.01, 0.5)
GRID_SIZE = 20


@dataclass
class LikelihoodValue:
    value: float
    clamped: int


@dataclass
class ThresholdEstimate:
    d: float
    sigma_tau2: float
    log_likelihood: float
    evaluations: int
    clamped: int
    grid_d: float
    grid_sigma_tau2: float

    def nmse(self, d_true: float, sigma_tau2_true: Optional[float] = None) -> Tuple[float, Optional[float]]:
        nmse_d = (d_true - self.d) ** 2 / d_true**2
        if sigma_tau2_true is None:
            return nmse_d, None
        return nmse_d, (sigma_tau2_true - self.sigma_tau2) ** 2 / sigma_tau2_true**2


def sign_log_likelihood(signs, tau, variances) -> LikelihoodValue:
    """sum [y=+1] log(1 - Psi(tau)) + [y=-1] log Psi(tau), Psi the N(0, variance) CDF.

    For 2-D input, rows are indices and `variances` holds one entry per row.
    Terms below log(1e-300) are clamped and counted.
    """
    signs = np.asarray(signs)
    tau = np.asarray(tau, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if np.any(variances <= 0.0):
        raise DomainError("variances must be positive")
    scale = np.sqrt(variances)
    if tau.ndim == 2 and scale.ndim == 1:
        scale = scale[:, None]
    z = tau / scale
    terms = np.where(signs > 0, sp.log_ndtr(-z), sp.log_ndtr(z))
    low = terms < LOG_PROBABILITY_FLOOR
    clamped = int(np.count_nonzero(low))
    if clamped:
        terms = np.where(low, LOG_PROBABILITY_FLOOR, terms)
    return LikelihoodValue(float(np.sum(terms)), clamped)


def _standard_scores(mu: np.ndarray) -> np.ndarray:
    for i, m in enumerate(mu):
        if abs(m) >= 1.0:
            raise SaturationError(i, m)
        if m == 0.0:
            raise DivergenceError(i)
    return np.asarray(q_inverse(0.5 * (mu + 1.0)))


def constrained_variances(scores: np.ndarray, d: float, sigma_tau2: float) -> np.ndarray:
    """r_0i = (d / q_i)^2 - sigma_tau^2 for q_i = Q^{-1}((mu_i + 1)/2)."""
    return (d / scores) ** 2 - sigma_tau2


def threshold_log_density(thresholds, d: float, sigma_tau2: float) -> float:
    """sum log N(tau; d, sigma_tau2) over the realized thresholds; -inf for sigma_tau2 = 0."""
    if sigma_tau2 < 0.0:
        raise DomainError("sigma_tau2 must be >= 0")
    if sigma_tau2 == 0.0:
        return -np.inf
    return float(np.sum(stats.norm.logpdf(np.asarray(thresholds, dtype=float), loc=d, scale=np.sqrt(sigma_tau2))))


def log_likelihood(
    data: OneBitDataset,
    d: float,
    sigma_tau2: float,
    mu: Optional[np.ndarray] = None,
    with_thresholds: bool = True,
) -> float:
    """Constrained log-likelihood; -inf where some r_0i <= 0.

    `with_thresholds` adds the threshold model density of the realized tau.
    """
    if sigma_tau2 < 0.0:
        raise DomainError("sigma_tau2 must be >= 0")
    scores = _standard_scores(sample_mean(data) if mu is None else np.asarray(mu, dtype=float))
    return _evaluate(data, scores, d, sigma_tau2, with_thresholds).value


def _evaluate(data: OneBitDataset, scores: np.ndarray, d: float, sigma_tau2: float, with_thresholds: bool) -> LikelihoodValue:
    r_0 = constrained_variances(scores, d, sigma_tau2)
    if d <= 0.0 or sigma_tau2 < 0.0 or np.any(r_0 <= 0.0):
        return LikelihoodValue(-np.inf, 0)
    result = sign_log_likelihood(data.signs, data.thresholds, r_0)
    if with_thresholds:
        result.value += threshold_log_density(data.thresholds, d, sigma_tau2)
    return result


def model_sign_probability(d: float, sigma_tau2: float, r_0i: float, nodes: int = 80) -> float:
    """P(y_i = +1) = E_tau[1 - Psi(tau)] with tau ~ N(d, sigma_tau2), by Gauss-Hermite quadrature."""
    z, w = hermite_e.hermegauss(nodes)
    tau = d + np.sqrt(sigma_tau2) * z
    return float(np.dot(w, sp.ndtr(-tau / np.sqrt(r_0i))) / np.sqrt(2.0 * np.pi))


def estimate_threshold(
    data: OneBitDataset,
    mu: Optional[np.ndarray] = None,
    d_range: Tuple[float, float] = D_RANGE,
    sigma_range: Tuple[float, float] = SIGMA_RANGE,
    grid: int = GRID_SIZE,
    with_thresholds: bool = True,
) -> ThresholdEstimate:
    """Coarse grid seed, then bounded Nelder-Mead on -L."""
    scores = _standard_scores(sample_mean(data) if mu is None else np.asarray(mu, dtype=float))
    evaluations = 0
    clamped = 0

    def objective(params) -> float:
        nonlocal evaluations, clamped
        evaluations += 1
        result = _evaluate(data, scores, float(params[0]), float(params[1]), with_thresholds)
        clamped += result.clamped
        return -result.value

    d_grid = np.linspace(*d_range, grid)
    s_grid = np.linspace(*sigma_range, grid)
    values = np.array([[objective((d, s)) for s in s_grid] for d in d_grid])
    if not np.any(np.isfinite(values)):
        raise InfeasibleError(
            "no feasible grid seed: some r_0i <= 0 everywhere",
            {"d_range": d_range, "sigma_range": sigma_range, "grid": grid},
        )
    a, b = np.unravel_index(int(np.argmin(values)), values.shape)
    seed = np.array([d_grid[a], s_grid[b]])
    log.debug(f"MLE grid seed d={seed[0]:.4f} sigma_tau2={seed[1]:.4f}")
    res = optimize.minimize(
        objective,
        seed,
        method="Nelder-Mead",
        bounds=[d_range, sigma_range],
        options={"xatol": 1e-6, "fatol": 1e-6, "maxiter": 400},
    )
    best = res.x if res.fun <= values[a, b] else seed
    best_value = min(float(res.fun), float(values[a, b]))
    if clamped:
        log.warning(f"{clamped} likelihood terms clamped at log({PROBABILITY_FLOOR:g})")
    log.info(f"Threshold MLE d={best[0]:.4f} sigma_tau2={best[1]:.4f} after {evaluations} evaluations")
    return ThresholdEstimate(
        d=float(best[0]),
        sigma_tau2=float(best[1]),
        log_likelihood=-best_value,
        evaluations=evaluations,
        clamped=clamped,
        grid_d=float(seed[0]),
        grid_sigma_tau2=float(seed[1]),
    )
