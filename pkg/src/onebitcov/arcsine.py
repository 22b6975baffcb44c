"""Modified arcsine law: sign autocorrelation of x - tau for a nonzero threshold mean.

For w = x - tau ~ N(-1 d, P), P = R_x + Sigma, the pair (i, j) gives

    R_y(i, j) = chi * { int_0^{pi/2} 1/beta dtheta + int_0^{pi/2} (D2 - D1) dtheta } - 1

The first integral has a closed form. The second one is what the recovery
backends approximate.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import integrate, optimize
from scipy import special as sp

from onebitcov.errors import BoundedGrowthError, DomainError, NumericError
from onebitcov.special import q_bar_symmetric, q_function

log = logging.getLogger(__name__)

HALF_PI = 0.5 * np.pi

# e^{alpha^2/4beta} is never evaluated above this value
GROWTH_CEILING = 1e6

Q_KERNELS = ("exact", "qbar")


@dataclass(frozen=True)
class PairParams:
    """Variances p_0i, p_0j and covariance p_ij of w for one index pair, plus the threshold mean d."""

    p_0i: float
    p_0j: float
    p_ij: float
    d: float

    def __post_init__(self):
        values = (self.p_0i, self.p_0j, self.p_ij, self.d)
        if not all(np.isfinite(v) for v in values):
            raise DomainError(f"non-finite pair parameters {values}")
        if self.p_0i <= 0.0 or self.p_0j <= 0.0:
            raise DomainError(f"variances must be positive, got p_0i={self.p_0i}, p_0j={self.p_0j}")
        if self.det <= 0.0:
            raise DomainError(
                f"p_0i * p_0j - p_ij^2 must be positive, got {self.det:.3e} (p_ij={self.p_ij})"
            )

    @property
    def det(self) -> float:
        return self.p_0i * self.p_0j - self.p_ij**2

    @property
    def p_m(self) -> float:
        return min(self.p_0i, self.p_0j)

    def with_covariance(self, p_ij: float) -> "PairParams":
        return PairParams(self.p_0i, self.p_0j, p_ij, self.d)


def _check_kernel(q_kernel: str) -> None:
    if q_kernel not in Q_KERNELS:
        raise DomainError(f"q_kernel must be one of {Q_KERNELS}, got {q_kernel!r}")


def alpha_beta(theta, p: PairParams) -> Tuple[np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    s, c = np.sin(theta), np.cos(theta)
    alpha = p.d * (p.p_0i * s + p.p_0j * c - p.p_ij * (c + s)) / p.det
    beta = (p.p_0j * c * c + p.p_0i * s * s - p.p_ij * np.sin(2.0 * theta)) / (2.0 * p.det)
    return alpha, beta


def chi(p: PairParams) -> float:
    det = p.det
    return float(np.exp(-p.d**2 * (p.p_0i + p.p_0j - 2.0 * p.p_ij) / (2.0 * det)) / (np.pi * np.sqrt(det)))


def closed_form_first_part(p: PairParams) -> float:
    """int_0^{pi/2} dtheta / beta = sqrt(det) (pi + 2 asin(p_ij / sqrt(p_0i p_0j)))."""
    rho = np.clip(p.p_ij / np.sqrt(p.p_0i * p.p_0j), -1.0, 1.0)
    return float(np.sqrt(p.det) * (np.pi + 2.0 * np.arcsin(rho)))


def _growth(theta: np.ndarray, alpha: np.ndarray, beta: np.ndarray, ceiling: float) -> np.ndarray:
    exponent = alpha * alpha / (4.0 * beta)
    limit = np.log(ceiling)
    if np.any(exponent > limit):
        k = int(np.argmax(exponent))
        raise BoundedGrowthError(float(np.ravel(theta)[k]), float(np.ravel(exponent)[k]), ceiling)
    return np.exp(exponent)


def _prefactor(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return np.sqrt(np.pi / beta) * alpha / (2.0 * beta)


def _tail(x: np.ndarray, q_kernel: str) -> np.ndarray:
    if q_kernel == "exact":
        return np.asarray(q_function(x))
    return np.asarray(q_bar_symmetric(x))


def integrand_d1(theta, p: PairParams, q_kernel: str = "exact", ceiling: float = GROWTH_CEILING):
    """sqrt(pi/beta) (alpha/beta) Q(alpha/sqrt(2 beta)) e^{alpha^2/4beta}."""
    _check_kernel(q_kernel)
    theta = np.asarray(theta, dtype=float)
    alpha, beta = alpha_beta(theta, p)
    growth = _growth(theta, alpha, beta, ceiling)
    x = alpha / np.sqrt(2.0 * beta)
    out = 2.0 * _prefactor(alpha, beta) * growth * _tail(x, q_kernel)
    return float(out) if out.ndim == 0 else out


def integrand_d2(theta, p: PairParams, ceiling: float = GROWTH_CEILING):
    """sqrt(pi/beta) (alpha/2beta) e^{alpha^2/4beta}."""
    theta = np.asarray(theta, dtype=float)
    alpha, beta = alpha_beta(theta, p)
    growth = _growth(theta, alpha, beta, ceiling)
    out = _prefactor(alpha, beta) * growth
    return float(out) if out.ndim == 0 else out


def integrand_delta(theta, p: PairParams, q_kernel: str = "qbar", ceiling: float = GROWTH_CEILING):
    """D2 - D1; with the default kernel Q is replaced by Q-bar."""
    _check_kernel(q_kernel)
    theta = np.asarray(theta, dtype=float)
    alpha, beta = alpha_beta(theta, p)
    growth = _growth(theta, alpha, beta, ceiling)
    x = alpha / np.sqrt(2.0 * beta)
    out = _prefactor(alpha, beta) * growth * (1.0 - 2.0 * _tail(x, q_kernel))
    return float(out) if out.ndim == 0 else out


def scaled_delta(theta, p: PairParams, q_kernel: str = "exact") -> np.ndarray:
    """chi * (D2 - D1) with chi and e^{alpha^2/4beta} folded into one exponent.

    The folded exponent is never positive, so this form cannot overflow.
    """
    theta = np.asarray(theta, dtype=float)
    alpha, beta = alpha_beta(theta, p)
    offset = -p.d**2 * (p.p_0i + p.p_0j - 2.0 * p.p_ij) / (2.0 * p.det)
    exponent = np.minimum(offset + alpha * alpha / (4.0 * beta), 0.0)
    x = alpha / np.sqrt(2.0 * beta)
    if q_kernel == "exact":
        spread = sp.erf(x / np.sqrt(2.0))
    else:
        spread = 1.0 - 2.0 * np.asarray(q_bar_symmetric(x))
    return _prefactor(alpha, beta) * np.exp(exponent) * spread / (np.pi * np.sqrt(p.det))


def assemble(p: PairParams, delta_integral: float) -> float:
    """chi * closed_form_first_part - 1 + (an integral of scaled_delta)."""
    return chi(p) * closed_form_first_part(p) - 1.0 + delta_integral


def _beta_minimum(p: PairParams) -> float:
    """theta in [0, pi/2] where beta is smallest, i.e. where scaled_delta peaks."""
    a = 0.5 * (p.p_0j - p.p_0i)
    phi = np.arctan2(p.p_ij, a)
    return float(np.clip(0.5 * (np.pi - phi), 0.0, HALF_PI))


def output_autocorrelation_oracle(p: PairParams, tol: float = 1e-10) -> float:
    """R_y(i, j) by adaptive quadrature of the folded integrand.

    Raises NumericError when the quadrature does not reach `tol`.
    """
    if p.d == 0.0:
        return arcsine_law(p.p_ij, p.p_0i, p.p_0j)
    breaks = [t for t in (_beta_minimum(p),) if 0.0 < t < HALF_PI]
    result = integrate.quad(
        scaled_delta,
        0.0,
        HALF_PI,
        args=(p,),
        epsabs=tol,
        epsrel=tol,
        limit=200,
        points=breaks or None,
        full_output=1,
    )
    value, abserr, info = result[:3]
    if len(result) > 3:
        raise NumericError(
            f"oracle quadrature did not converge: {result[3]}",
            {"abserr": abserr, "evaluations": info.get("neval"), "params": p},
        )
    return assemble(p, value)


def arcsine_law(p_ij: float, p_0i: float, p_0j: float) -> float:
    """(2/pi) asin(rho), the zero-threshold case."""
    if p_0i <= 0.0 or p_0j <= 0.0:
        raise DomainError("variances must be positive")
    rho = np.clip(p_ij / np.sqrt(p_0i * p_0j), -1.0, 1.0)
    return float(2.0 / np.pi * np.arcsin(rho))


def expected_autocorrelation(p_matrix: np.ndarray, d: float, tol: float = 1e-10) -> np.ndarray:
    """Model-implied R_y for a whole P = R_x + Sigma; unit diagonal."""
    p_matrix = np.asarray(p_matrix, dtype=float)
    n = p_matrix.shape[0]
    r_y = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            pair = PairParams(p_matrix[i, i], p_matrix[j, j], p_matrix[i, j], d)
            r_y[i, j] = r_y[j, i] = output_autocorrelation_oracle(pair, tol)
    return r_y


@dataclass(frozen=True)
class BoundCheck:
    holds: bool
    theta_max: float
    max_exponent: float
    gamma1: float


def exponent_bound_check(p: PairParams, gamma1: float) -> BoundCheck:
    """Does d^2 * max_theta (alpha_e^2 / 4beta) stay below ln(gamma1)?

    alpha_e is alpha with d factored out. The maximum comes from a coarse grid
    refined by a bounded scalar search around the best grid point.
    """
    if gamma1 <= 1.0:
        raise DomainError(f"gamma1 must be > 1, got {gamma1}")
    unit = PairParams(p.p_0i, p.p_0j, p.p_ij, 1.0)

    def exponent(theta):
        alpha, beta = alpha_beta(theta, unit)
        return alpha * alpha / (4.0 * beta)

    grid = np.linspace(0.0, HALF_PI, 33)
    values = exponent(grid)
    k = int(np.argmax(values))
    best_theta, best = float(grid[k]), float(values[k])
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda t: -float(exponent(t)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10}
        )
        if -res.fun > best:
            best_theta, best = float(res.x), float(-res.fun)
    holds = p.d**2 * best < np.log(gamma1)
    log.debug(f"bound check gamma1={gamma1} max={best:.6f} at theta={best_theta:.4f} holds={holds}")
    return BoundCheck(holds=bool(holds), theta_max=best_theta, max_exponent=best, gamma1=gamma1)
