"""Cross-correlation between sign data and the analog input for non-stationary signals.

With w = x - tau, E{y_a x_b} = E{y_a tau_b} + E{y_a w_b}. The first term comes
from the sample cross-correlation of signs and thresholds, the second from
the recovered P through two coefficients that depend on the sign-side
variance only.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from onebitcov.arcsine import PairParams
from onebitcov.errors import DomainError, NumericError
from onebitcov.sampling import OneBitDataset, sample_cross_correlation
from onebitcov.special import SQRT_PI, erf, upper_incomplete_gamma

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BussgangCoefficients:
    eps1: float
    eps2: float
    index: Optional[int] = None


def _check_variance(p_0: float) -> None:
    if not np.isfinite(p_0) or p_0 <= 0.0:
        raise DomainError(f"variance must be positive, got {p_0}")


def bussgang_coefficients(p_0j: float, d: float, index: Optional[int] = None) -> BussgangCoefficients:
    _check_variance(p_0j)
    x = d * d / (2.0 * p_0j)
    eps1 = np.sqrt(2.0 / (np.pi * p_0j)) * upper_incomplete_gamma(1.0, x) - d / (SQRT_PI * p_0j) * (
        upper_incomplete_gamma(0.5, x) - SQRT_PI
    )
    eps2 = -erf(d / np.sqrt(2.0 * p_0j)) / p_0j
    return BussgangCoefficients(float(eps1), float(eps2), index)


def bussgang_integral_coefficients(p_0j: float, d: float, tol: float = 1e-12) -> BussgangCoefficients:
    """eps1 = E{w sign(w)} / p_0j and eps2 = E{sign(w)} / p_0j for w ~ N(-d, p_0j), by quadrature."""
    _check_variance(p_0j)
    norm = 1.0 / np.sqrt(2.0 * np.pi * p_0j**3)

    def density(w):
        return np.exp(-((w + d) ** 2) / (2.0 * p_0j))

    def half_line(fn, lo, hi):
        value, abserr = integrate.quad(fn, lo, hi, epsabs=tol, epsrel=tol, limit=200)
        if not np.isfinite(value):
            raise NumericError("Bussgang coefficient quadrature failed", {"p_0j": p_0j, "d": d, "abserr": abserr})
        return value

    eps1 = norm * (half_line(lambda w: w * density(w), 0.0, np.inf) - half_line(lambda w: w * density(w), -np.inf, 0.0))
    eps2 = norm * (half_line(density, 0.0, np.inf) - half_line(density, -np.inf, 0.0))
    return BussgangCoefficients(float(eps1), float(eps2))


def bussgang_bracket(coeffs: BussgangCoefficients, d: float, p_ij: float, p_0j: float) -> float:
    """eps1 p_ij - eps2 d (p_0j - p_ij)."""
    return coeffs.eps1 * p_ij - coeffs.eps2 * d * (p_0j - p_ij)


def bussgang_bracket_general(coeffs: BussgangCoefficients, d: float, r_x_ij: float, sigma_ij: float, p_0j: float) -> float:
    """(eps1 + d eps2)(R_x(i, j) + Sigma(i, j)) - d eps2 p_0j."""
    return (coeffs.eps1 + d * coeffs.eps2) * (r_x_ij + sigma_ij) - d * coeffs.eps2 * p_0j


def cross_correlation_entry(p: PairParams, r_ytau_ij: float, sigma_ij: float = 0.0) -> float:
    """R_yx for a sign index with variance p.p_0j and an analog index at covariance p.p_ij."""
    coeffs = bussgang_coefficients(p.p_0j, p.d)
    return r_ytau_ij + bussgang_bracket_general(coeffs, p.d, p.p_ij - sigma_ij, sigma_ij, p.p_0j)


def cross_correlation_diagonal(p_0i: float, d: float, r_ytau_ii: float) -> float:
    _check_variance(p_0i)
    x = d * d / (2.0 * p_0i)
    return float(
        r_ytau_ii
        + np.sqrt(2.0 * p_0i / np.pi) * upper_incomplete_gamma(1.0, x)
        - d / SQRT_PI * upper_incomplete_gamma(0.5, x)
        + d
    )


def diagonal_erf_form(p_0i: float, d: float) -> float:
    """E{w_i y_i} = d erf(d / sqrt(2 p_0i)) + sqrt(2 p_0i / pi) e^{-d^2 / 2 p_0i}."""
    _check_variance(p_0i)
    return float(d * erf(d / np.sqrt(2.0 * p_0i)) + np.sqrt(2.0 * p_0i / np.pi) * np.exp(-d * d / (2.0 * p_0i)))


def recover_cross_matrix(data: OneBitDataset, p_hat: np.ndarray, r_ytau: Optional[np.ndarray] = None) -> np.ndarray:
    """R_yx with entry (a, b) pairing sign index a and analog index b.

    NaN entries of p_hat, or a NaN sign-side variance, leave NaN in the result.
    """
    d = data.spec.d
    sigma = data.spec.sigma
    r_ytau = sample_cross_correlation(data) if r_ytau is None else r_ytau
    n = data.n
    out = np.full((n, n), np.nan)
    for a in range(n):
        p_aa = p_hat[a, a]
        if not np.isfinite(p_aa) or p_aa <= 0.0:
            log.warning(f"Cross-correlation row {a} unrecovered: sign-side variance {p_aa}")
            continue
        out[a, a] = cross_correlation_diagonal(p_aa, d, r_ytau[a, a])
        for b in range(n):
            if b == a or not np.isfinite(p_hat[a, b]) or not p_hat[b, b] > 0.0:
                continue
            pair = PairParams(p_0i=p_hat[b, b], p_0j=p_aa, p_ij=p_hat[a, b], d=d)
            out[a, b] = cross_correlation_entry(pair, r_ytau[a, b], sigma[a, b])
    return out


def expected_cross_correlation(r_x: np.ndarray, sigma: np.ndarray, d: float) -> np.ndarray:
    """Model R_yx: E{sign(w_a) x_b} = R_x(a, b) sqrt(2 / (pi p_0a)) e^{-d^2 / 2 p_0a}, x independent of tau."""
    p_0 = np.diag(r_x) + np.diag(sigma)
    if np.any(p_0 <= 0.0):
        raise DomainError("diagonal of R_x + Sigma must be positive")
    gain = np.sqrt(2.0 / (np.pi * p_0)) * np.exp(-d * d / (2.0 * p_0))
    return gain[:, None] * np.asarray(r_x, dtype=float)
