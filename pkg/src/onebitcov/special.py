"""Scalar special functions: Q, its inverse, erf, incomplete gamma, Q-bar, Gaussian CDF.

All functions accept floats or numpy arrays and return the same shape.
"""

import logging
from typing import Union

import numpy as np
from scipy import special as sp

from onebitcov.errors import DomainError

log = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SQRT2 = np.sqrt(2.0)
SQRT_PI = np.sqrt(np.pi)


def _finite(x: ArrayLike, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _out(arr: np.ndarray) -> ArrayLike:
    return float(arr) if arr.ndim == 0 else arr


def q_function(x: ArrayLike) -> ArrayLike:
    """Gaussian tail probability Q(x) = P(Z > x)."""
    arr = _finite(x, "x")
    return _out(0.5 * sp.erfc(arr / SQRT2))


def q_inverse(p: ArrayLike) -> ArrayLike:
    """Inverse of Q on the open interval (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError("q_inverse requires 0 < p < 1")
    x = -sp.ndtri(arr)
    # one Newton step against q_function keeps the round trip tight
    density = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    x = x + (0.5 * sp.erfc(x / SQRT2) - arr) / density
    return _out(x)


def erf(x: ArrayLike) -> ArrayLike:
    arr = _finite(x, "x")
    return _out(sp.erf(arr))


def upper_incomplete_gamma(s: float, x: ArrayLike) -> ArrayLike:
    """Gamma(s, x) for the two orders the Bussgang coefficients need.

    Gamma(1, x) = e^{-x};  Gamma(1/2, x) = sqrt(pi) * (1 - erf(sqrt(x))).
    """
    arr = _finite(x, "x")
    if np.any(arr < 0.0):
        raise DomainError("upper_incomplete_gamma requires x >= 0")
    if s == 1.0:
        return _out(np.exp(-arr))
    if s == 0.5:
        return _out(SQRT_PI * sp.erfc(np.sqrt(arr)))
    raise DomainError(f"upper_incomplete_gamma supports s in {{1/2, 1}}, got {s!r}")


def q_bar(x: ArrayLike) -> ArrayLike:
    """Exponential approximation (1/12) e^{-x^2/2} + (1/4) e^{-2x^2/3}, x > 0."""
    arr = _finite(x, "x")
    if np.any(arr <= 0.0):
        raise DomainError("q_bar is defined for x > 0 only")
    return _out(np.exp(-0.5 * arr * arr) / 12.0 + 0.25 * np.exp(-2.0 * arr * arr / 3.0))


def q_bar_symmetric(x: ArrayLike) -> ArrayLike:
    """q_bar extended to the whole line through Q(-x) = 1 - Q(x); 1/2 at zero."""
    arr = _finite(x, "x")
    mag = np.abs(arr)
    tail = np.exp(-0.5 * mag * mag) / 12.0 + 0.25 * np.exp(-2.0 * mag * mag / 3.0)
    out = np.where(arr > 0.0, tail, np.where(arr < 0.0, 1.0 - tail, 0.5))
    return _out(out)


def gaussian_cdf(z: ArrayLike, zeta: float) -> ArrayLike:
    """CDF of a zero-mean Gaussian with standard deviation zeta."""
    if not np.isfinite(zeta) or zeta <= 0.0:
        raise DomainError("gaussian_cdf requires zeta > 0")
    arr = _finite(z, "z")
    return _out(sp.ndtr(arr / zeta))
