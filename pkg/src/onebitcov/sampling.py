"""One-bit quantization against time-varying Gaussian thresholds and sign-data statistics."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from onebitcov.errors import ValidationError
from onebitcov.process import Ensemble, check_covariance, symmetric_factor

log = logging.getLogger(__name__)


@dataclass
class ThresholdSpec:
    """tau ~ N(1 d, sigma)."""

    d: float
    sigma: np.ndarray

    @classmethod
    def scalar(cls, d: float, sigma_tau2: float, n: int) -> "ThresholdSpec":
        if sigma_tau2 < 0.0:
            raise ValidationError("must be >= 0", "threshold.sigma_tau2")
        return cls(d=float(d), sigma=sigma_tau2 * np.eye(n))

    @property
    def n(self) -> int:
        return self.sigma.shape[0]

    @property
    def sigma_tau2(self) -> Optional[float]:
        """Common diagonal value when sigma is a scalar multiple of I, else None."""
        diag = np.diag(self.sigma)
        off = self.sigma - np.diag(diag)
        if np.allclose(diag, diag[0]) and not np.any(off):
            return float(diag[0])
        return None

    def validate(self) -> None:
        if not np.isfinite(self.d):
            raise ValidationError("must be finite", "threshold.d")
        if np.any(np.diag(self.sigma) < 0.0):
            raise ValidationError("diagonal entries must be >= 0", "threshold.sigma")
        check_covariance(self.sigma, "threshold.sigma")


@dataclass
class OneBitDataset:
    """signs and thresholds are n x n_x, one realization per column."""

    signs: np.ndarray
    thresholds: np.ndarray
    spec: ThresholdSpec
    seed: int

    @property
    def n(self) -> int:
        return self.signs.shape[0]

    @property
    def n_x(self) -> int:
        return self.signs.shape[1]


def one_bit(samples: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """+1 where x >= tau, -1 otherwise (ties go to +1)."""
    return np.where(samples >= thresholds, 1, -1).astype(np.int8)


def quantize(ensemble: Ensemble, spec: ThresholdSpec, seed: int) -> OneBitDataset:
    spec.validate()
    if spec.n != ensemble.n:
        raise ValidationError(
            f"threshold dimension {spec.n} does not match ensemble dimension {ensemble.n}",
            "threshold.sigma",
        )
    rng = np.random.default_rng(seed)
    dither = rng.standard_normal(ensemble.samples.shape)
    thresholds = spec.d + symmetric_factor(spec.sigma) @ dither
    signs = one_bit(ensemble.samples, thresholds)
    log.debug(f"Quantized n={ensemble.n} n_x={ensemble.n_x} d={spec.d} seed={seed}")
    return OneBitDataset(signs=signs, thresholds=thresholds, spec=spec, seed=seed)


def sample_mean(data: OneBitDataset) -> np.ndarray:
    return data.signs.mean(axis=1, dtype=float)


def sample_autocorrelation(data: OneBitDataset) -> np.ndarray:
    y = data.signs.astype(float)
    r_y = (y @ y.T) / data.n_x
    r_y = 0.5 * (r_y + r_y.T)
    np.fill_diagonal(r_y, 1.0)
    return r_y


def sample_cross_correlation(data: OneBitDataset) -> np.ndarray:
    """(1/n_x) sum_k y(k) tau(k)^T; entry (a, b) pairs sign index a with threshold index b."""
    return (data.signs.astype(float) @ data.thresholds.T) / data.n_x
