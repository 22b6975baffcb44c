"""Non-stationary zero-mean Gaussian sources and their true covariance matrices."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from onebitcov.errors import NumericError, ValidationError

log = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-10

# Non-Toeplitz covariance used for the backend comparison table.
BENCHMARK_COVARIANCE = np.array(
    [
        [+0.5040, -0.0065, +0.0015, -0.0036, +0.0044],
        [-0.0065, +0.2565, -0.0034, +0.0086, +0.0031],
        [+0.0015, -0.0034, +0.3298, +0.0063, +0.0031],
        [-0.0036, +0.0086, +0.0063, +0.6376, -0.0062],
        [+0.0044, +0.0031, +0.0031, -0.0062, +0.4552],
    ]
)


class ProcessKind(str, Enum):
    WIENER = "wiener"
    GARCH = "garch"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class ProcessModel:
    """A non-stationary Gaussian source of dimension n.

    Wiener uses (v_min, v_max), GARCH uses (zeta0, zeta1, zeta2) and a seed for
    its variance path, explicit uses `matrix`.
    """

    kind: ProcessKind
    n: int
    v_min: float = 0.2
    v_max: float = 0.8
    zeta: Tuple[float, float, float] = (0.1, 0.2, 0.3)
    garch_seed: int = 0
    matrix: Optional[np.ndarray] = field(default=None, compare=False)

    @classmethod
    def wiener(cls, n: int, v_min: float = 0.2, v_max: float = 0.8) -> "ProcessModel":
        return cls(ProcessKind.WIENER, n, v_min=v_min, v_max=v_max)

    @classmethod
    def garch(cls, n: int, zeta0: float, zeta1: float, zeta2: float, seed: int = 0) -> "ProcessModel":
        return cls(ProcessKind.GARCH, n, zeta=(zeta0, zeta1, zeta2), garch_seed=seed)

    @classmethod
    def explicit(cls, matrix) -> "ProcessModel":
        arr = np.array(matrix, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError("covariance matrix must be square", "process.matrix")
        return cls(ProcessKind.EXPLICIT, arr.shape[0], matrix=arr)

    def validate(self) -> None:
        if self.n < 1:
            raise ValidationError("dimension must be a positive integer", "process.n")
        if self.kind == ProcessKind.WIENER:
            if not 0.0 < self.v_min <= self.v_max:
                raise ValidationError("need 0 < v_min <= v_max", "process.v_min")
        elif self.kind == ProcessKind.GARCH:
            z0, z1, z2 = self.zeta
            if z0 <= 0.0 or z1 < 0.0 or z2 < 0.0:
                raise ValidationError("need zeta0 > 0 and zeta1, zeta2 >= 0", "process.garch")
            if z1 + z2 >= 1.0:
                raise ValidationError("need zeta1 + zeta2 < 1", "process.garch")
        elif self.kind == ProcessKind.EXPLICIT:
            if self.matrix is None or self.matrix.shape != (self.n, self.n):
                raise ValidationError("explicit model needs an n x n matrix", "process.matrix")
            check_covariance(self.matrix, "process.matrix")
        else:
            raise ValidationError(f"unknown process kind {self.kind!r}", "process.kind")


@dataclass
class Ensemble:
    """samples: n x n_x, one realization per column; truth: n x n."""

    samples: np.ndarray
    truth: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def n_x(self) -> int:
        return self.samples.shape[1]


def check_covariance(matrix: np.ndarray, path: str = "covariance") -> None:
    """Symmetric and PSD within the eigenvalue floor -1e-10 * trace."""
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12):
        raise ValidationError("matrix is not symmetric", path)
    floor = -PSD_TOLERANCE * max(float(np.trace(matrix)), 1.0)
    smallest = float(np.linalg.eigvalsh(matrix)[0])
    if smallest < floor:
        raise ValidationError(f"matrix is not PSD (smallest eigenvalue {smallest:.3e})", path)


def variance_ramp(n: int, v_min: float, v_max: float) -> np.ndarray:
    if n == 1:
        return np.array([v_min])
    return np.linspace(v_min, v_max, n)


def garch_variances(zeta: Tuple[float, float, float], n: int, rng: np.random.Generator) -> np.ndarray:
    """Conditional variance path sigma2_t = z0 + z1 sigma2_{t-1} + z2 eps2_{t-1}.

    Starts from the unconditional variance z0 / (1 - z1 - z2).
    """
    z0, z1, z2 = zeta
    sigma2 = np.empty(n)
    prev = z0 / (1.0 - z1 - z2)
    eps_prev = np.sqrt(prev) * rng.standard_normal()
    for t in range(n):
        sigma2[t] = z0 + z1 * prev + z2 * eps_prev**2
        prev = sigma2[t]
        eps_prev = np.sqrt(prev) * rng.standard_normal()
    return sigma2


def truth_covariance(model: ProcessModel) -> np.ndarray:
    model.validate()
    if model.kind == ProcessKind.EXPLICIT:
        return model.matrix.copy()
    if model.kind == ProcessKind.WIENER:
        # Brownian correlation min(i,j)/sqrt(ij), rescaled onto the variance ramp
        idx = np.arange(1, model.n + 1, dtype=float)
        corr = np.minimum.outer(idx, idx) / np.sqrt(np.outer(idx, idx))
        sd = np.sqrt(variance_ramp(model.n, model.v_min, model.v_max))
        cov = corr * np.outer(sd, sd)
        return 0.5 * (cov + cov.T)
    rng = np.random.default_rng(model.garch_seed)
    return np.diag(garch_variances(model.zeta, model.n, rng))


def symmetric_factor(matrix: np.ndarray) -> np.ndarray:
    """L with L @ L.T == matrix, from an eigendecomposition with clipped eigenvalues."""
    tol = PSD_TOLERANCE * max(float(np.trace(matrix)), 1.0)
    values, vectors = np.linalg.eigh(matrix)
    if values[0] < -tol:
        raise NumericError(
            "covariance is not PSD within tolerance",
            {"smallest_eigenvalue": float(values[0]), "tolerance": tol},
        )
    return vectors * np.sqrt(np.clip(values, 0.0, None))


def sample_ensemble(model: ProcessModel, n_x: int, seed: int) -> Ensemble:
    if n_x < 1:
        raise ValidationError("n_x must be >= 1", "nx")
    truth = truth_covariance(model)
    factor = symmetric_factor(truth)
    rng = np.random.default_rng(seed)
    samples = factor @ rng.standard_normal((model.n, n_x))
    log.debug(f"Sampled {model.kind.value} ensemble n={model.n} n_x={n_x} seed={seed}")
    return Ensemble(samples=samples, truth=truth, seed=seed)
