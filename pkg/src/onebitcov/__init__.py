"""Covariance recovery of non-stationary Gaussian processes from one-bit samples with time-varying thresholds."""

__version__ = "0.1.0"

from onebitcov.arcsine import PairParams, arcsine_law, expected_autocorrelation, output_autocorrelation_oracle
from onebitcov.errors import OneBitError
from onebitcov.process import ProcessModel, sample_ensemble
from onebitcov.recover import BackendKind, RecoveryReport, assemble_covariance
from onebitcov.sampling import OneBitDataset, ThresholdSpec, quantize

__all__ = [
    "BackendKind",
    "OneBitDataset",
    "OneBitError",
    "PairParams",
    "ProcessModel",
    "RecoveryReport",
    "ThresholdSpec",
    "__version__",
    "arcsine_law",
    "assemble_covariance",
    "expected_autocorrelation",
    "output_autocorrelation_oracle",
    "quantize",
    "sample_ensemble",
]
