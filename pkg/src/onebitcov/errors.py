"""Exceptions raised by onebitcov.

Library code raises; only the CLI decides how to report.
"""

from typing import Any, Dict, Optional


class OneBitError(Exception):
    """Base class for every error raised by the package."""

    def to_record(self) -> Dict[str, Any]:
        """Machine-readable form written by the CLI on failure."""
        return {"kind": type(self).__name__, "message": str(self)}


class DomainError(OneBitError, ValueError):
    """An argument lies outside the function's domain."""


class ValidationError(OneBitError, ValueError):
    """Invalid model, threshold spec or configuration."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)

    def to_record(self) -> Dict[str, Any]:
        record = super().to_record()
        record["path"] = self.path or ""
        return record


class NumericError(OneBitError, ArithmeticError):
    """A numerical procedure failed; `diagnostics` says where."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)

    def to_record(self) -> Dict[str, Any]:
        record = super().to_record()
        record["diagnostics"] = repr(self.diagnostics)
        return record


class BoundedGrowthError(NumericError):
    """e^{alpha^2 / 4 beta} exceeded the growth ceiling at `theta`."""

    def __init__(self, theta: float, exponent: float, ceiling: float):
        self.theta = theta
        super().__init__(
            f"exponential term exceeds ceiling {ceiling:g} at theta={theta:.6f} "
            f"(exponent {exponent:.3f})",
            {"theta": theta, "exponent": exponent, "ceiling": ceiling},
        )


class SaturationError(DomainError):
    """Sample mean of a sign row is exactly +1 or -1."""

    def __init__(self, index: int, mu: float):
        self.index = index
        super().__init__(f"sign mean saturated at index {index} (mu={mu:+.0f})")


class DivergenceError(DomainError):
    """Sign mean is zero while the threshold mean is not: variance diverges."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"zero sign mean at index {index} with d != 0; variance diverges")


class PadeFitError(NumericError):
    """The [1/2] Pade system is singular or the fitted piece has a pole."""

    def __init__(self, piece: str, reason: str):
        self.piece = piece
        super().__init__(f"Pade fit failed on piece {piece}: {reason}", {"piece": piece})


class SolverError(NumericError):
    """Every start of a p_ij solve failed."""


class InfeasibleError(NumericError):
    """No feasible seed for the threshold MLE."""
