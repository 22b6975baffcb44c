"""Log-residual criterion shared by all backends and the bounded scalar solver used by GL, MC and the oracle."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np
from scipy import optimize

from onebitcov.errors import OneBitError, SolverError

log = logging.getLogger(__name__)

# |residual|^2 is clamped here so an exact fit does not return -inf
RESIDUAL_FLOOR = 1e-300
LOG_FLOOR = float(np.log(RESIDUAL_FLOOR))

BRENT_XATOL = 1e-10
SEED_GRID = 41


@dataclass
class SolveResult:
    """Outcome of one p_ij solve.

    status is "ok", "fallback" when the grid seeding overrode the bounded search,
    or "unrecovered" when every evaluation failed.
    """

    p_hat: float
    criterion: float
    iterations: int
    status: str = "ok"
    diagnostics: Dict[str, object] = field(default_factory=dict)


def log_criterion(r_y_ij: float, model_value: float) -> float:
    residual = (r_y_ij - model_value) ** 2
    return float(np.log(max(residual, RESIDUAL_FLOOR)))


def safe(fn: Callable[[float], float]) -> Callable[[float], float]:
    """Numeric failures inside the box count as +inf."""

    def wrapped(x: float) -> float:
        try:
            value = fn(x)
        except OneBitError as exc:
            log.debug(f"criterion evaluation failed at p_ij={x:.6g}: {exc}")
            return np.inf
        return value if np.isfinite(value) else np.inf

    return wrapped


def criterion_grid(fn: Callable[[float], float], box: Tuple[float, float], n: int) -> Tuple[np.ndarray, np.ndarray]:
    grid = np.linspace(box[0], box[1], n)
    values = np.array([fn(x) for x in grid])
    return grid, values


def count_local_minima(values: np.ndarray) -> int:
    finite = np.where(np.isfinite(values), values, np.inf)
    inner = (finite[1:-1] < finite[:-2]) & (finite[1:-1] < finite[2:])
    edges = int(finite[0] < finite[1]) + int(finite[-1] < finite[-2])
    return int(np.count_nonzero(inner)) + edges


def bounded_minimize(fn: Callable[[float], float], box: Tuple[float, float]) -> SolveResult:
    """Golden-section search with parabolic steps on `box`, checked against a coarse grid.

    If the grid holds a point better than the bounded search result the
    landscape is not unimodal; the search is repeated around the best grid
    point and the result is flagged "fallback".
    """
    fn = safe(fn)
    lo, hi = box
    res = optimize.minimize_scalar(fn, bounds=(lo, hi), method="bounded", options={"xatol": BRENT_XATOL, "maxiter": 500})
    iterations = int(res.nfev)
    best_x, best_f = float(res.x), float(res.fun)
    grid, values = criterion_grid(fn, box, SEED_GRID)
    iterations += SEED_GRID
    k = int(np.argmin(values))
    status = "ok"
    if values[k] < best_f:
        a, b = grid[max(k - 1, 0)], grid[min(k + 1, SEED_GRID - 1)]
        local = optimize.minimize_scalar(fn, bounds=(a, b), method="bounded", options={"xatol": BRENT_XATOL, "maxiter": 500})
        iterations += int(local.nfev)
        best_x, best_f = (float(local.x), float(local.fun)) if local.fun <= values[k] else (float(grid[k]), float(values[k]))
        status = "fallback"
        log.debug(f"bounded search was not global; refined around grid point {grid[k]:.6g}")
    if not np.isfinite(best_f):
        raise SolverError("criterion is not finite anywhere on the feasible box", {"box": box})
    return SolveResult(p_hat=best_x, criterion=best_f, iterations=iterations, status=status)
