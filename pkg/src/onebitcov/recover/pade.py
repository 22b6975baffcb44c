"""Piecewise [1/2] Pade backend.

D1 and D2 are each replaced on three pieces of [0, pi/2] by rational functions
(e + s theta) / (k + g theta + h theta^2) whose integrals are known in closed
form. Taylor coefficients at the expansion points come from central finite
differences with one Richardson step.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np
from scipy.interpolate import pade

from onebitcov.arcsine import (
    HALF_PI,
    BoundCheck,
    PairParams,
    arcsine_law,
    chi,
    closed_form_first_part,
    exponent_bound_check,
    integrand_d1,
    integrand_d2,
    integrand_delta,
)
from onebitcov.errors import DomainError, PadeFitError, SolverError
from onebitcov.recover.criterion import SolveResult, log_criterion, safe
from onebitcov.recover.variance import feasible_box, p_feasible_bound

log = logging.getLogger(__name__)

# (name, lower, upper, expansion point)
PIECES = (
    ("left", 0.0, np.pi / 8, 0.0),
    ("center", np.pi / 8, 3 * np.pi / 8, np.pi / 4),
    ("right", 3 * np.pi / 8, HALF_PI, HALF_PI),
)

TAYLOR_STEP = np.pi / 512
POLE_GRID = 100
DENOMINATOR_FLOOR = 1e-8
MAX_ITERATIONS = 200

_OFFSETS = np.array([-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0])


@dataclass(frozen=True)
class PadePiece:
    name: str
    lo: float
    hi: float
    theta0: float
    e: float
    s: float
    k: float
    g: float
    h: float

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (self.e + self.s * theta) / (self.k + self.g * theta + self.h * theta * theta)

    def integral(self) -> float:
        return rational_integral(self.e, self.s, self.k, self.g, self.h, self.lo, self.hi)


def taylor_coefficients(fn: Callable[[np.ndarray], np.ndarray], theta0: float, step: float = TAYLOR_STEP) -> np.ndarray:
    """c0..c3 of fn around theta0 (c_n = f^(n) / n!)."""
    f = np.asarray(fn(theta0 + step * _OFFSETS), dtype=float)
    return _taylor_from_samples(f, step)


def _taylor_from_samples(f: np.ndarray, step: float) -> np.ndarray:
    fm2, fm1, fmh, f0, fph, fp1, fp2 = f

    def derivatives(fp, fm, fpp, fmm, h):
        d1 = (fp - fm) / (2.0 * h)
        d2 = (fp - 2.0 * f0 + fm) / (h * h)
        d3 = (fpp - 2.0 * fp + 2.0 * fm - fmm) / (2.0 * h**3)
        return np.array([d1, d2, d3])

    coarse = derivatives(fp1, fm1, fp2, fm2, step)
    fine = derivatives(fph, fmh, fp1, fm1, 0.5 * step)
    d1, d2, d3 = (4.0 * fine - coarse) / 3.0
    return np.array([f0, d1, d2 / 2.0, d3 / 6.0])


def _ascending(poly: np.poly1d, size: int) -> np.ndarray:
    coeffs = np.zeros(size)
    raw = poly.coeffs[::-1]
    coeffs[: len(raw)] = raw
    return coeffs


def pade_piece(coeffs: Sequence[float], name: str, lo: float, hi: float, theta0: float) -> PadePiece:
    """[1/2] Pade approximant of a Taylor series at theta0, rewritten in absolute theta."""
    c = np.asarray(coeffs, dtype=float)
    if np.max(np.abs(c)) < 1e-14:
        return PadePiece(name, lo, hi, theta0, 0.0, 0.0, 1.0, 0.0, 0.0)
    try:
        num, den = pade(c, 2, 1)
    except np.linalg.LinAlgError as exc:
        raise PadeFitError(name, f"singular coefficient system ({exc})") from exc
    p0, p1 = _ascending(num, 2)
    _, q1, q2 = _ascending(den, 3)
    if not np.all(np.isfinite([p0, p1, q1, q2])):
        raise PadeFitError(name, "non-finite coefficients")
    # roots of the local denominator 1 + q1 t + q2 t^2 inside the piece are poles
    local_roots = np.roots([q2, q1, 1.0]) if (q2 or q1) else np.array([])
    for root in local_roots:
        if abs(root.imag) < 1e-12 and lo <= theta0 + root.real <= hi:
            raise PadeFitError(name, f"pole at theta={theta0 + root.real:.6f}")
    piece = PadePiece(
        name=name,
        lo=lo,
        hi=hi,
        theta0=theta0,
        e=p0 - p1 * theta0,
        s=p1,
        k=1.0 - q1 * theta0 + q2 * theta0**2,
        g=q1 - 2.0 * q2 * theta0,
        h=q2,
    )
    grid = np.linspace(lo, hi, POLE_GRID)
    den_values = piece.k + piece.g * grid + piece.h * grid * grid
    if np.min(den_values) <= DENOMINATOR_FLOOR:
        raise PadeFitError(name, f"denominator reaches {np.min(den_values):.3e} on the piece")
    return piece


def rational_integral(e: float, s: float, k: float, g: float, h: float, a: float, b: float) -> float:
    """int_a^b (e + s t) / (k + g t + h t^2) dt for a denominator without roots in [a, b]."""
    span = max(abs(a), abs(b), 1.0)
    scale = abs(k) + abs(g) * span + abs(h) * span**2
    if abs(h) * span**2 <= 1e-13 * scale:
        if abs(g) * span <= 1e-13 * scale:
            return (e * (b - a) + 0.5 * s * (b * b - a * a)) / k
        logs = np.log(abs(k + g * b)) - np.log(abs(k + g * a))
        return s / g * (b - a) + (e - s * k / g) / g * logs

    def den(t):
        return h * t * t + g * t + k

    disc = 4.0 * h * k - g * g
    tol = 1e-13 * (g * g + abs(4.0 * h * k))
    if disc > tol:
        root = np.sqrt(disc)
        logs = np.log(abs(den(b))) - np.log(abs(den(a)))
        atans = np.arctan((2.0 * h * b + g) / root) - np.arctan((2.0 * h * a + g) / root)
        return float(s / (2.0 * h) * logs + (2.0 * e * h - s * g) / (h * root) * atans)
    if disc < -tol:
        root = np.sqrt(-disc)
        r1, r2 = (-g + root) / (2.0 * h), (-g - root) / (2.0 * h)
        c1 = (e + s * r1) / (h * (r1 - r2))
        c2 = (e + s * r2) / (h * (r2 - r1))
        return float(
            c1 * (np.log(abs(b - r1)) - np.log(abs(a - r1))) + c2 * (np.log(abs(b - r2)) - np.log(abs(a - r2)))
        )
    r = -g / (2.0 * h)
    lin = s / h * (np.log(abs(b - r)) - np.log(abs(a - r)))
    return float(lin - (e + s * r) / h * (1.0 / (b - r) - 1.0 / (a - r)))


def _target(p: PairParams, which: str, q_kernel: str) -> Callable[[np.ndarray], np.ndarray]:
    if which == "D1":
        return lambda t: integrand_d1(t, p, q_kernel)
    if which == "D2":
        return lambda t: integrand_d2(t, p)
    if which == "delta":
        return lambda t: integrand_delta(t, p, q_kernel)
    raise DomainError(f"which must be D1, D2 or delta, got {which!r}")


def pade_fit(p: PairParams, which: str, q_kernel: str = "exact") -> List[PadePiece]:
    fn = _target(p, which, q_kernel)
    nodes = np.concatenate([theta0 + TAYLOR_STEP * _OFFSETS for _, _, _, theta0 in PIECES])
    values = np.asarray(fn(nodes)).reshape(len(PIECES), len(_OFFSETS))
    pieces = []
    for (name, lo, hi, theta0), samples in zip(PIECES, values):
        coeffs = _taylor_from_samples(samples, TAYLOR_STEP)
        pieces.append(pade_piece(coeffs, f"{which}/{name}", lo, hi, theta0))
    return pieces


def evaluate_pieces(pieces: Sequence[PadePiece], theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    conditions = [(theta >= piece.lo) & (theta <= piece.hi) for piece in pieces]
    choices = [piece(theta) for piece in pieces]
    return np.select(conditions, choices, default=np.nan)


def pade_integral(p: PairParams, q_kernel: str = "exact") -> float:
    """H_n: the modified arcsine law with D1 and D2 replaced by their piecewise Pade fits."""
    if p.d == 0.0:
        return arcsine_law(p.p_ij, p.p_0i, p.p_0j)
    d1 = sum(piece.integral() for piece in pade_fit(p, "D1", q_kernel))
    d2 = sum(piece.integral() for piece in pade_fit(p, "D2", q_kernel))
    return chi(p) * (closed_form_first_part(p) + d2 - d1) - 1.0


def criterion_pade(r_y_ij: float, p_0i: float, p_0j: float, p_ij: float, d: float, q_kernel: str = "exact") -> float:
    return log_criterion(r_y_ij, pade_integral(PairParams(p_0i, p_0j, p_ij, d), q_kernel))


def solve_pade(
    r_y_ij: float,
    p_0i: float,
    p_0j: float,
    d: float,
    n_starts: int = 8,
    seed: int = 0,
    q_kernel: str = "exact",
) -> SolveResult:
    """Multi-start projected gradient descent on criterion_pade.

    The gradient is a central difference; the step length doubles on success
    and halves on failure, and iterates are clipped into the feasible box.
    """
    if n_starts < 1:
        raise DomainError("n_starts must be >= 1")
    lo, hi = feasible_box(p_0i, p_0j)
    p_m = p_feasible_bound(p_0i, p_0j)
    fn = safe(lambda x: criterion_pade(r_y_ij, p_0i, p_0j, x, d, q_kernel))
    rng = np.random.default_rng(seed)
    starts = rng.uniform(lo, hi, n_starts)
    runs: List[Tuple[float, float, int]] = []
    total = 0
    for start in starts:
        x, fx, iterations = _descend(fn, float(start), lo, hi, p_m)
        total += iterations
        runs.append((x, fx, iterations))
    finite = [run for run in runs if np.isfinite(run[1])]
    if not finite:
        raise SolverError(
            "every Pade start diverged",
            {"starts": starts.tolist(), "r_y_ij": r_y_ij, "p_0i": p_0i, "p_0j": p_0j, "d": d},
        )
    x, fx, _ = min(finite, key=lambda run: run[1])
    return SolveResult(p_hat=x, criterion=fx, iterations=total, diagnostics={"starts": len(starts), "converged": len(finite)})


def _descend(fn: Callable[[float], float], x: float, lo: float, hi: float, p_m: float) -> Tuple[float, float, int]:
    fx = fn(x)
    if not np.isfinite(fx):
        return x, fx, 0
    step = 0.1 * (hi - lo)
    h_max = 1e-6 * p_m
    iterations = 0
    while iterations < MAX_ITERATIONS and step > 1e-12 * p_m:
        iterations += 1
        h = min(h_max, 0.25 * step)
        xp, xm = min(x + h, hi), max(x - h, lo)
        fp, fm = fn(xp), fn(xm)
        if np.isfinite(fp) and np.isfinite(fm):
            grad = (fp - fm) / (xp - xm)
        elif np.isfinite(fp):
            grad = (fp - fx) / (xp - x) if xp > x else 0.0
        elif np.isfinite(fm):
            grad = (fx - fm) / (x - xm) if x > xm else 0.0
        else:
            break
        if grad == 0.0:
            break
        trial = float(np.clip(x - step * np.sign(grad), lo, hi))
        ft = fn(trial)
        if ft < fx:
            x, fx = trial, ft
            step = min(2.0 * step, hi - lo)
        else:
            step *= 0.5
    return x, fx, iterations


@dataclass
class FitnessReport:
    """Delta on a theta grid against its piecewise Pade reconstruction."""

    theta: np.ndarray
    exact: np.ndarray
    approx: np.ndarray
    mse: float
    bound: BoundCheck


def fitness_report(p: PairParams, n_grid: int = 1000, gamma1: float = 2.0, q_kernel: str = "qbar") -> FitnessReport:
    pieces = pade_fit(p, "delta", q_kernel)
    theta = np.linspace(0.0, HALF_PI, n_grid)
    exact = np.asarray(integrand_delta(theta, p, q_kernel))
    approx = evaluate_pieces(pieces, theta)
    mse = float(np.mean((exact - approx) ** 2))
    bound = exponent_bound_check(p, gamma1)
    log.info(f"Pade fitness MSE={mse:.3e} bound(gamma1={gamma1}) holds={bound.holds}")
    return FitnessReport(theta=theta, exact=exact, approx=approx, mse=mse, bound=bound)
