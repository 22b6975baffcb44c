"""Gauss-Legendre backend: the D2 - D1 integral on n_q Legendre nodes."""

import logging
from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial import legendre

from onebitcov.arcsine import PairParams, assemble, scaled_delta
from onebitcov.errors import DomainError, NumericError
from onebitcov.recover.criterion import SolveResult, bounded_minimize, log_criterion
from onebitcov.recover.variance import feasible_box

log = logging.getLogger(__name__)


@lru_cache(maxsize=32)
def legendre_nodes(n_q: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights mapped from [-1, 1] onto [0, pi/2], weights including the pi/4 Jacobian."""
    if n_q < 2:
        raise DomainError(f"n_q must be >= 2, got {n_q}")
    nodes, weights = legendre.leggauss(n_q)
    if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(weights))):
        raise NumericError("Legendre node computation failed", {"n_q": n_q})
    theta = 0.25 * np.pi * (nodes + 1.0)
    return theta, 0.25 * np.pi * weights


def gl_integral(p: PairParams, n_q: int = 30) -> float:
    """J_n: the modified arcsine law with the D2 - D1 integral on n_q Legendre nodes."""
    theta, weights = legendre_nodes(n_q)
    return assemble(p, float(np.dot(weights, scaled_delta(theta, p))))


def criterion_gl(r_y_ij: float, p_0i: float, p_0j: float, p_ij: float, d: float, n_q: int = 30) -> float:
    return log_criterion(r_y_ij, gl_integral(PairParams(p_0i, p_0j, p_ij, d), n_q))


def solve_gl(r_y_ij: float, p_0i: float, p_0j: float, d: float, n_q: int = 30) -> SolveResult:
    legendre_nodes(n_q)
    box = feasible_box(p_0i, p_0j)
    return bounded_minimize(lambda x: criterion_gl(r_y_ij, p_0i, p_0j, x, d, n_q), box)
