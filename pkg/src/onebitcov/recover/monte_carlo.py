"""Monte-Carlo backend: the D2 - D1 integral as a uniform-sample average."""

import logging
from typing import Optional

import numpy as np

from onebitcov.arcsine import HALF_PI, PairParams, assemble, scaled_delta
from onebitcov.errors import DomainError
from onebitcov.recover.criterion import SolveResult, bounded_minimize, log_criterion
from onebitcov.recover.variance import feasible_box

log = logging.getLogger(__name__)


def mc_nodes(n_m: int, seed: int) -> np.ndarray:
    if n_m < 1:
        raise DomainError(f"n_m must be >= 1, got {n_m}")
    return np.random.default_rng(seed).uniform(0.0, HALF_PI, n_m)


def mc_integral(p: PairParams, n_m: int = 10_000, seed: int = 0, nodes: Optional[np.ndarray] = None) -> float:
    """F_n. Pass `nodes` to reuse one draw across evaluations."""
    theta = mc_nodes(n_m, seed) if nodes is None else nodes
    return assemble(p, HALF_PI * float(np.mean(scaled_delta(theta, p))))


def criterion_mc(
    r_y_ij: float, p_0i: float, p_0j: float, p_ij: float, d: float, n_m: int = 10_000, seed: int = 0, nodes=None
) -> float:
    return log_criterion(r_y_ij, mc_integral(PairParams(p_0i, p_0j, p_ij, d), n_m, seed, nodes))


def solve_mc(r_y_ij: float, p_0i: float, p_0j: float, d: float, n_m: int = 10_000, seed: int = 0) -> SolveResult:
    # common random numbers: one draw for the whole solve
    nodes = mc_nodes(n_m, seed)
    box = feasible_box(p_0i, p_0j)
    return bounded_minimize(lambda x: criterion_mc(r_y_ij, p_0i, p_0j, x, d, n_m, seed, nodes), box)
