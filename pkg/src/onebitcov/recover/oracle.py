"""Reference backend: criterion on the adaptive-quadrature oracle."""

from onebitcov.arcsine import PairParams, output_autocorrelation_oracle
from onebitcov.recover.criterion import SolveResult, bounded_minimize, log_criterion
from onebitcov.recover.variance import feasible_box


def criterion_oracle(r_y_ij: float, p_0i: float, p_0j: float, p_ij: float, d: float, tol: float = 1e-10) -> float:
    return log_criterion(r_y_ij, output_autocorrelation_oracle(PairParams(p_0i, p_0j, p_ij, d), tol))


def solve_oracle(r_y_ij: float, p_0i: float, p_0j: float, d: float, tol: float = 1e-10) -> SolveResult:
    box = feasible_box(p_0i, p_0j)
    return bounded_minimize(lambda x: criterion_oracle(r_y_ij, p_0i, p_0j, x, d, tol), box)
