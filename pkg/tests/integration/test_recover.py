import itertools
import logging

import numpy as np
import pytest

from onebitcov.arcsine import (
    HALF_PI,
    PairParams,
    arcsine_law,
    expected_autocorrelation,
    exponent_bound_check,
    output_autocorrelation_oracle,
    scaled_delta,
)
from onebitcov.errors import DivergenceError, DomainError, SaturationError, SolverError, ValidationError
from onebitcov.process import ProcessModel, sample_ensemble
from onebitcov.recover import (
    Backend,
    BackendKind,
    assemble_covariance,
    assemble_from_statistics,
    expected_sign_mean,
    feasible_box,
    gl_integral,
    landscape,
    mc_integral,
    nmse,
    pade_integral,
    recover_variances,
    solve_entry,
    solve_gl,
    solve_mc,
    solve_oracle,
    solve_pade,
)
from onebitcov.recover.monte_carlo import mc_nodes
from onebitcov.recover.variance import recover_variances_masked
from onebitcov.sampling import ThresholdSpec, quantize

P0 = (0.3, 0.45, 0.6, 0.8, 1.0)
RHO = (-0.5, -0.25, 0.0, 0.25, 0.5)
ORACLE_GRID = [
    (p_0i, p_0j, rho * np.sqrt(p_0i * p_0j), d)
    for p_0i, p_0j, rho, d in itertools.product(P0, P0, RHO, (0.3, 0.5))
]


# --- variances ---------------------------------------------------------


def test_variances_invert_sign_means():
    """Дисперсии восстанавливаются точно по точным средним знаков."""
    r_0 = np.array([0.2, 0.35, 0.5, 0.8])
    spec = ThresholdSpec.scalar(0.5, 0.2, 4)
    mu = expected_sign_mean(r_0 + 0.2, 0.5)
    np.testing.assert_allclose(recover_variances(mu, spec), r_0, atol=1e-10)


def test_variance_recovery_failures():
    spec = ThresholdSpec.scalar(0.5, 0.2, 3)
    with pytest.raises(SaturationError) as excinfo:
        recover_variances(np.array([-0.3, -1.0, -0.2]), spec)
    assert excinfo.value.index == 1
    with pytest.raises(DivergenceError):
        recover_variances(np.array([-0.3, 0.0, -0.2]), spec)
    with pytest.raises(DomainError):
        recover_variances(np.array([-0.3, -0.4, -0.2]), ThresholdSpec.scalar(0.0, 0.2, 3))


def test_masked_variances_keep_going():
    spec = ThresholdSpec.scalar(0.5, 0.2, 3)
    r_0, failures = recover_variances_masked(np.array([-0.3, -1.0, 0.0]), spec)
    assert np.isfinite(r_0[0])
    assert np.isnan(r_0[1]) and np.isnan(r_0[2])
    assert isinstance(failures[1], SaturationError)
    assert isinstance(failures[2], DivergenceError)


def test_feasible_box_is_strictly_inside():
    lo, hi = feasible_box(0.8, 0.5)
    assert -0.5 < lo < 0.0 < hi < 0.5
    assert lo == -hi
    with pytest.raises(DomainError):
        feasible_box(0.0, 0.5)


# --- integral backends -------------------------------------------------


@pytest.mark.parametrize("params", ORACLE_GRID)
def test_gauss_legendre_matches_oracle(params):
    p = PairParams(*params)
    assert abs(gl_integral(p, 30) - output_autocorrelation_oracle(p)) <= 1e-8


@pytest.mark.parametrize("params", [(0.8, 0.7, 0.05, 0.7), (0.5, 0.9, -0.3, 0.3), (0.6, 0.6, 0.4, 0.5)])
def test_monte_carlo_within_clt_band(params):
    p = PairParams(*params)
    n_m = 100_000
    spread = np.std(scaled_delta(mc_nodes(n_m, 0), p))
    band = 4.0 * HALF_PI * spread / np.sqrt(n_m)
    assert abs(mc_integral(p, n_m, 0) - output_autocorrelation_oracle(p)) <= band


@pytest.mark.parametrize(
    "params",
    [
        (p_0i, p_0j, rho * np.sqrt(p_0i * p_0j), d)
        for p_0i, p_0j, rho, d in itertools.product((0.4, 0.6, 0.8), (0.4, 0.6, 0.8), (-0.3, 0.0, 0.3), (0.3, 0.5))
    ],
)
def test_pade_matches_oracle_where_bound_holds(params):
    p = PairParams(*params)
    if not exponent_bound_check(p, 2.0).holds:
        pytest.skip("growth bound does not hold")
    assert abs(pade_integral(p) - output_autocorrelation_oracle(p)) <= 1e-2


@pytest.mark.parametrize("p_ij", [-0.4, 0.0, 0.3])
def test_zero_threshold_backends_reduce_to_arcsine(p_ij):
    p = PairParams(0.9, 0.6, p_ij, 0.0)
    expected = arcsine_law(p_ij, 0.9, 0.6)
    assert gl_integral(p) == pytest.approx(expected, abs=1e-10)
    assert mc_integral(p, 1000) == pytest.approx(expected, abs=1e-10)
    assert pade_integral(p) == pytest.approx(expected, abs=1e-6)
    for kind in Backend:
        result = solve_entry(BackendKind(kind), expected, 0.9, 0.6, 0.0)
        assert result.p_hat == pytest.approx(p_ij, abs=1e-9)


def test_criterion_is_monotone_on_feasible_grid(fitness_pair):
    lo, hi = feasible_box(fitness_pair.p_0i, fitness_pair.p_0j)
    grid = np.linspace(lo, hi, 200)
    values = [gl_integral(fitness_pair.with_covariance(x)) for x in grid]
    assert np.all(np.diff(values) > 0.0)


# --- solvers -----------------------------------------------------------


@pytest.mark.parametrize("p_ij", [-0.3, 0.05, 0.45])
def test_noiseless_round_trip_bounded_solvers(p_ij):
    """Ограниченный поиск и сетка дают один и тот же минимум."""
    p = PairParams(0.8, 0.7, p_ij, 0.7)
    gl = solve_gl(gl_integral(p), p.p_0i, p.p_0j, p.d)
    assert gl.p_hat == pytest.approx(p_ij, abs=1e-6)
    assert gl.status == "ok"
    oracle = solve_oracle(output_autocorrelation_oracle(p), p.p_0i, p.p_0j, p.d)
    assert oracle.p_hat == pytest.approx(p_ij, abs=1e-6)
    mc = solve_mc(mc_integral(p, 10_000, 3), p.p_0i, p.p_0j, p.d, 10_000, 3)
    assert mc.p_hat == pytest.approx(p_ij, abs=1e-6)


def test_noiseless_round_trip_pade(fitness_pair):
    result = solve_pade(pade_integral(fitness_pair), fitness_pair.p_0i, fitness_pair.p_0j, fitness_pair.d)
    assert result.p_hat == pytest.approx(fitness_pair.p_ij, abs=1e-5)
    assert result.diagnostics["starts"] == 8


def test_pade_solver_is_seeded(fitness_pair):
    target = output_autocorrelation_oracle(fitness_pair)
    a = solve_pade(target, 0.8, 0.7, 0.7, n_starts=4, seed=1)
    b = solve_pade(target, 0.8, 0.7, 0.7, n_starts=4, seed=1)
    assert a.p_hat == b.p_hat


def test_landscape_single_minimum_for_gauss_legendre(fitness_pair):
    target = gl_integral(fitness_pair)
    scape = landscape(BackendKind(Backend.GAUSS_LEGENDRE), target, 0.8, 0.7, 0.7, n=200)
    assert scape.p_ij.shape == (200,)
    assert scape.local_minima == 1
    assert abs(scape.p_ij[int(np.argmin(scape.criterion))] - fitness_pair.p_ij) < 0.01


def test_backend_kind_validation():
    with pytest.raises(ValidationError) as excinfo:
        BackendKind(Backend.GAUSS_LEGENDRE, n_q=1)
    assert excinfo.value.path == "recover.gl.n_q"
    with pytest.raises(ValidationError):
        BackendKind("pade", q_kernel="taylor")
    assert BackendKind("mc").label == "MC"


# --- matrix assembly ---------------------------------------------------


def _noiseless_inputs(truth, d, sigma_tau2):
    p = truth + sigma_tau2 * np.eye(truth.shape[0])
    return expected_sign_mean(np.diag(p), d), expected_autocorrelation(p, d)


@pytest.mark.slow
def test_benchmark_noiseless_recovery(benchmark_matrix):
    """Точность бэкендов на точных статистиках знаков."""
    settings = {
        Backend.ORACLE: (0.3, 0.1, 1e-10),
        Backend.GAUSS_LEGENDRE: (0.3, 0.1, 1e-8),
        Backend.MONTE_CARLO: (0.3, 0.1, 1e-4),
        Backend.PADE: (0.5, 0.2, 1e-3),
    }
    scores = {}
    for kind, (d, sigma_tau2, limit) in settings.items():
        mu, r_y = _noiseless_inputs(benchmark_matrix, d, sigma_tau2)
        spec = ThresholdSpec.scalar(d, sigma_tau2, 5)
        report = assemble_from_statistics(mu, r_y, spec, BackendKind(kind), truth=benchmark_matrix)
        assert not report.unrecovered
        assert report.nmse <= limit
        scores[kind] = report.nmse
    assert scores[Backend.GAUSS_LEGENDRE] <= scores[Backend.PADE]


@pytest.mark.slow
def test_benchmark_sampled_recovery(benchmark_matrix):
    """На выборке N_x = 1e4 ошибка упирается в статистический предел."""
    model = ProcessModel.explicit(benchmark_matrix)
    spec = ThresholdSpec.scalar(0.3, 0.1, 5)
    ensemble = sample_ensemble(model, 10_000, seed=11)
    data = quantize(ensemble, spec, seed=12)
    gl = assemble_covariance(data, BackendKind(Backend.GAUSS_LEGENDRE), truth=benchmark_matrix)
    mc = assemble_covariance(data, BackendKind(Backend.MONTE_CARLO), truth=benchmark_matrix)
    assert gl.nmse <= 5e-2
    assert mc.nmse <= 5e-2
    assert 1.0 / 3.0 <= gl.nmse / mc.nmse <= 3.0


def test_parallel_assembly_matches_sequential():
    model = ProcessModel.wiener(5)
    spec = ThresholdSpec.scalar(0.5, 0.2, 5)
    data = quantize(sample_ensemble(model, 3000, seed=2), spec, seed=3)
    kind = BackendKind(Backend.GAUSS_LEGENDRE, n_q=20)
    sequential = assemble_covariance(data, kind)
    parallel = assemble_covariance(data, kind, workers=3)
    np.testing.assert_array_equal(sequential.r_hat, parallel.r_hat)
    assert [(e.i, e.j) for e in parallel.entries] == [(e.i, e.j) for e in sequential.entries]
    np.testing.assert_array_equal(sequential.r_hat, sequential.r_hat.T)


def test_progress_callback_counts_entries():
    mu, r_y = _noiseless_inputs(np.diag([0.3, 0.4, 0.5, 0.6]), 0.5, 0.2)
    calls = []
    assemble_from_statistics(mu, r_y, ThresholdSpec.scalar(0.5, 0.2, 4), BackendKind("gl"), progress=lambda: calls.append(1))
    assert len(calls) == 6


def test_failed_entries_are_reported(mocker):
    """Сбой одной пары не останавливает сборку матрицы."""
    truth = np.diag([0.3, 0.4, 0.5])
    mu, r_y = _noiseless_inputs(truth, 0.5, 0.2)
    mocker.patch("onebitcov.recover.solve_entry", side_effect=SolverError("no finite criterion"))
    report = assemble_from_statistics(mu, r_y, ThresholdSpec.scalar(0.5, 0.2, 3), BackendKind("gl"), truth=truth)
    assert report.unrecovered == [(0, 1), (0, 2), (1, 2)]
    assert all(e.status == "unrecovered:SolverError" for e in report.entries)
    assert np.isnan(report.r_hat[0, 1])
    np.testing.assert_allclose(np.diag(report.r_hat), np.diag(truth), atol=1e-10)
    assert np.isnan(report.nmse)


def test_zero_signal_is_reported_not_raised(caplog):
    """x = 0: восстанавливается только мощность порога, NMSE не определена."""
    truth = np.zeros((3, 3))
    mu, r_y = _noiseless_inputs(truth, 0.5, 0.2)
    with caplog.at_level(logging.WARNING, logger="onebitcov.recover"):
        report = assemble_from_statistics(mu, r_y, ThresholdSpec.scalar(0.5, 0.2, 3), BackendKind("gl"), truth=truth)
    assert np.isnan(report.nmse)
    assert not report.unrecovered
    np.testing.assert_allclose(np.diag(report.r_hat), 0.0, atol=1e-10)
    np.testing.assert_allclose(report.p_hat, 0.2 * np.eye(3), atol=1e-3)
    assert "zero-signal" in caplog.text


def test_nmse():
    truth = np.eye(2)
    assert nmse(truth, truth) == 0.0
    assert nmse(2.0 * truth, truth) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        nmse(truth, np.zeros((2, 2)))
