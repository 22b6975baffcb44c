import numpy as np
import pytest
from scipy import integrate

from onebitcov.arcsine import HALF_PI, PairParams, arcsine_law, integrand_d1, integrand_d2
from onebitcov.errors import DomainError, PadeFitError
from onebitcov.recover.pade import (
    PIECES,
    evaluate_pieces,
    fitness_report,
    pade_fit,
    pade_integral,
    pade_piece,
    rational_integral,
    taylor_coefficients,
)


@pytest.mark.parametrize(
    "coeffs,a,b",
    [
        ((1.0, 0.5, 1.0, 0.0, 1.0), 0.0, 1.5),  # complex roots, atan branch
        ((0.3, -1.0, 2.0, -3.0, 1.0), 2.5, 3.0),  # two real roots outside [a, b]
        ((1.0, 2.0, 4.0, -4.0, 1.0), 0.0, 1.0),  # double root at 2
        ((1.0, 3.0, 1.0, 1.0, 0.0), 0.0, 1.0),  # linear denominator
        ((2.0, -1.0, 4.0, 0.0, 0.0), 0.2, 0.9),  # constant denominator
    ],
)
def test_rational_integral_branches(coeffs, a, b):
    e, s, k, g, h = coeffs
    expected, _ = integrate.quad(lambda t: (e + s * t) / (k + g * t + h * t * t), a, b, epsabs=1e-13, epsrel=1e-13)
    assert rational_integral(e, s, k, g, h, a, b) == pytest.approx(expected, rel=1e-10, abs=1e-13)


def test_taylor_coefficients_of_exponential():
    c = taylor_coefficients(np.exp, 0.0)
    np.testing.assert_allclose(c, [1.0, 1.0, 0.5, 1.0 / 6.0], atol=1e-6)


def test_pade_piece_of_exponential():
    """[1/2] Паде для e^t: (1 + t/3) / (1 - 2t/3 + t^2/6)."""
    piece = pade_piece([1.0, 1.0, 0.5, 1.0 / 6.0], "exp", 0.0, 0.5, 0.0)
    assert piece.e == pytest.approx(1.0)
    assert piece.s == pytest.approx(1.0 / 3.0)
    assert piece.k == pytest.approx(1.0)
    assert piece.g == pytest.approx(-2.0 / 3.0)
    assert piece.h == pytest.approx(1.0 / 6.0)
    assert piece.integral() == pytest.approx(np.exp(0.5) - 1.0, abs=2e-4)


def test_pade_piece_shift_to_absolute_theta():
    """A piece expanded at theta0 evaluates the shifted series at theta."""
    theta0 = 0.7
    c = [np.exp(theta0), np.exp(theta0), np.exp(theta0) / 2.0, np.exp(theta0) / 6.0]
    piece = pade_piece(c, "shifted", 0.5, 0.9, theta0)
    theta = np.linspace(0.5, 0.9, 9)
    np.testing.assert_allclose(piece(theta), np.exp(theta), rtol=1e-4)


def test_pade_piece_zero_series():
    piece = pade_piece([0.0, 0.0, 0.0, 0.0], "zero", 0.0, 1.0, 0.0)
    assert piece.integral() == 0.0
    assert piece(0.3) == 0.0


def test_pade_piece_rejects_pole_inside_piece():
    # 1 / (1 - t) has its pole at t = 1
    with pytest.raises(PadeFitError) as excinfo:
        pade_piece([1.0, 1.0, 1.0, 1.0], "pole", 0.0, 1.5, 0.0)
    assert excinfo.value.piece == "pole"


def test_pade_fit_covers_quarter_period(fitness_pair):
    for which in ("D1", "D2", "delta"):
        pieces = pade_fit(fitness_pair, which)
        assert [p.name.split("/")[1] for p in pieces] == [name for name, *_ in PIECES]
        assert pieces[0].lo == 0.0 and pieces[-1].hi == pytest.approx(HALF_PI)
        values = evaluate_pieces(pieces, np.linspace(0.0, HALF_PI, 50))
        assert np.all(np.isfinite(values))


def test_pade_fit_rejects_unknown_target(fitness_pair):
    with pytest.raises(DomainError):
        pade_fit(fitness_pair, "D3")


def test_fitness_report_at_reference_pair(fitness_pair):
    report = fitness_report(fitness_pair, n_grid=1000, gamma1=2.0)
    assert report.theta.shape == (1000,)
    assert report.bound.holds
    assert report.mse <= 5e-4


def test_pade_integral_zero_threshold():
    p = PairParams(0.9, 0.5, 0.3, 0.0)
    assert pade_integral(p) == pytest.approx(arcsine_law(0.3, 0.9, 0.5), abs=1e-12)


@pytest.mark.parametrize("which", ["D1", "D2"])
def test_pade_piece_matches_integrand_at_expansion_point(fitness_pair, which):
    integrand = integrand_d1 if which == "D1" else integrand_d2
    for piece in pade_fit(fitness_pair, which):
        assert piece(piece.theta0) == pytest.approx(integrand(piece.theta0, fitness_pair), rel=1e-10, abs=1e-10)


def test_pade_fit_at_zero_threshold_mean_is_zero():
    """При d = 0 подынтегральные функции равны нулю, все куски нулевые."""
    p = PairParams(0.8, 0.7, 0.05, 0.0)
    for which in ("D1", "D2"):
        pieces = pade_fit(p, which)
        assert all(piece.integral() == 0.0 for piece in pieces)
        np.testing.assert_array_equal(evaluate_pieces(pieces, np.linspace(0.0, HALF_PI, 20)), 0.0)
