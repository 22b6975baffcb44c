import numpy as np
import pytest
from scipy import special as sp

from onebitcov.errors import DomainError
from onebitcov.special import (
    SQRT_PI,
    erf,
    gaussian_cdf,
    q_bar,
    q_bar_symmetric,
    q_function,
    q_inverse,
    upper_incomplete_gamma,
)


def test_q_function_symmetry():
    """Q(x) + Q(-x) = 1 и Q(0) = 1/2."""
    x = np.linspace(-6.0, 6.0, 49)
    np.testing.assert_allclose(q_function(x) + q_function(-x), 1.0, atol=1e-14)
    assert q_function(0.0) == 0.5


def test_q_function_returns_scalar_for_scalar():
    assert isinstance(q_function(1.0), float)
    assert q_function(np.array([1.0, 2.0])).shape == (2,)


def test_q_inverse_round_trip():
    """Q^{-1}(Q(x)) возвращает x."""
    x = np.linspace(-5.0, 5.0, 41)
    np.testing.assert_allclose(q_inverse(q_function(x)), x, atol=1e-9)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_q_inverse_rejects_closed_interval(p):
    with pytest.raises(DomainError):
        q_inverse(p)


def test_erf_rejects_non_finite():
    with pytest.raises(DomainError):
        erf(np.array([0.0, np.nan]))


def test_upper_incomplete_gamma_orders():
    x = np.linspace(0.0, 8.0, 33)
    np.testing.assert_allclose(upper_incomplete_gamma(1.0, x), np.exp(-x), rtol=1e-14)
    wide = np.linspace(0.0, 20.0, 81)
    np.testing.assert_allclose(upper_incomplete_gamma(1.0, wide) * np.exp(wide), 1.0, atol=1e-13)
    np.testing.assert_allclose(upper_incomplete_gamma(0.5, x), sp.gammaincc(0.5, x) * sp.gamma(0.5), rtol=1e-10)
    assert upper_incomplete_gamma(0.5, 0.0) == pytest.approx(SQRT_PI, rel=1e-15)


def test_upper_incomplete_gamma_domain():
    with pytest.raises(DomainError):
        upper_incomplete_gamma(2.0, 1.0)
    with pytest.raises(DomainError):
        upper_incomplete_gamma(1.0, -0.5)


def test_q_bar_positive_and_decreasing():
    x = np.linspace(0.01, 6.0, 100)
    values = q_bar(x)
    assert np.all(values > 0.0)
    assert np.all(np.diff(values) < 0.0)


def test_q_bar_values():
    assert q_bar(1.0) == pytest.approx(np.exp(-0.5) / 12.0 + 0.25 * np.exp(-2.0 / 3.0), rel=1e-15)
    assert q_bar(1.0) == pytest.approx(0.178905, abs=1e-6)
    assert abs(q_bar(3.0) - q_function(3.0)) <= 6e-3
    assert 0.0 < q_bar(0.1) < 1.0 / 3.0


def test_q_bar_envelope_implementation_chosen_bound():
    """Выбранная граница: на [0.5, 5] |Q_bar - Q| не больше 2.5e-2 (максимум 2.34e-2 у x = 0.5)."""
    x = np.linspace(0.5, 5.0, 200)
    gap = np.abs(q_bar(x) - q_function(x))
    assert np.max(gap) <= 2.5e-2
    assert np.argmax(gap) == 0


def test_q_inverse_relative_round_trip():
    p = np.logspace(-8, np.log10(0.5), 60)
    p = np.concatenate([p, 1.0 - p])
    np.testing.assert_allclose(q_function(q_inverse(p)), p, rtol=1e-10)


def test_q_bar_needs_positive_argument():
    with pytest.raises(DomainError):
        q_bar(0.0)


def test_q_bar_symmetric_extension():
    x = np.linspace(0.05, 4.0, 20)
    np.testing.assert_allclose(q_bar_symmetric(x) + q_bar_symmetric(-x), 1.0, atol=1e-14)
    np.testing.assert_allclose(q_bar_symmetric(x), q_bar(x))
    assert q_bar_symmetric(0.0) == 0.5


def test_gaussian_cdf():
    assert gaussian_cdf(0.0, 2.0) == 0.5
    assert gaussian_cdf(2.0, 2.0) == pytest.approx(1.0 - q_function(1.0), abs=1e-15)
    with pytest.raises(DomainError):
        gaussian_cdf(0.0, 0.0)
