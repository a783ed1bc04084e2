import numpy as np
import pytest
import scipy.special

from corrvecchia.bessel import matern_function, modified_bessel_k


@pytest.mark.parametrize("nu", [0.05, 0.2, 0.5, 0.75, 1.0, 1.3, 1.5, 2.5, 3.7, 5.0])
def test_bessel_k_matches_scipy(nu):
    x = np.concatenate([
        np.geomspace(1e-8, 2.0, 40),
        np.linspace(2.0, 30.0, 40),
    ])
    ours = modified_bessel_k(nu, x)
    ref = scipy.special.kv(nu, x)
    rel = np.abs(ours - ref) / np.abs(ref)
    assert np.max(rel) < 1e-11


def test_bessel_k_integer_like_orders():
    # orders extremely close to integers stress the small-mu series branch
    for nu in (1.0 + 1e-9, 2.0 - 1e-9):
        x = np.linspace(0.01, 10.0, 25)
        rel = np.abs(modified_bessel_k(nu, x) - scipy.special.kv(nu, x)) / scipy.special.kv(nu, x)
        assert np.max(rel) < 1e-9


@pytest.mark.parametrize("nu", [0.2, 0.5, 0.75, 1.5, 2.5])
def test_matern_normalized_at_zero(nu):
    assert matern_function(nu, 0.0) == 1.0
    # continuity: 1 - M(x) vanishes like x^(2 nu) (nu < 1) or x^2
    assert abs(matern_function(nu, 1e-7) - 1.0) < 10.0 * (1e-7) ** min(2 * nu, 2.0)


def test_matern_half_integer_closed_forms():
    x = np.linspace(0.05, 8.0, 30)
    assert np.allclose(matern_function(0.5, x), np.exp(-x), rtol=1e-12)
    assert np.allclose(matern_function(1.5, x), (1 + x) * np.exp(-x), rtol=1e-12)
    assert np.allclose(matern_function(2.5, x), (1 + x + x**2 / 3) * np.exp(-x), rtol=1e-12)


def test_matern_monotone_decreasing_and_positive():
    x = np.linspace(0.0, 20.0, 200)
    for nu in (0.3, 0.75, 1.2):
        v = matern_function(nu, x)
        assert np.all(v >= 0)
        assert np.all(np.diff(v) <= 1e-15)


def test_matern_matches_direct_formula():
    from scipy.special import gamma, kv

    x = np.linspace(0.2, 6.0, 20)
    for nu in (0.33, 0.9, 1.7):
        direct = 2.0 ** (1 - nu) / gamma(nu) * x**nu * kv(nu, x)
        assert np.allclose(matern_function(nu, x), direct, rtol=1e-11)


def test_matern_underflow_to_zero():
    assert matern_function(0.75, 1e4) == 0.0
