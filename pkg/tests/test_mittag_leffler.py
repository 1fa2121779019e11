import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import ml_half
from wgfrac.errors import DomainError
from wgfrac.mittag_leffler import gamma_fn, mittag_leffler, mittag_leffler2, ml_array

# E_{1/2}(z) = exp(z^2) erfc(-z), frozen from the 40-digit oracle
ML_HALF_FROZEN = {-1.0: 0.427583576155807, -5.0: 0.11070463773306863, -10.0: 0.05614099274382259}


@pytest.mark.parametrize("z, expected", sorted(ML_HALF_FROZEN.items()))
def test_half_order_frozen(z, expected):
    assert ml_half(z) == pytest.approx(expected, rel=1e-14)
    assert mittag_leffler(0.5, z) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("beta, z, expected", [
    (1.0, -1.0, math.exp(-1.0)),
    (0.7, 0.0, 1.0),
    (2.0, -1.0, math.cos(1.0)),
])
def test_examples(beta, z, expected):
    assert mittag_leffler(beta, z) == pytest.approx(expected, rel=1e-12)


def test_two_parameter_examples():
    assert mittag_leffler2(0.8, 1.0, -2.0) == mittag_leffler(0.8, -2.0)
    assert mittag_leffler2(1.0, 2.0, 1.0) == pytest.approx(math.e - 1.0, rel=1e-12)
    assert mittag_leffler2(0.6, 2.0, 0.0) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("x, expected", [(1.0, 1.0), (0.5, math.sqrt(math.pi)), (5.0, 24.0)])
def test_gamma(x, expected):
    assert gamma_fn(x) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("x", [0.0, -1.0, -3.0])
def test_gamma_poles(x):
    with pytest.raises(DomainError):
        gamma_fn(x)


@pytest.mark.parametrize("beta, z", [(0.0, 1.0), (-1.0, 1.0), (0.5, math.inf), (0.5, math.nan)])
def test_domain_errors(beta, z):
    with pytest.raises(DomainError):
        mittag_leffler(beta, z)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.95))
def test_value_at_zero(beta):
    assert mittag_leffler(beta, 0.0) == 1.0


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.8, 0.95])
def test_monotone_decay(beta):
    z = -np.linspace(0.0, 60.0, 241)
    vals = ml_array(beta, 1.0, z).astype(float)
    assert np.all(vals > 0) and np.all(vals <= 1.0)
    assert np.all(np.diff(vals) <= 1e-15)


@pytest.mark.parametrize("beta", [0.4, 0.7, 1.3])
def test_moment_derivative_identity(beta):
    mu = 1.7
    F = lambda t: t * mittag_leffler2(beta, 2.0, -mu * t**beta)
    for t in (0.1, 0.5, 1.0, 2.5):
        h = 1e-5 * t
        fd = (F(t + h) - F(t - h)) / (2 * h)
        assert fd == pytest.approx(mittag_leffler(beta, -mu * t**beta), rel=1e-6)


def test_vectorized_matches_scalar():
    z = np.linspace(-40.0, 2.0, 37)
    vec = ml_array(0.6, 1.0, z).astype(float)
    assert np.array_equal(vec, [mittag_leffler(0.6, zi) for zi in z])
