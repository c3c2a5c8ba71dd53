import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copulapred.special import (
    bivariate_normal_pdf,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)

mpmath.mp.dps = 40


def mp_cdf(z):
    return float(mpmath.ncdf(z))


# frozen from the mpmath oracle before the implementation was written
PHI_196 = 0.9750021048517795


def test_cdf_oracle_value():
    assert PHI_196 == pytest.approx(mp_cdf(1.96), abs=1e-16)
    assert std_normal_cdf(1.96) == pytest.approx(PHI_196, abs=1e-15)


def test_cdf_endpoints_and_centre():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(math.inf) == 1.0
    assert std_normal_cdf(-math.inf) == 0.0


def test_cdf_absolute_error_on_window():
    zs = np.linspace(-8, 8, 2001)
    got = std_normal_cdf(zs)
    want = np.array([mp_cdf(z) for z in zs])
    assert np.max(np.abs(got - want)) <= 1e-14


def test_cdf_reflection():
    zs = np.linspace(-8, 8, 1601)
    assert np.max(np.abs(std_normal_cdf(zs) + std_normal_cdf(-zs) - 1.0)) <= 1e-15


def test_quantile_examples():
    assert std_normal_quantile(0.5) == 0.0
    assert std_normal_quantile(0.9750021048) == pytest.approx(1.96, abs=1e-8)
    assert std_normal_quantile(0.0) == -math.inf
    assert std_normal_quantile(1.0) == math.inf


def test_quantile_rejects_outside_unit_interval():
    with pytest.raises(ValueError):
        std_normal_quantile(1.5)
    with pytest.raises(ValueError):
        std_normal_quantile(-0.1)


def test_quantile_inverts_cdf_across_range():
    us = np.concatenate([
        10.0 ** -np.linspace(300, 1, 300),
        np.linspace(0.001, 0.999, 999),
        1.0 - 10.0 ** -np.linspace(1, 16, 100),
    ])
    resid = np.abs(std_normal_cdf(std_normal_quantile(us)) - us)
    assert np.max(resid) <= 1e-12


def mp_quantile(u):
    # solve log Phi(z) = log u, which stays well conditioned deep in the tail
    target = mpmath.log(mpmath.mpf(u))
    guess = -math.sqrt(-2 * math.log(u)) if u < 0.5 else 0.0
    return float(mpmath.findroot(lambda z: mpmath.log(mpmath.ncdf(z)) - target, guess))


@pytest.mark.parametrize("u", [1e-300, 1e-100, 1e-20, 1e-5, 0.3])
def test_quantile_matches_mpmath(u):
    assert std_normal_quantile(u) == pytest.approx(mp_quantile(u), rel=1e-12)


def test_round_trip_where_representable():
    zs = np.linspace(-8, 5, 13001)
    assert np.max(np.abs(std_normal_quantile(std_normal_cdf(zs)) - zs)) <= 1e-9


def test_round_trip_upper_tail_within_representation_limit():
    # Phi(z) near 1 is stored with absolute spacing ~1.1e-16, so z can only
    # be recovered to about eps / pdf(z)
    zs = np.linspace(5, 8, 3001)
    back = std_normal_quantile(std_normal_cdf(zs))
    finite = np.isfinite(back)
    bound = 1.2e-16 / std_normal_pdf(zs) + 1e-9
    assert np.all(np.abs(back - zs)[finite] <= bound[finite])
    # above ~8.29 Phi rounds to exactly 1, so the inverse is +inf
    assert np.all(zs[~finite] > 8.2)


@pytest.mark.xfail(strict=True, reason="Phi(z) is indistinguishable from 1 in double precision for z near 8")
def test_round_trip_full_window_literal():
    zs = np.linspace(-8, 8, 16001)
    assert np.max(np.abs(std_normal_quantile(std_normal_cdf(zs)) - zs)) <= 1e-9


def test_strictly_increasing_on_interior():
    zs = np.linspace(-7, 7, 5001)
    assert np.all(np.diff(std_normal_cdf(zs)) > 0)
    us = np.linspace(1e-6, 1 - 1e-6, 5001)
    assert np.all(np.diff(std_normal_quantile(us)) > 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30))
def test_pdf_even(z):
    assert std_normal_pdf(z) == std_normal_pdf(-z)


def test_pdf_values():
    assert std_normal_pdf(0.0) == pytest.approx(0.3989422804, abs=1e-10)
    assert std_normal_pdf(math.inf) == 0.0
    assert std_normal_pdf(-math.inf) == 0.0


def test_bivariate_pdf_examples():
    assert bivariate_normal_pdf(0.0, 0.0, 0.0) == pytest.approx(1 / (2 * math.pi), rel=1e-15)
    assert bivariate_normal_pdf(0.0, 0.0, 0.95) == pytest.approx(
        1 / (2 * math.pi * math.sqrt(1 - 0.95**2)), rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(-6, 6), st.floats(-6, 6))
def test_bivariate_factorizes_at_zero_correlation(z1, z2):
    assert bivariate_normal_pdf(z1, z2, 0.0) == pytest.approx(
        std_normal_pdf(z1) * std_normal_pdf(z2), rel=1e-13, abs=1e-300)


def test_bivariate_matches_closed_form(rng):
    z = rng.normal(size=(50, 2))
    for rho in (-0.7, 0.3, 0.95):
        det = 1 - rho**2
        want = np.exp(-(z[:, 0]**2 - 2 * rho * z[:, 0] * z[:, 1] + z[:, 1]**2) / (2 * det)) / (
            2 * np.pi * np.sqrt(det))
        np.testing.assert_allclose(bivariate_normal_pdf(z[:, 0], z[:, 1], rho), want, rtol=1e-13)


@pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
def test_bivariate_rejects_degenerate_correlation(rho):
    with pytest.raises(ValueError):
        bivariate_normal_pdf(0.0, 0.0, rho)


def test_scalar_in_scalar_out():
    assert isinstance(std_normal_cdf(0.3), float)
    assert isinstance(std_normal_quantile(0.3), float)
    assert std_normal_cdf(np.array([0.0, 1.0])).shape == (2,)
