"""Standard normal special functions.

Scalar kernels are compiled with numba so the grid update loop in
:mod:`copulapred.estimator` can call them without crossing back into
Python. The public wrappers accept scalars or arrays.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, vectorize

__all__ = [
    "std_normal_cdf",
    "std_normal_quantile",
    "std_normal_pdf",
    "bivariate_normal_pdf",
]

_SQRT1_2 = 0.7071067811865476
_LOG_SQRT_2PI = 0.9189385332046728
_INV_SQRT_2PI = 0.3989422804014327

# Phi(z) rounds to 1.0 above this and underflows to 0.0 below the other bound.
_CDF_ONE = 8.3
_CDF_ZERO = -38.5


@njit(cache=True, nogil=True)
def ndtr(z):
    if z > _CDF_ONE:
        return 1.0
    if z < _CDF_ZERO:
        return 0.0
    x = z * _SQRT1_2
    if x < -_SQRT1_2:
        return 0.5 * math.erfc(-x)
    if x > _SQRT1_2:
        return 1.0 - 0.5 * math.erfc(x)
    return 0.5 + 0.5 * math.erf(x)


@njit(cache=True, nogil=True)
def ndtr_upper(z):
    """Upper tail 1 - Phi(z) without cancellation."""
    return ndtr(-z)


@njit(cache=True, nogil=True)
def ndtri_raw(p):
    """Wichura's AS241 rational approximation (PPND16)."""
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2509.0809287301226727 * r + 33430.575583588128105) * r
                    + 67265.770927008700853) * r + 45921.953931549871457) * r
                  + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608)
        den = (((((((5226.495278852545925 * r + 28729.085735721942674) * r
                    + 39307.89580009271061) * r + 21213.794301586595867) * r
                  + 5394.1960214247511077) * r + 687.1870074920579083) * r
                + 42.313330701600911252) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
                    + 0.24178072517745061177) * r + 1.27045825245236838258) * r
                  + 3.64784832476320460504) * r + 5.7694972214606914055) * r
                + 4.6303378461565452959) * r + 1.42343711074968357734)
        den = (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
                    + 0.0151986665636164571966) * r + 0.14810397642748007459) * r
                  + 0.68976733498510000455) * r + 1.6763848301838038494) * r
                + 2.05319162663775882187) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 0.0012426609473880784386) * r + 0.026532189526576123093) * r
                  + 0.29656057182850489123) * r + 1.7848265399172913358) * r
                + 5.4637849111641143699) * r + 6.6579046435011037772)
        den = (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                    + 1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r
                  + 0.0148753612908506148525) * r + 0.13692988092273580531) * r
                + 0.59983220655588793769) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@njit(cache=True, nogil=True)
def ndtri(p):
    """AS241 followed by one Newton step against the erfc-based cdf."""
    z = ndtri_raw(p)
    if not math.isfinite(z):
        return z
    dens = _INV_SQRT_2PI * math.exp(-0.5 * z * z)
    if dens == 0.0:
        return z
    if z <= 0.0:
        resid = ndtr(z) - p
    else:
        # Phi(z) - p = (1 - p) - Q(z); 1 - p is exact for p >= 0.5
        resid = (1.0 - p) - ndtr(-z)
    return z - resid / dens


@vectorize(["float64(float64)"], cache=True)
def _cdf_ufunc(z):
    return ndtr(z)


@vectorize(["float64(float64)"], cache=True)
def _quantile_ufunc(p):
    return ndtri(p)


def _scalar_or_array(out, like):
    if np.ndim(like) == 0:
        return float(out)
    return out


def std_normal_cdf(z):
    """Phi(z); total on the extended reals (NaN propagates)."""
    z = np.asarray(z, dtype=np.float64)
    return _scalar_or_array(_cdf_ufunc(z), z)


def std_normal_quantile(u):
    """Phi^{-1}(u), with -inf at 0 and +inf at 1.

    Raises ValueError for arguments outside [0, 1].
    """
    u = np.asarray(u, dtype=np.float64)
    if np.any((u < 0.0) | (u > 1.0)):
        raise ValueError("probability must lie in [0, 1]")
    # compiled code may evaluate the discarded tail branch at the endpoints
    with np.errstate(invalid="ignore"):
        out = _quantile_ufunc(u)
    return _scalar_or_array(out, u)


def std_normal_pdf(z):
    z = np.asarray(z, dtype=np.float64)
    with np.errstate(over="ignore"):
        out = np.exp(-0.5 * z * z - _LOG_SQRT_2PI)
    return _scalar_or_array(out, z)


def log_std_normal_pdf(z):
    z = np.asarray(z, dtype=np.float64)
    return _scalar_or_array(-0.5 * z * z - _LOG_SQRT_2PI, z)


def log_bivariate_normal_pdf(z1, z2, rho):
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    one_m = 1.0 - rho * rho
    quad = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / one_m
    out = -0.5 * quad - 2.0 * _LOG_SQRT_2PI - 0.5 * math.log(one_m)
    return _scalar_or_array(out, z1 + z2)


def bivariate_normal_pdf(z1, z2, rho):
    """Standard bivariate normal density with correlation ``rho``."""
    rho = float(rho)
    if not -1.0 < rho < 1.0:
        raise ValueError(f"correlation must satisfy |rho| < 1, got {rho}")
    logp = log_bivariate_normal_pdf(z1, z2, rho)
    with np.errstate(invalid="ignore"):
        out = np.exp(logp)
    return _scalar_or_array(np.nan_to_num(out, nan=0.0), logp)
