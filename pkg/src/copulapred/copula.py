"""Bivariate copulas that carry predictive updates.

The Gaussian copula and its conditional distribution function ``h_rho`` drive
the recursive estimator. The Clayton density and the Frechet-Hoeffding
mixture are the exact update copulas of the exponential and multinomial
models and are used by :mod:`copulapred.exact`.
"""
from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np

from .quadrature import gk_quad
from .special import std_normal_cdf, std_normal_quantile

if TYPE_CHECKING:
    from .estimator import GridDistribution

__all__ = [
    "gaussian_copula_density",
    "gaussian_copula_density_by_mixture",
    "h_rho",
    "psi_theta",
    "clayton_copula_density",
    "frechet_mixture_cdf",
    "t_functional",
]


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not 0.0 < rho < 1.0:
        raise ValueError(f"copula correlation must lie in (0, 1), got {rho}")
    return rho


def _open_unit(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(~((x > 0.0) & (x < 1.0))):
        raise ValueError(f"{name} must lie strictly inside (0, 1); clamp before calling")
    return x


def _out(val, *args):
    if all(np.ndim(a) == 0 for a in args):
        return float(val)
    return val


def gaussian_copula_density(u, v, rho: float):
    """Gaussian copula density c_rho(u, v), evaluated in log space."""
    rho = _check_rho(rho)
    zu = std_normal_quantile(_open_unit(u, "u"))
    zv = std_normal_quantile(_open_unit(v, "v"))
    one_m = 1.0 - rho * rho
    # log N2(zu, zv; rho) - log N(zu) - log N(zv), simplified
    logc = (-0.5 * math.log(one_m)
            - (rho * rho * (zu * zu + zv * zv) - 2.0 * rho * (zu * zv)) / (2.0 * one_m))
    return _out(np.exp(logc), u, v)


def h_rho(u, v, rho: float):
    """Conditional distribution function of the Gaussian copula given ``v``.

    ``u`` may include the endpoints 0 and 1; ``v`` may not.
    """
    rho = _check_rho(rho)
    u = np.asarray(u, dtype=np.float64)
    if np.any((u < 0.0) | (u > 1.0)):
        raise ValueError("u must lie in [0, 1]")
    zv = std_normal_quantile(_open_unit(v, "v"))
    zu = std_normal_quantile(u)
    return _out(std_normal_cdf((zu - rho * zv) / math.sqrt(1.0 - rho * rho)), u, v)


def psi_theta(u, theta, rho: float):
    """Normal density ratio N(z | theta, 1 - rho) / N(z | 0, 1) at z = Phi^{-1}(u)."""
    rho = _check_rho(rho)
    z = std_normal_quantile(_open_unit(u, "u"))
    theta = np.asarray(theta, dtype=np.float64)
    var = 1.0 - rho
    logr = -0.5 * (z - theta) ** 2 / var - 0.5 * math.log(var) + 0.5 * z * z
    return _out(np.exp(logr), u, theta)


def _theta_window(rho: float) -> tuple[float, float]:
    half = 8.0 * math.sqrt(rho)
    return -half, half


def gaussian_copula_density_by_mixture(u: float, v: float, rho: float,
                                       tol: float = 1e-8) -> float:
    """c_rho(u, v) as the integral over theta of psi(u) psi(v) N(theta | 0, rho).

    Independent route to :func:`gaussian_copula_density`; integrates with
    adaptive Gauss-Kronrod over theta in [-8 sqrt(rho), 8 sqrt(rho)].
    """
    rho = _check_rho(rho)
    zu = float(std_normal_quantile(_open_unit(u, "u")))
    zv = float(std_normal_quantile(_open_unit(v, "v")))
    var = 1.0 - rho
    # log psi_theta(u) = -(z - theta)^2 / (2 var) - log(var) / 2 + z^2 / 2
    const = -math.log(var) + 0.5 * (zu * zu + zv * zv) - 0.5 * math.log(2.0 * math.pi * rho)

    def integrand(theta):
        return np.exp(const - 0.5 * ((zu - theta) ** 2 + (zv - theta) ** 2) / var
                      - 0.5 * theta * theta / rho)

    lo, hi = _theta_window(rho)
    # posterior mode of theta given both z-scores
    prec = 2.0 / var + 1.0 / rho
    peak = min(max((zu + zv) / var / prec, lo), hi)
    val, _ = gk_quad(integrand, lo, hi, epsabs=tol * 1e-2, epsrel=tol * 1e-2,
                     breakpoints=(peak,))
    return val


def clayton_copula_density(u, v, n: int):
    """Clayton copula density with parameter 1/n (exponential-model update)."""
    if int(n) != n or n < 1:
        raise ValueError(f"Clayton index must be a positive integer, got {n}")
    n = int(n)
    u = _open_unit(u, "u")
    v = _open_unit(v, "v")
    lu = np.log1p(-u)
    lv = np.log1p(-v)
    base = np.exp(-lu / n) + np.exp(-lv / n) - 1.0
    logc = (math.log((n + 1) / n) - (1.0 + 1.0 / n) * (lu + lv)
            - (n + 2) * np.log(base))
    return _out(np.exp(logc), u, v)


def frechet_mixture_cdf(u, v, w: float):
    """Mixture (1 - w) u v + w min(u, v) of independence and upper-bound copulas."""
    w = float(w)
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"mixture weight must lie in [0, 1], got {w}")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any((u < 0) | (u > 1) | (v < 0) | (v > 1)):
        raise ValueError("copula arguments must lie in [0, 1]")
    return _out((1.0 - w) * u * v + w * np.minimum(u, v), u, v)


def t_functional(p_grid: "GridDistribution", p_star_density, rho: float,
                 clamp_eps: float = 1e-12, tol: float = 1e-8) -> float:
    """Divergence-like functional T(p) against a reference density p*.

    T(p) = int [ (int psi_theta(P(y)) p*(y) dy)^2 - 1 ] N(theta | 0, rho) dtheta,
    with the inner integral by trapezoid on the shared grid and the outer by
    adaptive Gauss-Kronrod. Zero when P is the distribution function of p*.
    """
    rho = _check_rho(rho)
    y = p_grid.points
    dens = np.asarray(p_star_density, dtype=np.float64)
    if dens.shape != y.shape:
        raise ValueError(
            f"grid mismatch: density has shape {dens.shape}, grid has {y.shape}"
        )
    u = np.clip(p_grid.cdf, clamp_eps, 1.0 - clamp_eps)
    z = std_normal_quantile(u)
    var = 1.0 - rho
    # weights for the trapezoid rule in y, folded with p* and 1/N(z|0,1)
    tw = np.empty_like(y)
    dy = np.diff(y)
    tw[0] = dy[0] / 2
    tw[-1] = dy[-1] / 2
    tw[1:-1] = (dy[:-1] + dy[1:]) / 2
    log_w = np.log(np.maximum(tw * dens, 1e-300)) + 0.5 * z * z
    log_w[tw * dens <= 0] = -np.inf
    log_norm = -0.5 * math.log(var)  # the 2 pi factors cancel against N(z|0,1)

    def integrand(theta):
        theta = np.asarray(theta)[:, None]
        inner = np.exp(log_norm - 0.5 * (z[None, :] - theta) ** 2 / var + log_w[None, :]).sum(axis=1)
        prior = np.exp(-0.5 * theta[:, 0] ** 2 / rho) / math.sqrt(2 * math.pi * rho)
        return (inner * inner - 1.0) * prior

    lo, hi = _theta_window(rho)
    val, _ = gk_quad(integrand, lo, hi, epsabs=tol, epsrel=tol, breakpoints=(0.0,))
    return val
