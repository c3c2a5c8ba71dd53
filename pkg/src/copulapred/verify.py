"""User-facing identity checks: copula quadrature, exact oracles, consistency."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import copula, exact
from .estimator import EstimatorConfig, GridSpec, InitSpec, fit_sequence
from .eval import kl_divergence
from .quadrature import gk_quad
from .special import std_normal_pdf

SUITES = ("copulas", "exact", "consistency")


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool
    comparison: str = "<="


def _le(name, measured, tol):
    return Check(name, float(measured), float(tol), bool(measured <= tol))


def copula_checks(seed: int = 0) -> list[Check]:
    out = []
    lattice = np.linspace(0.01, 0.99, 10)
    for rho in (0.5, 0.9, 0.95):
        worst = max(
            abs(copula.gaussian_copula_density(u, v, rho)
                - copula.gaussian_copula_density_by_mixture(u, v, rho))
            for u in lattice for v in lattice
        )
        out.append(_le(f"mixture representation rho={rho}", worst, 1e-6))
    worst = 0.0
    for u in np.arange(1, 10) / 10:
        val, _ = gk_quad(lambda v: copula.h_rho(u, np.clip(v, 1e-300, None), 0.95),
                         0.0, 1.0, epsabs=1e-10, epsrel=1e-10,
                         breakpoints=(1e-6, 1e-3, 0.5, 1 - 1e-3, 1 - 1e-6))
        worst = max(worst, abs(val - u))
    out.append(_le("conditional cdf integrates to marginal (rho=0.95)", worst, 1e-6))
    return out


def exact_checks(seed: int = 0, pairs: int = 100) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst_exp = worst_norm = worst_mult = 0.0
    for i in range(pairs):
        n = 1 + i % 20
        t = 1.0 + rng.gamma(n, 1.0) if n > 1 else 1.0
        state = exact.ExponentialState(t, n)
        y_obs, y_eval = rng.exponential(state.t / state.n, size=2)
        d, v = exact.exp_copula_update_check(state, y_obs, y_eval)
        worst_exp = max(worst_exp, abs(d - v) / d)

        tau = (0.5, 1.0, 4.0)[i % 3]
        nstate = exact.NormalState(tau, float(rng.normal(0.0, 1.0) * (n - 1)), n)
        sd = np.sqrt(nstate.variance)
        y_obs, y_eval = rng.normal(nstate.mean, 2 * sd, size=2)
        d, v = exact.normal_copula_update_check(nstate, y_obs, y_eval)
        worst_norm = max(worst_norm, abs(d - v) / d)

        m = 2 + i % 5
        mstate = exact.MultinomialState(tuple(rng.uniform(0.2, 3.0, m)),
                                        tuple(rng.integers(0, 6, m)))
        y, y_obs = rng.integers(1, m + 1, size=2)
        d, v = exact.multinomial_copula_cdf_check(mstate, int(y), int(y_obs))
        worst_mult = max(worst_mult, abs(d - v))
    return [
        _le("exponential model / Clayton update (relative)", worst_exp, 1e-10),
        _le("normal model / Gaussian update (relative)", worst_norm, 1e-8),
        _le("multinomial model / Frechet mixture cdf", worst_mult, 1e-12),
    ]


CONSISTENCY_GRID = GridSpec(-8.0, 8.0, 2048)
CONSISTENCY_CONFIG = EstimatorConfig(rho=0.95, weight_a=1.0, init=InitSpec.normal(0.0, 2.0))


def consistency_kl(seed: int = 0, seeds: int = 10, sizes=(50, 5000)) -> dict[int, float]:
    """Median over seeds of KL(N(0,1), p_n) for each sample size."""
    grid = CONSISTENCY_GRID
    p_star = std_normal_pdf(grid.points)
    kls = {n: [] for n in sizes}
    for child in np.random.SeedSequence(seed).spawn(seeds):
        ys = np.random.default_rng(child).standard_normal(max(sizes))
        for n in sizes:
            kls[n].append(kl_divergence(p_star, fit_sequence(ys[:n], grid, CONSISTENCY_CONFIG)))
    return {n: float(np.median(v)) for n, v in kls.items()}


def consistency_checks(seed: int = 0) -> list[Check]:
    kl = consistency_kl(seed)
    return [
        Check("median KL at n=5000 below n=50", kl[5000], kl[50], kl[5000] < kl[50], "<"),
        Check("median KL at n=5000", kl[5000], 0.01, kl[5000] < 0.01, "<"),
    ]


def run_suite(name: str, seed: int = 0) -> list[Check]:
    if name == "copulas":
        return copula_checks(seed)
    if name == "exact":
        return exact_checks(seed)
    if name == "consistency":
        return consistency_checks(seed)
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
