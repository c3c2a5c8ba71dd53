"""Closed-form Bayesian predictives for three conjugate models.

Each model's one-step predictive update is a known copula: Clayton for the
exponential model, Gaussian with correlation 1/(n + tau) for the normal
model, and a Frechet-Hoeffding/independence mixture for the multinomial
model. The ``*_check`` functions return the update computed both ways.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .copula import clayton_copula_density, frechet_mixture_cdf, gaussian_copula_density
from .special import std_normal_cdf, std_normal_pdf

# keeps the Clayton density total at y_eval = 0 where the cdf is exactly 0
CDF_CLAMP = 1e-15


def _clamp(p):
    return np.clip(p, CDF_CLAMP, 1.0 - CDF_CLAMP)


# -- exponential model, rate prior exp(-theta) -------------------------------

@dataclass(frozen=True)
class ExponentialState:
    """Sufficient statistic ``t = 1 + sum(y)`` and next-observation index ``n``."""

    t: float = 1.0
    n: int = 1

    def __post_init__(self):
        if not self.t >= 1.0:
            raise ValueError(f"t must be >= 1, got {self.t}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")

    def absorb(self, y: float) -> "ExponentialState":
        _check_nonneg(y)
        return ExponentialState(self.t + y, self.n + 1)


def _check_nonneg(y):
    if np.any(np.asarray(y) < 0):
        raise ValueError("exponential-model observations must be >= 0")


def exp_predictive_pdf(state: ExponentialState, y):
    _check_nonneg(y)
    y = np.asarray(y, dtype=np.float64)
    t, n = state.t, state.n
    r = t / (t + y)
    out = n / (t + y) * r ** n
    return float(out) if out.ndim == 0 else out


def exp_predictive_cdf(state: ExponentialState, y):
    _check_nonneg(y)
    y = np.asarray(y, dtype=np.float64)
    # 1 - (t / (t + y))^n, computed as -expm1(n log(t / (t + y)))
    out = -np.expm1(state.n * -np.log1p(y / state.t))
    return float(out) if out.ndim == 0 else out


def exp_copula_update_check(state: ExponentialState, y_obs: float,
                            y_eval: float) -> tuple[float, float]:
    """Return (direct, via_copula) values of the updated predictive at ``y_eval``."""
    direct = exp_predictive_pdf(state.absorb(y_obs), y_eval)
    u = _clamp(exp_predictive_cdf(state, y_eval))
    v = _clamp(exp_predictive_cdf(state, y_obs))
    via = exp_predictive_pdf(state, y_eval) * clayton_copula_density(u, v, state.n)
    return direct, float(via)


# -- normal model, unit variance, N(0, 1/tau) prior on the mean --------------

@dataclass(frozen=True)
class NormalState:
    tau: float = 1.0
    t: float = 0.0
    n: int = 1

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"prior precision tau must be > 0, got {self.tau}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")

    @property
    def mean(self) -> float:
        return self.t / (self.n - 1 + self.tau)

    @property
    def variance(self) -> float:
        return (self.n + self.tau) / (self.n - 1 + self.tau)

    @property
    def copula_rho(self) -> float:
        """Correlation of the Gaussian copula for the next update."""
        return 1.0 / (self.n + self.tau)

    def absorb(self, y: float) -> "NormalState":
        return NormalState(self.tau, self.t + y, self.n + 1)


def normal_predictive_pdf(state: NormalState, y):
    sd = math.sqrt(state.variance)
    out = std_normal_pdf((np.asarray(y, dtype=np.float64) - state.mean) / sd) / sd
    return out


def normal_predictive_cdf(state: NormalState, y):
    sd = math.sqrt(state.variance)
    return std_normal_cdf((np.asarray(y, dtype=np.float64) - state.mean) / sd)


def normal_copula_update_check(state: NormalState, y_obs: float,
                               y_eval: float) -> tuple[float, float]:
    direct = normal_predictive_pdf(state.absorb(y_obs), y_eval)
    u = normal_predictive_cdf(state, y_eval)
    v = normal_predictive_cdf(state, y_obs)
    via = normal_predictive_pdf(state, y_eval) * gaussian_copula_density(u, v, state.copula_rho)
    return float(direct), float(via)


# -- multinomial model with Dirichlet prior ----------------------------------

@dataclass(frozen=True)
class MultinomialState:
    """Dirichlet pseudo-counts and observed category counts.

    Categories are numbered 1..M. ``n`` is the number of absorbed observations.
    """

    alphas: tuple[float, ...]
    counts: tuple[int, ...] = field(default=())

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        counts = tuple(int(c) for c in self.counts) or (0,) * len(alphas)
        if len(counts) != len(alphas):
            raise ValueError("alphas and counts must have the same length")
        if any(a <= 0 for a in alphas):
            raise ValueError("Dirichlet parameters must be > 0")
        if any(c < 0 for c in counts):
            raise ValueError("counts must be >= 0")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def beta(self) -> float:
        return sum(self.alphas)

    @property
    def size(self) -> int:
        return len(self.alphas)

    def absorb(self, y: int) -> "MultinomialState":
        i = self._index(y)
        counts = list(self.counts)
        counts[i] += 1
        return MultinomialState(self.alphas, tuple(counts))

    def _index(self, y: int) -> int:
        if not 1 <= y <= self.size:
            raise IndexError(f"category {y} outside 1..{self.size}")
        return y - 1


def multinomial_predictive(state: MultinomialState, y: int) -> float:
    i = state._index(y)
    return (state.counts[i] + state.alphas[i]) / (state.n + state.beta)


def multinomial_predictive_vector(state: MultinomialState) -> np.ndarray:
    return (np.array(state.counts) + np.array(state.alphas)) / (state.n + state.beta)


def multinomial_update_ratio(state: MultinomialState, y: int, y_obs: int) -> float:
    """Ratio p_n(y) / p_{n-1}(y) after observing ``y_obs`` (``state`` is pre-update)."""
    i = state._index(y)
    state._index(y_obs)
    m, beta = state.n, state.beta
    bump = 1.0 / (state.counts[i] + state.alphas[i]) if y == y_obs else 0.0
    return (m + beta) / (m + 1 + beta) * (1.0 + bump)


def multinomial_copula_cdf_check(state: MultinomialState, y: int,
                                 y_obs: int) -> tuple[float, float]:
    """Return (direct, via_mixture) values of the update copula's cdf.

    ``direct`` sums the ratio-weighted product of predictive masses over
    categories at or below (y, y_obs); ``via_mixture`` evaluates the
    Frechet-Hoeffding/independence mixture at the predictive cdf values.
    """
    state._index(y)
    state._index(y_obs)
    p = multinomial_predictive_vector(state)
    direct = 0.0
    for z in range(1, y + 1):
        for zp in range(1, y_obs + 1):
            direct += multinomial_update_ratio(state, z, zp) * p[z - 1] * p[zp - 1]
    cdf = np.cumsum(p)
    w = 1.0 / (state.n + 1 + state.beta)
    via = frechet_mixture_cdf(min(cdf[y - 1], 1.0), min(cdf[y_obs - 1], 1.0), w)
    return float(direct), float(via)
