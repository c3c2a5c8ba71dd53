"""Check-loss evaluation, data generators, baselines and diagnostics.

Replicates the batch and sequential simulation designs at desk scale: the
recursive estimator is scored against a Gaussian-kernel density estimate
and against the true data-generating distribution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .estimator import (
    EstimatorConfig,
    GridDistribution,
    GridSpec,
    InitSpec,
    fit_sequence,
    init,
    quantile,
    update,
)

DEFAULT_QS = (0.001, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999)

T_DOF = 5


def check_loss(y, a, q: float):
    """Pinball loss (1 - q)(a - y) for y < a and q (y - a) for y > a."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    y = np.asarray(y, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    diff = y - a
    out = np.where(diff < 0, (q - 1.0) * diff, q * diff)
    return float(out) if out.ndim == 0 else out


def optimal_action(state: GridDistribution, q: float) -> float:
    """Check-loss minimizer under the estimated predictive, i.e. its q-quantile."""
    return quantile(state, q)


# ---------------------------------------------------------------------------
# two-component Student-t mixture

@dataclass(frozen=True)
class TMixtureSpec:
    """Mixture of two location-scale t5 laws.

    One component is fixed at location 1, scale 1; the other has location
    ``mu`` and scale ``s + 1``. ``w`` is the weight of the fixed component
    unless ``w_on_fixed`` is False.
    """

    w: float
    mu: float
    s: float
    w_on_fixed: bool = True

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"mixing weight must lie in [0, 1], got {self.w}")
        if not self.s >= 0.0:
            raise ValueError(f"scale offset must be >= 0, got {self.s}")

    @property
    def components(self) -> tuple[tuple[float, float, float], ...]:
        """(weight, location, scale) for the fixed and the random component."""
        w_fixed = self.w if self.w_on_fixed else 1.0 - self.w
        return ((w_fixed, 1.0, 1.0), (1.0 - w_fixed, self.mu, self.s + 1.0))

    def pdf(self, y):
        y = np.asarray(y, dtype=np.float64)
        out = sum(w * stats.t.pdf((y - loc) / sc, T_DOF) / sc for w, loc, sc in self.components)
        return float(out) if np.ndim(out) == 0 else out

    def cdf(self, y):
        y = np.asarray(y, dtype=np.float64)
        out = sum(w * stats.t.cdf((y - loc) / sc, T_DOF) for w, loc, sc in self.components)
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, q: float, xtol: float = 1e-10) -> float:
        """Inverse of the mixture cdf by bracketed root finding."""
        if not 0.0 < q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {q}")
        qs = [loc + sc * stats.t.ppf(q, T_DOF) for w, loc, sc in self.components if w > 0]
        lo, hi = min(qs) - 1.0, max(qs) + 1.0
        return optimize.brentq(lambda y: self.cdf(y) - q, lo, hi, xtol=xtol, rtol=1e-15)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        (w_fixed, loc1, sc1), (_, loc2, sc2) = self.components
        fixed = rng.random(n) < w_fixed
        t = rng.standard_t(T_DOF, size=n)
        return np.where(fixed, loc1 + sc1 * t, loc2 + sc2 * t)


def t_mixture_sample(spec: TMixtureSpec, n: int, seed) -> np.ndarray:
    return spec.sample(n, np.random.default_rng(seed))


def t_mixture_pdf(spec: TMixtureSpec, y):
    return spec.pdf(y)


def t_mixture_cdf(spec: TMixtureSpec, y):
    return spec.cdf(y)


def draw_mixture_spec(rng: np.random.Generator, w_on_fixed: bool = True) -> TMixtureSpec:
    """Hyperdraws w ~ Beta(2, 2), s ~ Gamma(1, 1), mu ~ N(0, 4) (variance 4)."""
    w = rng.beta(2.0, 2.0)
    s = rng.gamma(1.0, 1.0)
    mu = rng.normal(0.0, 2.0)
    return TMixtureSpec(w, mu, s, w_on_fixed)


# ---------------------------------------------------------------------------
# baseline and divergence

class ZeroVarianceError(ValueError):
    pass


def normal_reference_bandwidth(ys) -> float:
    ys = np.asarray(ys, dtype=np.float64)
    sd = float(np.std(ys, ddof=1))
    if not sd > 0:
        raise ZeroVarianceError("kernel bandwidth undefined for zero-variance data")
    return 1.06 * sd * ys.size ** (-0.2)


def kde_baseline(ys, grid: GridSpec) -> GridDistribution:
    """Gaussian KDE (normal-reference bandwidth) tabulated as a grid cdf."""
    ys = np.asarray(ys, dtype=np.float64)
    if ys.size < 2:
        raise ValueError("kernel density estimate needs at least two observations")
    bw = normal_reference_bandwidth(ys)
    pts = grid.points
    dens = np.zeros(grid.m)
    for y in ys:
        dens += np.exp(-0.5 * ((pts - y) / bw) ** 2)
    dens /= ys.size * bw * math.sqrt(2.0 * math.pi)
    h = grid.step
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * h * (dens[1:] + dens[:-1]))])
    cdf /= cdf[-1]
    return GridDistribution(grid, np.maximum.accumulate(np.clip(cdf, 0.0, 1.0)))


def kl_divergence(p_true_density, state: GridDistribution, floor: float = 1e-12) -> float:
    """Trapezoid quadrature of p* log(p* / p_hat) over the grid."""
    from .estimator import density

    p = np.asarray(p_true_density, dtype=np.float64)
    if p.shape != (state.grid.m,):
        raise ValueError(f"grid mismatch: density has shape {p.shape}, grid has {state.grid.m} points")
    q = np.maximum(density(state), floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(p > 0, p * np.log(p / q), 0.0)
    return float(np.trapezoid(integrand, dx=state.grid.step))


# ---------------------------------------------------------------------------
# scaled loss differences

@dataclass(frozen=True)
class DeltaQ:
    """Scaled loss difference and the three losses it was built from."""

    delta: np.ndarray
    loss_a: np.ndarray
    loss_b: np.ndarray
    loss_truth: np.ndarray


def _scaled(diff, truth):
    truth = np.asarray(truth, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(truth > 0, diff / truth, np.nan)


def delta_q_batch(recursive_actions, baseline_actions, oracle_actions, spec: TMixtureSpec,
                  oracle_mc: int = 100_000, seed=0, qs=DEFAULT_QS) -> DeltaQ:
    """Monte Carlo expected check loss of each action vector, scaled by the truth's.

    Entries with zero truth loss are NaN (undefined).
    """
    qs = tuple(qs)
    acts = [np.asarray(a, dtype=np.float64) for a in (recursive_actions, baseline_actions, oracle_actions)]
    if any(a.shape != (len(qs),) for a in acts):
        raise ValueError("action vectors must be indexed by the same quantile levels")
    draws = spec.sample(oracle_mc, np.random.default_rng(seed))
    losses = np.array([[np.mean(check_loss(draws, a[i], q)) for i, q in enumerate(qs)] for a in acts])
    return DeltaQ(_scaled(losses[0] - losses[1], losses[2]), losses[0], losses[1], losses[2])


class RecursivePredictor:
    """Online wrapper around the grid estimator."""

    def __init__(self, grid: GridSpec, config: EstimatorConfig):
        self.config = config
        self.state = init(grid, config)

    def observe(self, y: float) -> None:
        self.state = update(self.state, y, self.config)

    def action(self, q: float) -> float:
        return quantile(self.state, q)


class KDEPredictor:
    """Online KDE that re-selects the bandwidth after every observation."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.data: list[float] = []

    def observe(self, y: float) -> None:
        self.data.append(float(y))

    def action(self, q: float) -> float:
        return quantile(kde_baseline(self.data, self.grid), q)


@dataclass(frozen=True)
class SequentialResult:
    delta: float
    loss_a: float
    loss_b: float
    loss_truth: float
    steps_a: np.ndarray = field(repr=False)
    steps_b: np.ndarray = field(repr=False)
    steps_truth: np.ndarray = field(repr=False)


def delta_q_sequential(ys, method_a, method_b, q: float, truth_action: float,
                       prime: int = 4) -> SequentialResult:
    """Prime both predictors, then score each one-step-ahead action.

    For j > prime, the action after the first j - 1 observations is scored on
    y_j and y_j is then absorbed. The denominator uses the constant true
    q-quantile ``truth_action``. Both methods must be fresh.
    """
    ys = np.asarray(ys, dtype=np.float64)
    if prime < 0 or ys.size <= prime:
        raise ValueError(f"need more than prime={prime} observations, got {ys.size}")
    for y in ys[:prime]:
        method_a.observe(y)
        method_b.observe(y)
    n_steps = ys.size - prime
    la, lb = np.empty(n_steps), np.empty(n_steps)
    for i, y in enumerate(ys[prime:]):
        la[i] = check_loss(y, method_a.action(q), q)
        lb[i] = check_loss(y, method_b.action(q), q)
        method_a.observe(y)
        method_b.observe(y)
    lt = check_loss(ys[prime:], truth_action, q)
    lt = np.atleast_1d(lt)
    tot_a, tot_b, tot_t = float(la.sum()), float(lb.sum()), float(lt.sum())
    delta = (tot_a - tot_b) / tot_t if tot_t > 0 else math.nan
    return SequentialResult(delta, tot_a, tot_b, tot_t, la, lb, lt)


# ---------------------------------------------------------------------------
# studies

@dataclass(frozen=True)
class SimulationDesign:
    n_obs: int = 50
    n_trials: int = 500
    oracle_mc: int = 100_000
    seed: int = 0
    w_on_fixed: bool = True

    def __post_init__(self):
        if self.n_obs < 2 or self.n_trials < 1 or self.oracle_mc < 1:
            raise ValueError("design needs n_obs >= 2, n_trials >= 1, oracle_mc >= 1")

    def trial_rngs(self) -> list[np.random.Generator]:
        """One independent generator per trial, spawned from the design seed."""
        return [np.random.default_rng(s) for s in np.random.SeedSequence(self.seed).spawn(self.n_trials)]


# Wide uniform grid for raw t-mixture data under a standard Cauchy start.
STUDY_GRID = GridSpec(-500.0, 500.0, 20001)
STUDY_CONFIG = EstimatorConfig(init=InitSpec.cauchy(0.0, 1.0))


def run_batch_study(design: SimulationDesign, qs=DEFAULT_QS, grid: GridSpec = STUDY_GRID,
                    config: EstimatorConfig = STUDY_CONFIG) -> list[dict]:
    """Per-trial rows (trial, q, delta_q, loss_rec, loss_base, loss_truth)."""
    rows = []
    for trial, rng in enumerate(design.trial_rngs()):
        spec = draw_mixture_spec(rng, design.w_on_fixed)
        ys = spec.sample(design.n_obs, rng)
        rec = fit_sequence(ys, grid, config)
        base = kde_baseline(ys, grid)
        a_rec = [quantile(rec, q) for q in qs]
        a_base = [quantile(base, q) for q in qs]
        a_truth = [spec.quantile(q) for q in qs]
        oracle_seed = int(rng.integers(2**63))
        res = delta_q_batch(a_rec, a_base, a_truth, spec, design.oracle_mc, oracle_seed, qs)
        for i, q in enumerate(qs):
            rows.append(dict(trial=trial, q=q, delta_q=float(res.delta[i]),
                             loss_rec=float(res.loss_a[i]), loss_base=float(res.loss_b[i]),
                             loss_truth=float(res.loss_truth[i])))
    return rows


def run_sequential_study(design: SimulationDesign, q: float = 0.1, prime: int = 4,
                         grid: GridSpec = STUDY_GRID,
                         config: EstimatorConfig = STUDY_CONFIG) -> list[dict]:
    rows = []
    for trial, rng in enumerate(design.trial_rngs()):
        spec = draw_mixture_spec(rng, design.w_on_fixed)
        ys = spec.sample(design.n_obs, rng)
        res = delta_q_sequential(ys, RecursivePredictor(grid, config), KDEPredictor(grid),
                                 q, spec.quantile(q), prime)
        rows.append(dict(trial=trial, q=q, delta_q=res.delta, loss_rec=res.loss_a,
                         loss_base=res.loss_b, loss_truth=res.loss_truth))
    return rows


def summarize(rows: list[dict], sequential: bool = False) -> list[dict]:
    """Mean, median and sd of delta_q per quantile level (plus Pr(delta < 0))."""
    out = []
    for q in sorted({r["q"] for r in rows}):
        d = np.array([r["delta_q"] for r in rows if r["q"] == q])
        d = d[np.isfinite(d)]
        agg = dict(q=q, n=int(d.size), mean=float(np.mean(d)), median=float(np.median(d)),
                   sd=float(np.std(d, ddof=1)) if d.size > 1 else 0.0)
        if sequential:
            agg["pr_negative"] = float(np.mean(d < 0))
        out.append(agg)
    return out
