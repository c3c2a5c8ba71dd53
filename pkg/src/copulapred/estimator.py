"""Recursive predictive-distribution estimator on a fixed grid.

The predictive distribution function is stored at uniform grid points and
updated in place of a posterior:

    P_n(y) = (1 - a_n) P_{n-1}(y) + a_n H_rho(P_{n-1}(y), P_{n-1}(y_n)),

with a_n = weight_a / (n + 1) and H_rho the conditional Gaussian-copula cdf.
Every state is an immutable value; ``update`` returns a new one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .special import ndtr, ndtri_raw

__all__ = [
    "ConfigurationError",
    "QuantileRangeError",
    "GridSpec",
    "InitSpec",
    "EstimatorConfig",
    "GridDistribution",
    "BivariateGridDistribution",
    "default_grid",
    "init",
    "update",
    "interp_cdf",
    "density",
    "quantile",
    "mean",
    "fit_sequence",
    "bivariate_init",
    "bivariate_update",
    "bivariate_fit_sequence",
    "bivariate_density",
    "monotonicity_violations",
]


class ConfigurationError(ValueError):
    pass


class QuantileRangeError(ValueError):
    def __init__(self, q: float, q_min: float, q_max: float):
        super().__init__(
            f"q={q!r} outside the achievable range ({q_min!r}, {q_max!r})"
        )
        self.q = q
        self.q_min = q_min
        self.q_max = q_max


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    m: int = 1024

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise ConfigurationError(f"grid needs finite lo < hi, got [{self.lo}, {self.hi}]")
        if int(self.m) != self.m or self.m < 16:
            raise ConfigurationError(f"grid needs at least 16 points, got {self.m}")
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "m", int(self.m))

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.m - 1)

    @property
    def points(self) -> np.ndarray:
        return self.lo + np.arange(self.m) * self.step

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``"lo,hi,m"``."""
        parts = text.split(",")
        if len(parts) != 3:
            raise ConfigurationError(f"grid must be 'lo,hi,m', got {text!r}")
        return cls(float(parts[0]), float(parts[1]), int(parts[2]))

    def __str__(self) -> str:
        return f"{self.lo!r},{self.hi!r},{self.m}"


_INIT_KINDS = ("normal", "cauchy", "eb-normal")


@dataclass(frozen=True)
class InitSpec:
    """Initial guess P_0.

    ``normal`` takes (mean, variance), ``cauchy`` takes (location, scale),
    ``eb-normal`` takes a variance and centers at the mean of a data preview.
    """

    kind: str = "normal"
    loc: float = 0.0
    spread: float = 1.0

    def __post_init__(self):
        if self.kind not in _INIT_KINDS:
            raise ConfigurationError(f"unknown initial distribution {self.kind!r}")
        if not self.spread > 0:
            raise ConfigurationError(f"{self.kind} spread parameter must be > 0")

    @classmethod
    def normal(cls, mean: float = 0.0, variance: float = 1.0) -> "InitSpec":
        return cls("normal", mean, variance)

    @classmethod
    def cauchy(cls, location: float = 0.0, scale: float = 1.0) -> "InitSpec":
        return cls("cauchy", location, scale)

    @classmethod
    def eb_normal(cls, variance: float) -> "InitSpec":
        return cls("eb-normal", 0.0, variance)

    @classmethod
    def parse(cls, text: str) -> "InitSpec":
        """Parse ``normal:m,v``, ``cauchy:l,s`` or ``eb-normal:v``."""
        kind, _, args = text.partition(":")
        kind = kind.strip()
        try:
            vals = [float(a) for a in args.split(",")] if args else []
        except ValueError:
            raise ConfigurationError(f"bad initial distribution {text!r}") from None
        if kind == "eb-normal" and len(vals) == 1:
            return cls.eb_normal(vals[0])
        if kind in ("normal", "cauchy") and len(vals) == 2:
            return cls(kind, vals[0], vals[1])
        raise ConfigurationError(
            f"bad initial distribution {text!r}; expected normal:m,v | cauchy:l,s | eb-normal:v"
        )

    def __str__(self) -> str:
        if self.kind == "eb-normal":
            return f"eb-normal:{self.spread!r}"
        return f"{self.kind}:{self.loc!r},{self.spread!r}"

    def resolve(self, preview=None) -> "InitSpec":
        """Concrete form; ``eb-normal`` becomes ``normal`` centered on the preview mean."""
        if self.kind != "eb-normal":
            return self
        if preview is None or len(preview) == 0:
            raise ConfigurationError("eb-normal initialization needs a nonempty data preview")
        return InitSpec.normal(float(np.mean(preview)), self.spread)

    def cdf(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "cauchy":
            x = (y - self.loc) / self.spread
            # arctan2 form keeps the lower tail accurate
            return np.where(x < 0, np.arctan2(1.0, -x), np.pi - np.arctan2(1.0, x)) / np.pi
        if self.kind == "normal":
            from .special import std_normal_cdf
            return std_normal_cdf((y - self.loc) / math.sqrt(self.spread))
        raise ConfigurationError("resolve eb-normal against a data preview first")

    def quantile(self, p: float) -> float:
        if self.kind == "cauchy":
            return self.loc + self.spread * math.tan(math.pi * (p - 0.5))
        if self.kind == "normal":
            from .special import std_normal_quantile
            return self.loc + math.sqrt(self.spread) * float(std_normal_quantile(p))
        raise ConfigurationError("resolve eb-normal against a data preview first")

    @property
    def default_coverage(self) -> float:
        # a Cauchy tail cannot be pushed below 1e-6 on a practical grid
        return 1e-3 if self.kind == "cauchy" else 1e-6


@dataclass(frozen=True)
class EstimatorConfig:
    rho: float = 0.95
    weight_a: float = 1.0
    clamp_eps: float = 1e-10
    init: InitSpec = field(default_factory=InitSpec)
    # endpoint mass allowed outside the grid at initialization; None picks
    # the default for the initial family
    coverage: float | None = None

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ConfigurationError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0.0 < self.weight_a < 2.0:
            raise ConfigurationError(
                f"weight_a must lie in (0, 2) so that every weight a/(n+1) is in (0, 1), got {self.weight_a}"
            )
        if not 0.0 < self.clamp_eps <= 0.01:
            raise ConfigurationError(f"clamp_eps must lie in (0, 0.01], got {self.clamp_eps}")
        if self.coverage is not None and not 0.0 < self.coverage < 0.5:
            raise ConfigurationError(f"coverage must lie in (0, 0.5), got {self.coverage}")

    @property
    def coverage_bound(self) -> float:
        return self.init.default_coverage if self.coverage is None else self.coverage

    def alpha(self, n: int) -> float:
        """Weight of the n-th update, n >= 1."""
        return self.weight_a / (n + 1)


# ---------------------------------------------------------------------------
# states

def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridDistribution:
    """Predictive distribution function tabulated on a grid.

    ``tail_hits`` counts absorbed observations that fell outside the grid.
    """

    grid: GridSpec
    cdf: np.ndarray
    count: int = 0
    tail_hits: int = 0

    def __post_init__(self):
        cdf = _frozen(self.cdf)
        if cdf.shape != (self.grid.m,):
            raise ValueError(f"cdf has shape {cdf.shape}, grid has {self.grid.m} points")
        if np.any(~np.isfinite(cdf)) or np.any((cdf < 0.0) | (cdf > 1.0)):
            raise ValueError("cdf values must lie in [0, 1]")
        if np.any(np.diff(cdf) < 0):
            raise ValueError("cdf must be nondecreasing along the grid")
        object.__setattr__(self, "cdf", cdf)

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    @property
    def residual_mass(self) -> tuple[float, float]:
        """Mass below the first and above the last grid point."""
        return float(self.cdf[0]), float(1.0 - self.cdf[-1])


@dataclass(frozen=True, eq=False)
class BivariateGridDistribution:
    """Joint distribution function on a grid_y x grid_x lattice (rows are y)."""

    grid_y: GridSpec
    grid_x: GridSpec
    cdf: np.ndarray
    count: int = 0
    tail_hits: int = 0

    def __post_init__(self):
        cdf = _frozen(self.cdf)
        if cdf.shape != (self.grid_y.m, self.grid_x.m):
            raise ValueError(
                f"cdf has shape {cdf.shape}, expected {(self.grid_y.m, self.grid_x.m)}"
            )
        if np.any(~np.isfinite(cdf)) or np.any((cdf < 0.0) | (cdf > 1.0)):
            raise ValueError("cdf values must lie in [0, 1]")
        object.__setattr__(self, "cdf", cdf)


# ---------------------------------------------------------------------------
# compiled kernels

@njit(cache=True, nogil=True)
def _interp(cdf, lo, step, y):
    t = (y - lo) / step
    m = cdf.shape[0]
    if t <= 0.0:
        return cdf[0]
    if t >= m - 1:
        return cdf[m - 1]
    k = int(t)
    f = t - k
    return cdf[k] + f * (cdf[k + 1] - cdf[k])


@njit(cache=True, nogil=True)
def _cutoffs(shift, scale, alpha, eps):
    """Thresholds on u outside which H_rho(u, v) is exactly 0 or 1 for the blend.

    Below ``u_lo`` the copula term is smaller than half an ulp of the retained
    (1 - alpha) * u (u >= eps there), above ``u_hi`` it rounds to one.
    """
    tiny = 1.1e-16 * (1.0 - alpha) * eps / alpha
    x_lo = ndtri_raw(tiny) if tiny > 0.0 else -40.0
    u_lo = ndtr(x_lo * scale + shift)
    u_hi = ndtr(8.3 * scale + shift)
    return u_lo, u_hi


@njit(cache=True, nogil=True)
def _h(u, shift, scale, eps, z_lo, z_hi):
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    if u < eps:
        z = z_lo
    elif u > 1.0 - eps:
        z = z_hi
    else:
        z = ndtri_raw(u)
    return ndtr((z - shift) / scale)


@njit(cache=True, nogil=True)
def _fold(cdf, lo, step, ys, rho, weight_a, eps, start):
    """Absorb ``ys`` in order into ``cdf`` (in place); returns the tail-hit count."""
    m = cdf.shape[0]
    hi = lo + (m - 1) * step
    scale = math.sqrt(1.0 - rho * rho)
    z_lo = ndtri_raw(eps)
    z_hi = ndtri_raw(1.0 - eps)
    hits = 0
    for i in range(ys.shape[0]):
        y = ys[i]
        if y < lo or y > hi:
            hits += 1
        alpha = weight_a / (start + i + 2.0)
        v = _interp(cdf, lo, step, y)
        v = min(max(v, eps), 1.0 - eps)
        shift = rho * ndtri_raw(v)
        u_lo, u_hi = _cutoffs(shift, scale, alpha, eps)
        h_lo = ndtr((z_lo - shift) / scale)
        h_hi = ndtr((z_hi - shift) / scale)
        keep = 1.0 - alpha
        # H is increasing in u; the running maximum only absorbs rounding
        # noise of the composed Phi(Phi^-1(u)) so the blend stays monotone
        h_prev = 0.0
        for j in range(m):
            u = cdf[j]
            if u <= 0.0:
                h = 0.0
            elif u >= 1.0:
                h = 1.0
            elif u < eps:
                h = h_lo
            elif u > 1.0 - eps:
                h = h_hi
            elif u <= u_lo:
                h = 0.0
            elif u >= u_hi:
                h = 1.0
            else:
                h = ndtr((ndtri_raw(u) - shift) / scale)
            if h < h_prev:
                h = h_prev
            h_prev = h
            cdf[j] = keep * u + alpha * h
    return hits


@njit(cache=True, nogil=True)
def _blend(cdf, v, alpha, rho, eps):
    """One update with an explicit weight and conditioning value ``v``."""
    scale = math.sqrt(1.0 - rho * rho)
    z_lo = ndtri_raw(eps)
    z_hi = ndtri_raw(1.0 - eps)
    v = min(max(v, eps), 1.0 - eps)
    shift = rho * ndtri_raw(v)
    out = np.empty_like(cdf)
    h_prev = 0.0
    for j in range(cdf.shape[0]):
        h = max(_h(cdf[j], shift, scale, eps, z_lo, z_hi), h_prev)
        h_prev = h
        out[j] = (1.0 - alpha) * cdf[j] + alpha * h
    return out


@njit(cache=True, nogil=True)
def _bivariate_step(cdf, lo_y, step_y, lo_x, step_x, y_obs, x_obs, alpha, rho, eps):
    my, mx = cdf.shape
    scale = math.sqrt(1.0 - rho * rho)
    # P(y_obs, x_k) along each column and P(y_j, x_obs) along each row
    shift_col = np.empty(mx)
    for k in range(mx):
        v = _interp(cdf[:, k], lo_y, step_y, y_obs)
        v = min(max(v, eps), 1.0 - eps)
        shift_col[k] = rho * ndtri_raw(v)
    shift_row = np.empty(my)
    for j in range(my):
        v = _interp(cdf[j, :], lo_x, step_x, x_obs)
        v = min(max(v, eps), 1.0 - eps)
        shift_row[j] = rho * ndtri_raw(v)
    out = np.empty_like(cdf)
    for j in range(my):
        for k in range(mx):
            u = cdf[j, k]
            if u <= 0.0:
                prod = 0.0
            elif u >= 1.0:
                prod = 1.0
            else:
                # cell values are not lifted to eps: along the low edges the
                # conditioning values are themselves below eps, and a shared
                # H(eps, eps) would put mass where the cdf is ~0
                z = ndtri_raw(u)
                prod = ndtr((z - shift_col[k]) / scale) * ndtr((z - shift_row[j]) / scale)
            out[j, k] = (1.0 - alpha) * u + alpha * prod
    return out


# ---------------------------------------------------------------------------
# univariate operations

def default_grid(config: EstimatorConfig, data_preview=None, m: int = 1024) -> GridSpec:
    """Grid spanning both the preview (mean +/- 10 sd) and the bulk of P_0.

    The P_0 part reaches the configured coverage bound, with a margin for
    normal kinds and +/- 500 scales for Cauchy.
    """
    init_spec = config.init.resolve(data_preview)
    if init_spec.kind == "cauchy":
        half = 500.0 * init_spec.spread
        lo, hi = init_spec.loc - half, init_spec.loc + half
    else:
        tail = min(1e-6, config.coverage_bound) / 10
        lo, hi = float(init_spec.quantile(tail)), float(init_spec.quantile(1 - tail))
    if data_preview is not None and len(data_preview) > 1:
        data = np.asarray(data_preview, dtype=np.float64)
        centre, sd = float(np.mean(data)), float(np.std(data, ddof=1))
        if sd > 0:
            lo, hi = min(lo, centre - 10 * sd), max(hi, centre + 10 * sd)
    return GridSpec(lo, hi, m)


def _check_coverage(cdf: np.ndarray, bound: float, what: str = "") -> None:
    if cdf[0] > bound:
        raise ConfigurationError(
            f"grid does not cover P_0{what}: cdf at lower end is {cdf[0]:.3g} > {bound:g}"
        )
    if cdf[-1] < 1.0 - bound:
        raise ConfigurationError(
            f"grid does not cover P_0{what}: cdf at upper end is {cdf[-1]:.6g} < 1 - {bound:g}"
        )


def init(grid: GridSpec, config: EstimatorConfig, data_preview=None) -> GridDistribution:
    """Tabulate the initial guess P_0 on the grid."""
    p0 = config.init.resolve(data_preview)
    cdf = p0.cdf(grid.points)
    _check_coverage(cdf, config.coverage_bound)
    return GridDistribution(grid, cdf)


def _check_finite(*ys) -> None:
    for y in ys:
        if not math.isfinite(y):
            raise ValueError(f"observation must be finite, got {y!r}")


def update(state: GridDistribution, y_obs: float, config: EstimatorConfig) -> GridDistribution:
    """Absorb one observation; returns a new state."""
    y_obs = float(y_obs)
    _check_finite(y_obs)
    cdf = np.array(state.cdf)
    hits = _fold(cdf, state.grid.lo, state.grid.step, np.array([y_obs]),
                 config.rho, config.weight_a, config.clamp_eps, state.count)
    return GridDistribution(state.grid, cdf, state.count + 1, state.tail_hits + hits)


def blend_update(state: GridDistribution, y_obs: float, alpha: float, rho: float,
                 clamp_eps: float = 1e-10) -> GridDistribution:
    """Single update with an explicit weight ``alpha`` in (0, 1].

    With ``alpha = 1`` the result is the pure copula term H_rho(P(y), P(y_obs)).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    _check_finite(float(y_obs))
    v = interp_cdf(state, y_obs)
    cdf = _blend(np.asarray(state.cdf), v, float(alpha), float(rho), float(clamp_eps))
    return GridDistribution(state.grid, cdf, state.count + 1, state.tail_hits)


def interp_cdf(state: GridDistribution, y):
    """Piecewise-linear cdf with constant extrapolation past the grid ends."""
    pts = state.points
    out = np.interp(np.asarray(y, dtype=np.float64), pts, state.cdf)
    return float(out) if np.ndim(out) == 0 else out


def density(state: GridDistribution) -> np.ndarray:
    """Difference-ratio density: central inside, one-sided at the two ends."""
    return np.gradient(state.cdf, state.grid.step)


def quantile(state: GridDistribution, q: float) -> float:
    """Leftmost y with interp_cdf(y) = q."""
    cdf = state.cdf
    q = float(q)
    if not cdf[0] < q < cdf[-1]:
        raise QuantileRangeError(q, float(cdf[0]), float(cdf[-1]))
    k = int(np.searchsorted(cdf, q, side="left"))
    c0, c1 = cdf[k - 1], cdf[k]
    step = state.grid.step
    return state.grid.lo + (k - 1) * step + (q - c0) / (c1 - c0) * step


def mean(state: GridDistribution) -> float:
    return float(np.trapezoid(state.points * density(state), dx=state.grid.step))


def fit_sequence(ys, grid: GridSpec, config: EstimatorConfig, permutations: int = 0,
                 seed: int = 0) -> GridDistribution:
    """Fold ``ys`` through the update from P_0.

    With ``permutations = k > 0`` the data are folded in ``k`` seeded random
    orders and the final distribution functions are averaged pointwise.
    ``eb-normal`` initializations use ``ys`` as the data preview.
    """
    ys = np.asarray(ys, dtype=np.float64)
    if ys.ndim != 1 or ys.size == 0:
        raise ValueError("need a nonempty 1-d sequence of observations")
    if not np.all(np.isfinite(ys)):
        bad = int(np.flatnonzero(~np.isfinite(ys))[0])
        raise ValueError(f"observation {bad} is not finite")
    start = init(grid, config, ys)
    if permutations < 0:
        raise ValueError("permutations must be >= 0")
    orders = [ys] if permutations == 0 else None
    if orders is None:
        rng = np.random.default_rng(seed)
        orders = [rng.permutation(ys) for _ in range(permutations)]
    total = np.zeros(grid.m)
    hits = 0
    for order in orders:
        cdf = np.array(start.cdf)
        hits = _fold(cdf, grid.lo, grid.step, order, config.rho, config.weight_a,
                     config.clamp_eps, 0)
        total += cdf
    avg = total / len(orders)
    # averaging can push a value a rounding error past 1
    np.clip(avg, 0.0, 1.0, out=avg)
    return GridDistribution(grid, avg, len(ys), hits)


# ---------------------------------------------------------------------------
# bivariate extension

def bivariate_init(grid_y: GridSpec, grid_x: GridSpec, config: EstimatorConfig,
                   init_x: InitSpec | None = None, preview_y=None,
                   preview_x=None) -> BivariateGridDistribution:
    """Independent start P_0(y, x) = P_0(y) P_0(x).

    ``config.init`` gives the y margin; ``init_x`` (default: the same) the x margin.
    """
    py = config.init.resolve(preview_y).cdf(grid_y.points)
    px = (init_x or config.init).resolve(preview_x).cdf(grid_x.points)
    bound = config.coverage_bound if init_x is None else max(
        config.coverage_bound, init_x.default_coverage)
    _check_coverage(py, bound, " (y margin)")
    _check_coverage(px, bound, " (x margin)")
    return BivariateGridDistribution(grid_y, grid_x, np.outer(py, px))


def bivariate_update(state: BivariateGridDistribution, y_obs: float, x_obs: float,
                     config: EstimatorConfig) -> BivariateGridDistribution:
    y_obs, x_obs = float(y_obs), float(x_obs)
    _check_finite(y_obs, x_obs)
    gy, gx = state.grid_y, state.grid_x
    alpha = config.alpha(state.count + 1)
    cdf = _bivariate_step(np.asarray(state.cdf), gy.lo, gy.step, gx.lo, gx.step,
                          y_obs, x_obs, alpha, config.rho, config.clamp_eps)
    outside = not (gy.lo <= y_obs <= gy.hi and gx.lo <= x_obs <= gx.hi)
    return BivariateGridDistribution(gy, gx, cdf, state.count + 1,
                                     state.tail_hits + int(outside))


def bivariate_fit_sequence(ys, xs, grid_y: GridSpec, grid_x: GridSpec,
                           config: EstimatorConfig, permutations: int = 0, seed: int = 0,
                           init_x: InitSpec | None = None) -> BivariateGridDistribution:
    ys = np.asarray(ys, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    if ys.shape != xs.shape or ys.ndim != 1 or ys.size == 0:
        raise ValueError("need two nonempty 1-d sequences of equal length")
    start = bivariate_init(grid_y, grid_x, config, init_x, ys, xs)
    if permutations == 0:
        orders = [np.arange(ys.size)]
    else:
        rng = np.random.default_rng(seed)
        orders = [rng.permutation(ys.size) for _ in range(permutations)]
    total = np.zeros_like(start.cdf)
    for order in orders:
        state = start
        for i in order:
            state = bivariate_update(state, ys[i], xs[i], config)
        total += state.cdf
    avg = np.clip(total / len(orders), 0.0, 1.0)
    return BivariateGridDistribution(grid_y, grid_x, avg, ys.size, state.tail_hits)


def bivariate_density(state: BivariateGridDistribution) -> np.ndarray:
    """Mixed second difference ratio of the joint cdf."""
    d_y = np.gradient(state.cdf, state.grid_y.step, axis=0)
    return np.gradient(d_y, state.grid_x.step, axis=1)


def monotonicity_violations(state: BivariateGridDistribution, tol: float = 0.0) -> int:
    """Number of adjacent pairs (along rows or columns) where the cdf decreases."""
    c = state.cdf
    return int(np.sum(np.diff(c, axis=0) < -tol) + np.sum(np.diff(c, axis=1) < -tol))
