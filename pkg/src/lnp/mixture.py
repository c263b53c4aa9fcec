"""Gaussian kernel, normal/inverse-gamma base measure, and post-processing.

The base measure factorizes as V ~ IG(s0, S0), M | V ~ N(m, tau V), with
hyperpriors m ~ N(a, A) and 1/tau ~ Gam(w/2, W/2).  The single-observation
marginal under the base is a location-scale Student-t with 2 s0 degrees of
freedom, location m and scale sqrt(S0 (1+tau) / s0).
"""

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DomainError, NumericalError

__all__ = [
    "NIGBase",
    "ClusterValue",
    "DensitySummary",
    "kernel_density",
    "log_kernel",
    "marginal_likelihood",
    "log_marginal_likelihood",
    "posterior_cell",
    "log_cluster_marginal",
    "component_summaries",
    "ComponentTables",
    "bayes_factor",
    "BayesFactorResult",
    "pacf",
]


@dataclass(frozen=True)
class NIGBase:
    """Normal/inverse-gamma base measure with its hyperprior parameters."""

    s0: float
    S0: float
    m: float
    tau: float
    a: float
    A: float
    w: float
    W: float

    def __post_init__(self):
        for name in ("s0", "S0", "tau", "A", "w", "W"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"NIGBase.{name} must be positive")

    def with_hyper(self, m, tau):
        return replace(self, m=m, tau=tau)


@dataclass(frozen=True)
class ClusterValue:
    M: float
    V: float

    def __post_init__(self):
        if not self.V > 0.0:
            raise DomainError(f"cluster variance must be positive, got {self.V}")


_LOG_2PI = math.log(2.0 * math.pi)


def log_kernel(x, m, v):
    return -0.5 * (_LOG_2PI + np.log(v) + (x - m) ** 2 / v)


def kernel_density(theta, x):
    """Gaussian kernel h(x; M, V)."""
    if theta.V <= 0.0:
        raise DomainError("kernel variance must be positive")
    return float(np.exp(log_kernel(x, theta.M, theta.V)))


def log_marginal_likelihood(base, x):
    """log of the single-observation marginal int h(x; theta) Q0(d theta)."""
    nu = 2.0 * base.s0
    scale2 = base.S0 * (1.0 + base.tau) / base.s0
    z2 = (x - base.m) ** 2 / scale2
    return (
        gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * np.log(nu * math.pi * scale2)
        - 0.5 * (nu + 1.0) * np.log1p(z2 / nu)
    )


def marginal_likelihood(base, x):
    return float(np.exp(log_marginal_likelihood(base, x)))


class PosteriorCell(NamedTuple):
    """Conjugate posterior parameters for one cluster's (M, V)."""

    kappa: float
    mean: float
    shape: float
    scale: float


def posterior_cell(base, xs):
    """Normal/inverse-gamma posterior given the cluster's observations."""
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    kappa0 = 1.0 / base.tau
    if n == 0:
        return PosteriorCell(kappa0, base.m, base.s0, base.S0)
    xbar = float(xs.mean())
    ss = float(((xs - xbar) ** 2).sum())
    kappa = kappa0 + n
    mean = (kappa0 * base.m + n * xbar) / kappa
    shape = base.s0 + 0.5 * n
    scale = base.S0 + 0.5 * ss + 0.5 * kappa0 * n * (xbar - base.m) ** 2 / kappa
    return PosteriorCell(kappa, mean, shape, scale)


def sample_cluster_value(base, xs, rng):
    """Draw (M, V) from the conjugate posterior given member observations."""
    cell = posterior_cell(base, xs)
    v = cell.scale / rng.gamma(cell.shape)
    m = rng.normal(cell.mean, math.sqrt(v / cell.kappa))
    return ClusterValue(m, v)


def log_cluster_marginal(base, xs):
    """log of the joint marginal of a cluster's observations under the base,
    via the chain of one-observation posterior predictives."""
    xs = np.asarray(xs, dtype=float)
    total = 0.0
    current = base
    seen = []
    for x in xs:
        total += log_marginal_likelihood(current, float(x))
        seen.append(float(x))
        cell = posterior_cell(base, seen)
        # re-express the updated cell as an equivalent base for the next step
        current = NIGBase(
            s0=cell.shape,
            S0=cell.scale,
            m=cell.mean,
            tau=1.0 / cell.kappa,
            a=base.a,
            A=base.A,
            w=base.w,
            W=base.W,
        )
    return total


# ---------------------------------------------------------------------------
# chain post-processing


@dataclass(frozen=True)
class DensitySummary:
    grid: np.ndarray
    mean1: np.ndarray
    band1: tuple
    mean2: np.ndarray
    band2: tuple

    def integral(self, sample):
        mean = self.mean1 if sample == 1 else self.mean2
        return float(np.trapezoid(mean, self.grid))


def summarize_densities(grid, dens1, dens2, quantiles=(0.05, 0.95)):
    """Pointwise posterior mean and credible band from per-iteration
    predictive densities (rows are retained iterations)."""
    lo, hi = quantiles
    return DensitySummary(
        grid=np.asarray(grid, dtype=float),
        mean1=dens1.mean(axis=0),
        band1=(np.quantile(dens1, lo, axis=0), np.quantile(dens1, hi, axis=0)),
        mean2=dens2.mean(axis=0),
        band2=(np.quantile(dens2, lo, axis=0), np.quantile(dens2, hi, axis=0)),
    )


class ComponentTables(NamedTuple):
    k1: dict
    k2: dict
    k12: dict
    map_k1: int
    map_k2: int
    map_k12: int


def _distribution(values):
    values = np.asarray(values, dtype=int)
    counts = np.bincount(values)
    total = counts.sum()
    return {int(i): float(c) / total for i, c in enumerate(counts) if c > 0}


def component_summaries(records):
    """Posterior tables of the component counts K1 = k1+k0, K2 = k2+k0 and
    shared K12 = k0 over retained iterations, with MAP locations."""
    if len(records["k0"]) == 0:
        raise DomainError("empty chain")
    k0 = np.asarray(records["k0"], dtype=int)
    k1 = np.asarray(records["k1"], dtype=int) + k0
    k2 = np.asarray(records["k2"], dtype=int) + k0
    t1, t2, t12 = _distribution(k1), _distribution(k2), _distribution(k0)
    pick = lambda table: max(table, key=lambda key: (table[key], -key))
    return ComponentTables(t1, t2, t12, pick(t1), pick(t2), pick(t12))


class BayesFactorResult(NamedTuple):
    value: float          # +inf when the chain never visits I=0
    smoothed: float       # Laplace-smoothed posterior odds times prior odds
    posterior_p1: float
    prior_odds: float     # P(I=0) / P(I=1) under the prior


def prior_inclusion_probability(kappa=None, n_draws=1_000_000, seed=0):
    """P(I=1) = E[1 - sigma] under the sigma prior (1/2 when uniform)."""
    if kappa is None:
        return 0.5
    rng = np.random.default_rng(seed)
    draws = rng.uniform(size=n_draws)
    dens = np.asarray([kappa(x) for x in draws], dtype=float)
    return float(np.sum((1.0 - draws) * dens) / np.sum(dens))


def bayes_factor(records, kappa=None, n_prior_draws=1_000_000, seed=0):
    """Bayes factor for distributional homogeneity from the chain's I draws:
    posterior odds of I=1 times the prior odds of I=0."""
    flags = np.asarray(records["I"], dtype=int)
    if flags.size == 0:
        raise DomainError("empty chain")
    p1 = prior_inclusion_probability(kappa, n_prior_draws, seed)
    prior_odds = (1.0 - p1) / p1
    ones = int(flags.sum())
    zeros = int(flags.size - ones)
    posterior_p1 = ones / flags.size
    smoothed = (ones + 1.0) / (zeros + 1.0) * prior_odds
    if zeros == 0:
        return BayesFactorResult(math.inf, smoothed, posterior_p1, prior_odds)
    return BayesFactorResult(ones / zeros * prior_odds, smoothed, posterior_p1, prior_odds)


def predictive_density(state, sample, grid, rng=None):
    """Model predictive for a new observation of the given sample; the
    implementation lives with the sampler, whose assignment-step weight
    system it reuses."""
    from .sampler import predictive_density as _impl

    return _impl(state, sample, grid, rng)


def pacf(series, max_lag):
    """Partial autocorrelations at lags 1..max_lag via Durbin-Levinson on
    the sample autocovariances."""
    series = np.asarray(series, dtype=float)
    n = series.size
    if n <= max_lag + 1:
        raise DomainError(f"series length {n} too short for max_lag {max_lag}")
    centered = series - series.mean()
    var = float(centered @ centered) / n
    if var <= 0.0:
        raise NumericalError("constant series has no autocorrelation structure")
    rho = np.empty(max_lag + 1)
    rho[0] = 1.0
    for h in range(1, max_lag + 1):
        rho[h] = float(centered[h:] @ centered[:-h]) / n / var
    out = np.empty(max_lag)
    phi_prev = np.array([rho[1]])
    out[0] = rho[1]
    for h in range(2, max_lag + 1):
        num = rho[h] - float(phi_prev @ rho[h - 1 : 0 : -1])
        den = 1.0 - float(phi_prev @ rho[1:h])
        phi_hh = num / den
        phi_prev = np.concatenate([phi_prev - phi_hh * phi_prev[::-1], [phi_hh]])
        out[h - 1] = phi_hh
    return out
