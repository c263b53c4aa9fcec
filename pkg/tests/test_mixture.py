import math

import numpy as np
import pytest
from scipy import integrate, stats

from lnp.errors import DomainError, NumericalError
from lnp.mixture import (
    BayesFactorResult,
    ClusterValue,
    NIGBase,
    bayes_factor,
    component_summaries,
    kernel_density,
    log_cluster_marginal,
    log_marginal_likelihood,
    marginal_likelihood,
    pacf,
    posterior_cell,
    prior_inclusion_probability,
    summarize_densities,
)

BASE = NIGBase(s0=1.0, S0=1.0, m=0.3, tau=2.0, a=0.0, A=2.0, w=1.0, W=100.0)


def ml_oracle(base, xs):
    """2-d quadrature of int prod_i h(x_i; M, V) Q0(dM, dV): adaptive inner
    integral over M with V-scaled support, outer over log V."""
    xs = np.atleast_1d(xs)

    def inner(logv):
        v = math.exp(logv)
        sd = math.sqrt(base.tau * v)
        half_width = 12.0 * (sd + math.sqrt(v)) + np.abs(xs - base.m).max()
        val = integrate.quad(
            lambda mu: np.prod(stats.norm.pdf(xs, mu, math.sqrt(v)))
            * stats.norm.pdf(mu, base.m, sd),
            base.m - half_width,
            base.m + half_width,
            epsabs=1e-15,
            epsrel=1e-12,
            limit=200,
        )[0]
        return val * stats.invgamma.pdf(v, base.s0, scale=base.S0) * v

    return integrate.quad(inner, -40, 40, epsabs=1e-14, epsrel=1e-11, limit=400)[0]


class TestKernel:
    def test_standard_normal_at_mode(self):
        assert kernel_density(ClusterValue(0.0, 1.0), 0.0) == pytest.approx(
            1.0 / math.sqrt(2.0 * math.pi)
        )

    def test_symmetry(self):
        theta = ClusterValue(1.3, 0.7)
        for x in (-2.0, 0.0, 5.5):
            assert kernel_density(theta, x) == pytest.approx(
                kernel_density(theta, 2 * theta.M - x), rel=1e-12
            )

    def test_integrates_to_one(self):
        theta = ClusterValue(-0.5, 2.5)
        grid = np.linspace(-30, 30, 20_001)
        values = [kernel_density(theta, x) for x in grid]
        assert np.trapezoid(values, grid) == pytest.approx(1.0, abs=1e-8)

    def test_nonpositive_variance(self):
        with pytest.raises(DomainError):
            ClusterValue(0.0, 0.0)


class TestMarginalLikelihood:
    def test_against_quadrature_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            base = NIGBase(
                s0=rng.uniform(0.8, 3.0),
                S0=rng.uniform(0.5, 3.0),
                m=rng.normal(),
                tau=rng.uniform(0.5, 3.0),
                a=0.0,
                A=1.0,
                w=1.0,
                W=1.0,
            )
            x = rng.normal(0.0, 2.0)
            assert marginal_likelihood(base, x) == pytest.approx(
                ml_oracle(base, x), rel=1e-8
            )

    def test_symmetry_about_location(self):
        for d in (0.5, 1.7, 4.0):
            assert marginal_likelihood(BASE, BASE.m + d) == pytest.approx(
                marginal_likelihood(BASE, BASE.m - d), rel=1e-12
            )

    def test_heavier_tail_than_matched_gaussian(self):
        # s0 = 1 gives 2 degrees of freedom
        scale = math.sqrt(BASE.S0 * (1.0 + BASE.tau) / BASE.s0)
        x = BASE.m + 8.0 * scale
        gaussian = stats.norm.pdf(x, BASE.m, scale)
        assert marginal_likelihood(BASE, x) > gaussian

    def test_matches_student_t(self):
        scale = math.sqrt(BASE.S0 * (1.0 + BASE.tau) / BASE.s0)
        for x in (-3.0, 0.0, 1.2, 9.0):
            assert marginal_likelihood(BASE, x) == pytest.approx(
                stats.t.pdf(x, 2.0 * BASE.s0, BASE.m, scale), rel=1e-12
            )


class TestClusterMarginal:
    def test_two_observation_joint(self):
        xs = [0.5, -1.2]
        ref = ml_oracle(BASE, xs)
        assert math.exp(log_cluster_marginal(BASE, xs)) == pytest.approx(ref, rel=1e-9)

    def test_order_invariance(self):
        xs = [0.1, 2.2, -0.7, 1.4]
        a = log_cluster_marginal(BASE, xs)
        b = log_cluster_marginal(BASE, xs[::-1])
        assert a == pytest.approx(b, rel=1e-10)

    def test_posterior_cell_empty_is_prior(self):
        cell = posterior_cell(BASE, [])
        assert cell.mean == BASE.m
        assert cell.shape == BASE.s0
        assert cell.scale == BASE.S0
        assert cell.kappa == pytest.approx(1.0 / BASE.tau)


class TestComponentSummaries:
    def test_point_mass_chain(self):
        records = {"k0": [1] * 10, "k1": [1] * 10, "k2": [2] * 10}
        tables = component_summaries(records)
        assert tables.k1 == {2: 1.0}
        assert tables.k2 == {3: 1.0}
        assert tables.k12 == {1: 1.0}
        assert (tables.map_k1, tables.map_k2, tables.map_k12) == (2, 3, 1)

    def test_rows_sum_to_one_and_k12_bound(self):
        rng = np.random.default_rng(5)
        k0 = rng.integers(0, 3, 500)
        k1 = rng.integers(0, 4, 500)
        k2 = rng.integers(0, 4, 500)
        tables = component_summaries({"k0": k0, "k1": k1, "k2": k2})
        for table in (tables.k1, tables.k2, tables.k12):
            assert sum(table.values()) == pytest.approx(1.0, abs=1e-12)
        assert np.all(k0 <= k0 + k1) and np.all(k0 <= k0 + k2)

    def test_empty_chain_rejected(self):
        with pytest.raises(DomainError):
            component_summaries({"k0": [], "k1": [], "k2": []})


class TestBayesFactor:
    def test_all_ones_gives_sentinel(self):
        result = bayes_factor({"I": np.ones(200, dtype=int)})
        assert math.isinf(result.value)
        assert result.smoothed == pytest.approx(201.0)

    def test_all_zeros(self):
        assert bayes_factor({"I": np.zeros(50, dtype=int)}).value == 0.0

    def test_prior_odds_uniform(self):
        assert prior_inclusion_probability() == 0.5
        result = bayes_factor({"I": np.array([1, 0, 1, 0])})
        assert result.prior_odds == 1.0
        assert result.value == pytest.approx(1.0)

    def test_prior_odds_by_monte_carlo(self):
        # kappa proportional to 2(1-sigma): P(I=1) = E[1-sigma] = 2/3
        p1 = prior_inclusion_probability(lambda s: 2.0 * (1.0 - s), n_draws=400_000, seed=3)
        assert p1 == pytest.approx(2.0 / 3.0, abs=0.01)

    def test_thinning_invariance_in_expectation(self):
        rng = np.random.default_rng(9)
        flags = (rng.uniform(size=30_000) < 0.75).astype(int)
        full = bayes_factor({"I": flags}).value
        thinned = bayes_factor({"I": flags[::5]}).value
        assert thinned == pytest.approx(full, rel=0.1)


class TestPacf:
    def test_white_noise_band(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=20_000)
        values = pacf(x, 12)
        assert np.all(np.abs(values) < 4.0 / math.sqrt(x.size))

    def test_ar1(self):
        rng = np.random.default_rng(42)
        n = 40_000
        x = np.empty(n)
        x[0] = 0.0
        eps = rng.normal(size=n)
        for t in range(1, n):
            x[t] = 0.8 * x[t - 1] + eps[t]
        values = pacf(x, 8)
        band = 4.0 / math.sqrt(n)
        assert values[0] == pytest.approx(0.8, abs=band)
        assert np.all(np.abs(values[1:]) < band)

    def test_lag_one_equals_autocorrelation(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=500).cumsum()
        centered = x - x.mean()
        rho1 = float(centered[1:] @ centered[:-1]) / float(centered @ centered)
        assert pacf(x, 3)[0] == pytest.approx(rho1, rel=1e-12)

    def test_constant_series(self):
        with pytest.raises(NumericalError):
            pacf(np.ones(100), 5)

    def test_too_short(self):
        with pytest.raises(DomainError):
            pacf(np.arange(5.0), 5)


class TestDensitySummary:
    def test_mean_and_band_shapes(self):
        grid = np.linspace(-1, 1, 11)
        rng = np.random.default_rng(0)
        d1 = rng.uniform(size=(40, 11))
        d2 = rng.uniform(size=(40, 11))
        summary = summarize_densities(grid, d1, d2)
        assert summary.mean1 == pytest.approx(d1.mean(axis=0))
        assert np.all(summary.band1[0] <= summary.mean1 + 1e-12)
        assert np.all(summary.band2[1] >= summary.mean2 - 1e-12)
