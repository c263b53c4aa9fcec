import math

import numpy as np
import pytest

from lnp.crm import (
    CrmSpec,
    laplace_exponent,
    log_tau,
    mixed_moment_decomposition_check,
    prior_coincidence,
    tau,
    tie_probability,
)
from lnp.errors import DomainError, ValidationError

GAMMA1 = CrmSpec("gamma", 1.0)
STABLE5 = CrmSpec("stable", sigma=0.5)


class TestCrmSpec:
    def test_stable_mass_must_be_one(self):
        with pytest.raises(ValidationError, match="redundant"):
            CrmSpec("stable", mass=2.0, sigma=0.5)

    def test_stable_needs_sigma(self):
        with pytest.raises(ValidationError):
            CrmSpec("stable")
        with pytest.raises(ValidationError):
            CrmSpec("stable", sigma=1.0)

    def test_unknown_family(self):
        with pytest.raises(ValidationError):
            CrmSpec("beta")

    def test_gamma_rejects_sigma(self):
        with pytest.raises(ValidationError):
            CrmSpec("gamma", 1.0, sigma=0.5)


class TestLaplaceExponent:
    def test_gamma_log2(self):
        assert laplace_exponent(GAMMA1, 1.0) == pytest.approx(math.log(2.0))

    def test_stable_power(self):
        assert laplace_exponent(STABLE5, 4.0) == pytest.approx(2.0)

    def test_zero(self):
        assert laplace_exponent(GAMMA1, 0.0) == 0.0
        assert laplace_exponent(STABLE5, 0.0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            laplace_exponent(GAMMA1, -0.5)


class TestTau:
    def test_gamma_value(self):
        # Gamma(2) / 2^2
        assert tau(GAMMA1, 2, 1.0) == pytest.approx(0.25)

    def test_stable_value(self):
        # sigma (1-sigma)_0 u^(sigma-1) at sigma=0.5, u=1
        assert tau(STABLE5, 1, 1.0) == pytest.approx(0.5)

    def test_q_zero_is_one(self):
        assert tau(GAMMA1, 0, 3.7) == 1.0
        assert tau(STABLE5, 0, 0.1) == 1.0

    def test_defining_integral(self):
        # tau_q(u) = int s^q e^{-us} rho(s) ds, checked by quadrature
        from scipy.integrate import quad

        for spec, rho in (
            (CrmSpec("gamma", 2.0), lambda s: np.exp(-s) / s),
            (
                CrmSpec("stable", sigma=0.3),
                lambda s: 0.3 * s**-1.3 / math.gamma(0.7),
            ),
        ):
            for q in (1, 2, 4):
                for u in (0.5, 1.0, 3.0):
                    ref = quad(
                        lambda s: s**q * math.exp(-u * s) * rho(s),
                        0,
                        np.inf,
                        epsabs=1e-13,
                        epsrel=1e-11,
                    )[0]
                    assert tau(spec, q, u) == pytest.approx(ref, rel=1e-8)

    def test_decreasing_and_log_convex_in_u(self):
        grid = np.linspace(0.2, 8.0, 60)
        for spec in (GAMMA1, CrmSpec("stable", sigma=0.7)):
            for q in (1, 2, 5):
                values = log_tau(spec, q, grid)
                assert np.all(np.diff(values) < 0.0)
                # log-convexity: second differences of log tau nonnegative
                assert np.all(np.diff(values, 2) > -1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            tau(GAMMA1, -1, 1.0)
        with pytest.raises(DomainError):
            tau(GAMMA1, 2, 0.0)


class TestPriorCoincidence:
    def test_gamma_closed_form(self):
        assert prior_coincidence(GAMMA1) == pytest.approx(0.5)

    def test_stable_closed_form(self):
        assert prior_coincidence(CrmSpec("stable", sigma=0.3)) == pytest.approx(0.7)

    def test_quadrature_matches_closed_forms(self):
        for c in (0.5, 1.0, 2.0, 5.0):
            spec = CrmSpec("gamma", c)
            assert prior_coincidence(spec, "quadrature") == pytest.approx(
                1.0 / (c + 1.0), rel=1e-8
            )
        for s in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9):
            spec = CrmSpec("stable", sigma=s)
            assert prior_coincidence(spec, "quadrature") == pytest.approx(
                1.0 - s, rel=1e-8
            )

    def test_strictly_inside_unit_interval(self):
        for spec in (CrmSpec("gamma", 0.01), CrmSpec("gamma", 50.0),
                     CrmSpec("stable", sigma=0.01), CrmSpec("stable", sigma=0.99)):
            assert 0.0 < prior_coincidence(spec) < 1.0


class TestTieProbability:
    def test_double_dirichlet(self):
        assert tie_probability(GAMMA1, GAMMA1) == pytest.approx(0.25)

    def test_double_stable_by_quadrature(self):
        value = tie_probability(STABLE5, STABLE5, "quadrature")
        assert value == pytest.approx(0.25, rel=1e-8)

    def test_composed_closed_forms(self):
        outer = CrmSpec("gamma", 1.0)
        inner = CrmSpec("gamma", 3.0)
        assert tie_probability(outer, inner) == pytest.approx(0.125)
        assert tie_probability(outer, inner, "quadrature") == pytest.approx(
            0.125, rel=1e-8
        )

    def test_factorizes_into_coincidence_probabilities(self):
        for outer in (CrmSpec("gamma", 2.0), CrmSpec("stable", sigma=0.4)):
            for inner in (CrmSpec("gamma", 0.5), CrmSpec("stable", sigma=0.8)):
                assert tie_probability(outer, inner) == pytest.approx(
                    prior_coincidence(outer) * prior_coincidence(inner), rel=1e-12
                )


class TestMixedMomentDecomposition:
    def test_full_space_indicators_exact(self):
        check = mixed_moment_decomposition_check(
            GAMMA1, set_a=(0.0, 1.0), set_b=(0.0, 1.0), n_rep=50, seed=0
        )
        assert check.lhs == pytest.approx(1.0, abs=1e-12)
        assert check.rhs == pytest.approx(1.0, abs=1e-12)
        assert check.residual < 1e-12

    def test_disjoint_supports(self):
        check = mixed_moment_decomposition_check(
            CrmSpec("stable", sigma=0.5),
            set_a=(0.0, 0.3),
            set_b=(0.5, 0.9),
            n_rep=3000,
            seed=11,
        )
        # rhs = (1 - pi1) Q(A) Q(B); allow the truncation bias a small floor
        assert check.rhs == pytest.approx(0.5 * 0.3 * 0.4, rel=1e-12)
        assert check.residual < 3.0 * check.mc_se + 2e-3

    def test_identical_sets_convex_combination(self):
        check = mixed_moment_decomposition_check(
            GAMMA1, set_a=(0.2, 0.6), set_b=(0.2, 0.6), n_rep=3000, seed=12
        )
        assert check.rhs == pytest.approx(0.5 * 0.4 + 0.5 * 0.16, rel=1e-12)
        assert check.residual < 3.0 * check.mc_se + 2e-3
