"""Completely random measure families and prior coincidence probabilities.

Two jump-intensity families are implemented:

- gamma:  rho(s) = exp(-s)/s, psi(u) = log(1+u), tau_q(u) = Gamma(q)/(1+u)^q
- stable: rho(s) = sigma s^{-1-sigma}/Gamma(1-sigma), psi(u) = u^sigma,
          tau_q(u) = sigma (1-sigma)_{q-1} u^{sigma-q}

with the convention tau_0 == 1 for both.  The stable total mass is fixed
to 1, being redundant under normalization.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import exp1, gammaln

from .errors import DomainError, ValidationError
from .specialfn import (
    DEFAULT_QUADRATURE,
    integrate_halfline,
    log_pochhammer,
)

GAMMA = "gamma"
STABLE = "stable"

__all__ = [
    "CrmSpec",
    "GAMMA",
    "STABLE",
    "laplace_exponent",
    "tau",
    "log_tau",
    "prior_coincidence",
    "tie_probability",
    "MixedMomentCheck",
    "mixed_moment_decomposition_check",
]


@dataclass(frozen=True)
class CrmSpec:
    """A CRM family with its total mass (and stability index for stable)."""

    family: str
    mass: float = 1.0
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.family not in (GAMMA, STABLE):
            raise ValidationError(f"unknown CRM family {self.family!r}")
        if not (self.mass > 0.0 and math.isfinite(self.mass)):
            raise ValidationError(f"mass must be positive, got {self.mass}")
        if self.family == STABLE:
            if self.sigma is None or not 0.0 < self.sigma < 1.0:
                raise ValidationError(
                    f"stable family needs sigma in (0,1), got {self.sigma}"
                )
            if self.mass != 1.0:
                raise ValidationError(
                    "stable total mass is redundant under normalization and is "
                    f"fixed to 1; got mass={self.mass}"
                )
        elif self.sigma is not None:
            raise ValidationError("sigma is only meaningful for the stable family")


def laplace_exponent(spec, u):
    """psi(u); vectorized over u, with psi(0) = 0."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0):
        raise DomainError("laplace_exponent requires u >= 0")
    if spec.family == GAMMA:
        out = np.log1p(u)
    else:
        out = u**spec.sigma
    return float(out) if out.ndim == 0 else out


def log_tau(spec, q, u, log_u=None):
    """log tau_q(u) for u > 0, integer q >= 0; vectorized over u.

    ``log_u`` may be supplied when u itself would under/overflow.
    """
    if q != int(q) or q < 0:
        raise DomainError(f"tau requires integer q >= 0, got {q}")
    q = int(q)
    u = np.asarray(u, dtype=float)
    if log_u is None:
        if np.any(u <= 0.0):
            raise DomainError("tau requires u > 0")
        log_u = np.log(u)
    if q == 0:
        out = np.zeros_like(np.asarray(log_u, dtype=float))
    elif spec.family == GAMMA:
        out = gammaln(q) - q * np.log1p(u)
    else:
        sigma = spec.sigma
        out = (
            math.log(sigma)
            + log_pochhammer(1.0 - sigma, q - 1)
            + (sigma - q) * np.asarray(log_u, dtype=float)
        )
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def tau(spec, q, u):
    """tau_q(u) = integral of s^q e^{-us} rho(s) ds, in closed form."""
    return np.exp(log_tau(spec, q, u))


def _coincidence_integral_quadrature(spec, quad_spec):
    # c * int u e^{-c psi(u)} tau_2(u) du
    c = spec.mass

    def f(u):
        return c * u * np.exp(-c * laplace_exponent(spec, u) + log_tau(spec, 2, u))

    if spec.family == GAMMA:
        # integrand ~ u at 0, algebraic tail u^{-c-1}
        return integrate_halfline(f, quad_spec, origin_exponent=2.0, tail_exponent=c)
    # stable: integrand ~ u^{sigma-1} at 0, tail e^{-u^sigma}
    return integrate_halfline(
        f, quad_spec, origin_exponent=spec.sigma, tail_exponent=spec.sigma
    )


def prior_coincidence(spec, method="closed_form", quad_spec=DEFAULT_QUADRATURE):
    """Probability that the two population measures drawn from the outer
    process coincide: c * int u e^{-c psi(u)} tau_2(u) du.

    Closed forms: 1/(c+1) for gamma, 1-sigma for stable; quadrature
    evaluates the integral as written.
    """
    if method == "closed_form":
        if spec.family == GAMMA:
            return 1.0 / (spec.mass + 1.0)
        return 1.0 - spec.sigma
    if method == "quadrature":
        return _coincidence_integral_quadrature(spec, quad_spec)
    raise DomainError(f"unknown method {method!r}")


def tie_probability(outer, inner, method="closed_form", quad_spec=DEFAULT_QUADRATURE):
    """Probability that two observations, one per sample, coincide.

    Equals prior_coincidence(outer) times the same integral functional of
    the inner family, both factors sharing the single-integral form.
    """
    return prior_coincidence(outer, method, quad_spec) * prior_coincidence(
        inner, method, quad_spec
    )


# ---------------------------------------------------------------------------
# mixed-moment decomposition harness
#
# Validates, by truncated jump simulation, that for the normalized outer
# measure q the mixed moment E[q(A) q(B)] equals
# pi1 * Q(A ^ B) + (1 - pi1) * Q(A) Q(B), with atoms tagged iid uniform.
# Used only in tests.


class MixedMomentCheck(NamedTuple):
    residual: float
    mc_se: float
    lhs: float
    rhs: float


def _gamma_jump_sizes(rng, mass, max_jumps):
    # Ferguson-Klass: J_i solves mass * E1(J_i) = Gamma_i; jumps below
    # exp(-45) carry no numerical mass
    arrivals = np.cumsum(rng.exponential(size=max_jumps)) / mass
    arrivals = arrivals[arrivals < 45.0]
    if arrivals.size == 0:
        return np.array([])
    lo = np.full(arrivals.shape, -746.0)
    hi = np.full(arrivals.shape, 5.0)
    for _ in range(70):
        mid = 0.5 * (lo + hi)
        too_big = exp1(np.exp(mid)) < arrivals  # E1 decreasing: jump too large
        hi = np.where(too_big, mid, hi)
        lo = np.where(too_big, lo, mid)
    return np.exp(0.5 * (lo + hi))


def _stable_jump_sizes(rng, sigma, max_jumps):
    # tail inverse of sigma s^{-1-sigma}/Gamma(1-sigma): J_i = (Gamma(1-sigma) G_i)^{-1/sigma}
    arrivals = np.cumsum(rng.exponential(size=max_jumps))
    return (math.gamma(1.0 - sigma) * arrivals) ** (-1.0 / sigma)


def mixed_moment_decomposition_check(
    outer,
    set_a=(0.0, 0.4),
    set_b=(0.25, 0.7),
    n_rep=4000,
    max_jumps=2000,
    seed=0,
):
    """Monte Carlo residual |lhs - rhs| of the mixed-moment identity.

    ``set_a`` / ``set_b`` are tag intervals inside (0,1); the base measure
    over tags is uniform, so Q(A) is the interval length.
    """
    rng = np.random.default_rng(seed)
    a_lo, a_hi = set_a
    b_lo, b_hi = set_b
    products = np.empty(n_rep)
    for r in range(n_rep):
        if outer.family == GAMMA:
            jumps = _gamma_jump_sizes(rng, outer.mass, max_jumps)
        else:
            jumps = _stable_jump_sizes(rng, outer.sigma, max_jumps)
        tags = rng.uniform(size=jumps.size)
        total = jumps.sum()
        qa = jumps[(tags >= a_lo) & (tags < a_hi)].sum() / total
        qb = jumps[(tags >= b_lo) & (tags < b_hi)].sum() / total
        products[r] = qa * qb
    lhs = float(products.mean())
    se = float(products.std(ddof=1) / math.sqrt(n_rep))
    pi1 = prior_coincidence(outer)
    q_a = a_hi - a_lo
    q_b = b_hi - b_lo
    q_ab = max(0.0, min(a_hi, b_hi) - max(a_lo, b_lo))
    rhs = pi1 * q_ab + (1.0 - pi1) * q_a * q_b
    return MixedMomentCheck(abs(lhs - rhs), se, lhs, rhs)
