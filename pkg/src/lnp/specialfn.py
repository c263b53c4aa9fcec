"""Numerical kernel: special functions and integration primitives.

All quadrature here runs on a double-exponential (tanh-sinh) trapezoid
rule after mapping the integration domain onto (0, 1); the half-line is
first folded by the rational substitution u = w / (1 - w).  Node abscissas
cluster double-exponentially at the endpoints, which is what lets one
scheme absorb both integrable endpoint singularities (w^{a-1} with small
a > 0) and slowly decaying subexponential tails.  Refinement halves the
step until two successive levels agree to the requested tolerance.

Everything is pure: fixed inputs give bit-identical outputs.  Monte Carlo
variants take an explicit seed and own a private generator per call.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln, logsumexp

from .errors import ConvergenceError, DomainError

_LOG_EPS = 40.0  # endpoint mass below exp(-40) relative is ignored

__all__ = [
    "QuadratureSpec",
    "JMethod",
    "DEFAULT_QUADRATURE",
    "log_gamma",
    "log_beta",
    "log_pochhammer",
    "hyp3F2_at_1",
    "log_hyp3f2_at_1",
    "integrate_halfline",
    "integrate_quadrant",
    "j_integral",
    "log_j_integral",
]


@dataclass(frozen=True)
class QuadratureSpec:
    """Evaluation contract for the adaptive integrators.

    ``max_subdivisions`` caps the per-axis node count of the finest
    refinement level; ``transform`` names the half-line-to-unit-interval
    map (only the rational map u = w/(1-w) is implemented).
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-300
    max_subdivisions: int = 2000
    transform: str = "rational"

    def __post_init__(self):
        if not (self.rel_tol > 0.0 and math.isfinite(self.rel_tol)):
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.abs_tol < 0.0:
            raise DomainError(f"abs_tol must be >= 0, got {self.abs_tol}")
        if self.max_subdivisions < 1:
            raise DomainError(
                f"max_subdivisions must be >= 1, got {self.max_subdivisions}"
            )
        if self.transform != "rational":
            raise DomainError(f"unknown transform {self.transform!r}")


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True)
class JMethod:
    """How to evaluate the beta-weighted kernel integral J.

    kind is "quadrature" or "monte_carlo"; mc_samples is the Monte Carlo
    sample count L; the seed feeds a private generator per call.
    """

    kind: str = "quadrature"
    mc_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("quadrature", "monte_carlo"):
            raise DomainError(f"unknown JMethod kind {self.kind!r}")
        if self.kind == "monte_carlo" and self.mc_samples < 1:
            raise DomainError(f"mc_samples must be >= 1, got {self.mc_samples}")


# ---------------------------------------------------------------------------
# elementary log-space pieces


def log_gamma(x):
    """log Gamma(x) for x > 0."""
    if not (isinstance(x, (int, float)) and math.isfinite(x)):
        raise DomainError(f"log_gamma requires finite numeric x, got {x!r}")
    if x <= 0.0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return float(gammaln(x))


def log_beta(a, b):
    """log B(a, b) for a, b > 0."""
    if a <= 0.0 or b <= 0.0:
        raise DomainError(f"log_beta requires positive arguments, got ({a}, {b})")
    return float(betaln(a, b))


def log_pochhammer(a, n):
    """log of the rising factorial (a)_n = a (a+1) ... (a+n-1).

    (a)_0 = 1 for any a.  For a = 0 and n >= 1 the product is zero and the
    log-space zero signal -inf is returned.
    """
    if n != int(n) or n < 0:
        raise DomainError(f"log_pochhammer requires integer n >= 0, got {n}")
    n = int(n)
    if n == 0:
        return 0.0
    if a > 0.0:
        return float(gammaln(a + n) - gammaln(a))
    if a == 0.0:
        return -math.inf
    # negative a: a finite product that may hit zero or go negative
    total = 0.0
    for k in range(n):
        factor = a + k
        if factor == 0.0:
            return -math.inf
        if factor < 0.0 and (n - k) % 2 == 0 and all(a + j < 0 for j in range(k, n)):
            pass
        total += math.log(abs(factor))
    sign = 1
    for k in range(n):
        if a + k < 0:
            sign = -sign
    if sign < 0:
        raise DomainError(f"({a})_{n} is negative; no real log exists")
    return total


# ---------------------------------------------------------------------------
# tanh-sinh nodes on (0, 1)
#
# w(t) = sigmoid(pi sinh t); the node table for (cutoff, level) is cached.
# cutoff T is chosen so that an endpoint factor w^a contributes less than
# exp(-_LOG_EPS) relative mass beyond the last node: a * pi * sinh(T) >= 40.

_node_cache = {}


def _cutoff_for(min_exponent):
    a = min(max(min_exponent, 1e-5), 50.0)
    t = math.asinh(_LOG_EPS / (math.pi * a))
    return max(4, min(15, math.ceil(t)))


def _ts_nodes(cutoff, level):
    key = (cutoff, level)
    cached = _node_cache.get(key)
    if cached is not None:
        return cached
    h = 1.0 / (1 << level)
    k = np.arange(-math.ceil(cutoff / h), math.ceil(cutoff / h) + 1)
    t = k * h
    s = math.pi * np.sinh(t)
    # log sigmoid(+-s), stable for |s| up to pi*sinh(10) ~ 3.5e4
    soft = np.log1p(np.exp(-np.abs(s)))
    log_w = np.minimum(s, 0.0) - soft
    log_1mw = np.minimum(-s, 0.0) - soft
    log_jac = math.log(math.pi) + np.log(np.cosh(t))  # dw/dt / (w (1-w))
    out = (h, log_w, log_1mw, log_jac)
    _node_cache[key] = out
    return out


def _max_level(spec, cutoff):
    # per-axis node count at level l is about 2 * cutoff * 2^l
    level = 3
    while 2 * cutoff * (1 << (level + 1)) <= spec.max_subdivisions:
        level += 1
    return max(level, 4)


def _log_unit_integral(log_f, exponents=(1.0, 1.0), spec=DEFAULT_QUADRATURE):
    """log of integral over (0,1) of exp(log_f(log w, log 1-w)).

    ``exponents`` declares the known endpoint behaviors w^{a-1}, (1-w)^{b-1}
    so the node cutoff can cover them.  log_f must broadcast over arrays.
    """
    cutoff = max(_cutoff_for(exponents[0]), _cutoff_for(exponents[1]))
    top = _max_level(spec, cutoff)
    prev = None
    for level in range(3, top + 1):
        h, log_w, log_1mw, log_jac = _ts_nodes(cutoff, level)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            terms = log_f(log_w, log_1mw) + log_w + log_1mw + log_jac
            terms = np.where(np.isnan(terms), -np.inf, terms)
        value = math.log(h) + float(logsumexp(terms))
        if prev is not None and abs(value - prev) <= spec.rel_tol:
            return value
        prev = value
    raise ConvergenceError(
        "unit-interval quadrature did not converge",
        estimate=prev,
        error_bound=abs(value - prev) if prev is not None else None,
    )


# ---------------------------------------------------------------------------
# half-line and quadrant integrals (rational transform u = w / (1 - w))


def _halfline_terms(f, log_w, log_1mw, log_jac):
    # integral du = f(u) * u with u = w/(1-w), after the tanh-sinh jacobian
    # already accounts for w(1-w); non-finite products at the extreme tail
    # (0 * inf from underflowed factors) carry no mass and are dropped.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        u = np.exp(log_w - log_1mw)
        terms = f(u) * np.exp(log_w - log_1mw + log_jac)
        return np.where(np.isfinite(terms), terms, 0.0)


def integrate_halfline(f, spec=None, origin_exponent=1.0, tail_exponent=1.0):
    """Integral of f over (0, infinity) for vectorized integrable f.

    ``origin_exponent`` / ``tail_exponent`` declare known u^{a-1} behavior
    at 0 and the algebraic tail order at infinity, when available; they
    only widen the node window, never change the integrand.
    """
    spec = spec or DEFAULT_QUADRATURE
    cutoff = max(_cutoff_for(origin_exponent), _cutoff_for(tail_exponent))
    top = _max_level(spec, cutoff)
    prev = None
    delta = math.inf
    for level in range(3, top + 1):
        h, log_w, log_1mw, log_jac = _ts_nodes(cutoff, level)
        value = h * float(np.sum(_halfline_terms(f, log_w, log_1mw, log_jac)))
        if prev is not None:
            delta = abs(value - prev)
            if delta <= max(spec.rel_tol * abs(value), spec.abs_tol):
                return value
        prev = value
    raise ConvergenceError(
        "half-line quadrature did not converge",
        estimate=prev,
        error_bound=delta,
    )


def integrate_quadrant(f, spec=None, exponents_u=(1.0, 1.0), exponents_v=(1.0, 1.0)):
    """Integral of f(u, v) over (0, inf)^2 via a tensor tanh-sinh rule.

    f must broadcast over same-shape arrays.
    """
    spec = spec or DEFAULT_QUADRATURE
    cutoff_u = max(_cutoff_for(exponents_u[0]), _cutoff_for(exponents_u[1]))
    cutoff_v = max(_cutoff_for(exponents_v[0]), _cutoff_for(exponents_v[1]))
    top = min(_max_level(spec, cutoff_u), _max_level(spec, cutoff_v))
    prev = None
    delta = math.inf
    for level in range(3, top + 1):
        hu, lwu, l1wu, lju = _ts_nodes(cutoff_u, level)
        hv, lwv, l1wv, ljv = _ts_nodes(cutoff_v, level)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            u = np.exp(lwu - l1wu)[:, None]
            v = np.exp(lwv - l1wv)[None, :]
            weight = np.exp(
                (lwu - l1wu + lju)[:, None] + (lwv - l1wv + ljv)[None, :]
            )
            terms = f(u, v) * weight
            terms = np.where(np.isfinite(terms), terms, 0.0)
        value = hu * hv * float(np.sum(terms))
        if prev is not None:
            delta = abs(value - prev)
            if delta <= max(spec.rel_tol * abs(value), spec.abs_tol):
                return value
        prev = value
    raise ConvergenceError(
        "quadrant quadrature did not converge",
        estimate=prev,
        error_bound=delta,
    )


def _log_halfline_integral(log_f, exponents=(1.0, 1.0), spec=DEFAULT_QUADRATURE):
    """log of integral over (0, inf) of exp(log_f(u, log u)).

    Used by the partition evaluators, whose integrands only exist in log
    space.  log_f receives both u and log u (the latter exact even when u
    under/overflows).
    """
    cutoff = max(_cutoff_for(exponents[0]), _cutoff_for(exponents[1]))
    top = _max_level(spec, cutoff)
    prev = None
    for level in range(3, top + 1):
        h, log_w, log_1mw, log_jac = _ts_nodes(cutoff, level)
        log_u = log_w - log_1mw
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            terms = log_f(np.exp(log_u), log_u) + log_u + log_jac
            terms = np.where(np.isnan(terms), -np.inf, terms)
        value = math.log(h) + float(logsumexp(terms))
        if prev is not None and abs(value - prev) <= spec.rel_tol:
            return value
        prev = value
    raise ConvergenceError(
        "half-line quadrature did not converge (log space)",
        estimate=prev,
        error_bound=abs(value - prev) if prev is not None else None,
    )


def _log_quadrant_integral(
    log_f, exponents_u=(1.0, 1.0), exponents_v=(1.0, 1.0), spec=DEFAULT_QUADRATURE
):
    """log of the double integral of exp(log_f(u, v, log u, log v))."""
    cutoff_u = max(_cutoff_for(exponents_u[0]), _cutoff_for(exponents_u[1]))
    cutoff_v = max(_cutoff_for(exponents_v[0]), _cutoff_for(exponents_v[1]))
    top = min(_max_level(spec, cutoff_u), _max_level(spec, cutoff_v))
    prev = None
    for level in range(3, top + 1):
        hu, lwu, l1wu, lju = _ts_nodes(cutoff_u, level)
        hv, lwv, l1wv, ljv = _ts_nodes(cutoff_v, level)
        log_u = (lwu - l1wu)[:, None]
        log_v = (lwv - l1wv)[None, :]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            log_weight = (log_u + lju[:, None]) + (log_v + ljv[None, :])
            terms = log_f(np.exp(log_u), np.exp(log_v), log_u, log_v) + log_weight
            terms = np.where(np.isnan(terms), -np.inf, terms)
        value = math.log(hu * hv) + float(logsumexp(terms.ravel()))
        if prev is not None and abs(value - prev) <= spec.rel_tol:
            return value
        prev = value
    raise ConvergenceError(
        "quadrant quadrature did not converge (log space)",
        estimate=prev,
        error_bound=abs(value - prev) if prev is not None else None,
    )


# ---------------------------------------------------------------------------
# the J integral
#
#   J_{sigma0,gamma}(H1, H2; H)
#     = int_0^1 w^{H1-1} (1-w)^{H2-1} [gamma + w^s0 + (1-w)^s0]^{-H} dw


def _check_j_args(sigma0, gamma, h1, h2, h):
    if not 0.0 < sigma0 < 1.0:
        raise DomainError(f"sigma0 must lie in (0,1), got {sigma0}")
    if gamma < 0.0:
        raise DomainError(f"gamma must be >= 0, got {gamma}")
    if h1 <= 0.0 or h2 <= 0.0:
        raise DomainError(f"H1 and H2 must be positive, got ({h1}, {h2})")
    if h < 0.0:
        raise DomainError(f"H must be >= 0, got {h}")


def _log_j_quadrature(sigma0, gamma, h1, h2, h, spec=DEFAULT_QUADRATURE):
    def log_f(log_w, log_1mw):
        denom = gamma + np.exp(sigma0 * log_w) + np.exp(sigma0 * log_1mw)
        return (h1 - 1.0) * log_w + (h2 - 1.0) * log_1mw - h * np.log(denom)

    return _log_unit_integral(log_f, exponents=(h1, h2), spec=spec)


def _log_j_monte_carlo(sigma0, gamma, h1, h2, h, n_samples, seed):
    rng = np.random.default_rng(seed)
    w = rng.beta(h1, h2, size=n_samples)
    log_bracket = np.log(gamma + w**sigma0 + (1.0 - w) ** sigma0)
    return float(betaln(h1, h2) + logsumexp(-h * log_bracket) - math.log(n_samples))


def log_j_integral(sigma0, gamma, h1, h2, h, method=None, spec=DEFAULT_QUADRATURE):
    """log J_{sigma0,gamma}(H1, H2; H).

    With method=None the default policy applies: quadrature when
    min(H1, H2) >= 1, Monte Carlo with L = 1e5 otherwise (the unbounded
    integrand case).  H = 0 reduces to log B(H1, H2) exactly.
    """
    _check_j_args(sigma0, gamma, h1, h2, h)
    if h == 0.0:
        return float(betaln(h1, h2))
    if method is None:
        if min(h1, h2) >= 1.0:
            method = JMethod(kind="quadrature")
        else:
            method = JMethod(kind="monte_carlo")
    if method.kind == "quadrature":
        return _log_j_quadrature(sigma0, gamma, h1, h2, h, spec=spec)
    return _log_j_monte_carlo(sigma0, gamma, h1, h2, h, method.mc_samples, method.seed)


def j_integral(sigma0, gamma, h1, h2, h, method=None, spec=DEFAULT_QUADRATURE):
    """J_{sigma0,gamma}(H1, H2; H) on the linear scale."""
    return math.exp(log_j_integral(sigma0, gamma, h1, h2, h, method, spec))


def log_j_integral_grid(sigma0_grid, gamma, h1_grid, h2_grid, h, level=6):
    """Vectorized log J over a sigma0 grid (fixed H), one fixed-depth rule.

    Shapes broadcast: sigma0_grid, h1_grid, h2_grid are 1-d of equal length.
    A deeper fixed level replaces adaptivity here; the scalar adaptive path
    is the reference it is tested against.
    """
    sigma0_grid = np.asarray(sigma0_grid, dtype=float)
    h1_grid = np.broadcast_to(np.asarray(h1_grid, dtype=float), sigma0_grid.shape)
    h2_grid = np.broadcast_to(np.asarray(h2_grid, dtype=float), sigma0_grid.shape)
    cutoff = max(
        _cutoff_for(float(np.min(h1_grid))), _cutoff_for(float(np.min(h2_grid)))
    )
    h_step, log_w, log_1mw, log_jac = _ts_nodes(cutoff, level)
    lw = log_w[None, :]
    l1w = log_1mw[None, :]
    s0 = sigma0_grid[:, None]
    denom = gamma + np.exp(s0 * lw) + np.exp(s0 * l1w)
    terms = (
        (h1_grid[:, None] - 1.0) * lw
        + (h2_grid[:, None] - 1.0) * l1w
        - h * np.log(denom)
        + lw
        + l1w
        + log_jac[None, :]
    )
    return math.log(h_step) + logsumexp(terms, axis=1)


# ---------------------------------------------------------------------------
# 3F2 at unit argument
#
# sum_k (a1)_k (a2)_k (a3)_k / ((b1)_k (b2)_k k!), convergent when
# s = b1 + b2 - a1 - a2 - a3 > 0.  Slowly convergent sums (terms ~ k^{-1-s})
# are handled by Richardson extrapolation in the exactly known exponent
# ladder s, s+1, s+2, ..., after an optional Thomae transformation that
# raises the decay exponent.


def _is_nonpositive_int(x, tol=1e-12):
    return x <= tol and abs(x - round(x)) <= tol


def _sum_terminating(a1, a2, a3, b1, b2):
    n = int(round(-min(a for a in (a1, a2, a3) if _is_nonpositive_int(a))))
    total = 1.0
    term = 1.0
    for k in range(n):
        term *= (a1 + k) * (a2 + k) * (a3 + k) / ((b1 + k) * (b2 + k) * (1.0 + k))
        total += term
    return total


def _log_sum_positive_series(a1, a2, a3, b1, b2, margin, rel_tol):
    # all parameters strictly positive; partial sums at doubling checkpoints,
    # then eliminate the known remainder orders K^-(margin+j)
    k0 = 512
    n_checks = 6
    k_max = k0 * (1 << (n_checks - 1))
    k = np.arange(k_max, dtype=float)
    log_ratio = (
        np.log(a1 + k)
        + np.log(a2 + k)
        + np.log(a3 + k)
        - np.log(b1 + k)
        - np.log(b2 + k)
        - np.log(1.0 + k)
    )
    log_terms = np.concatenate(([0.0], np.cumsum(log_ratio)))
    scale = float(np.max(log_terms))
    terms = np.exp(log_terms - scale)
    csum = np.cumsum(terms)
    # fast-converging series: the tail is already negligible
    if terms[k0] <= rel_tol * csum[k0] * 1e-3:
        cut = np.searchsorted(-terms, -rel_tol * 1e-6 * csum[-1])
        return scale + math.log(csum[min(cut + 8, k_max)])
    checkpoints = [k0 * (1 << i) for i in range(n_checks)]
    table = [csum[c - 1] for c in checkpoints]
    for j in range(n_checks - 1):
        factor = 2.0 ** (margin + j)
        table = [
            (factor * table[i + 1] - table[i]) / (factor - 1.0)
            for i in range(len(table) - 1)
        ]
    est = table[0]
    if est <= 0.0 or not math.isfinite(est):
        raise ConvergenceError("3F2 extrapolation produced a non-positive estimate")
    return scale + math.log(est)


def log_hyp3f2_at_1(a1, a2, a3, b1, b2, rel_tol=1e-12):
    """log 3F2(a1,a2,a3; b1,b2; 1) for parameter sets with a positive sum.

    Only the all-parameters-positive region (plus zero / negative-integer
    terminating numerators) is supported here; it covers every use in the
    partition formulas.
    """
    for b in (b1, b2):
        if _is_nonpositive_int(b):
            raise DomainError(f"denominator parameter {b} is a non-positive integer")
    if any(a == 0.0 for a in (a1, a2, a3)):
        return 0.0
    if any(_is_nonpositive_int(a) for a in (a1, a2, a3)):
        value = _sum_terminating(a1, a2, a3, b1, b2)
        if value <= 0.0:
            raise DomainError("terminating 3F2 sum is non-positive; no real log")
        return math.log(value)
    margin = b1 + b2 - a1 - a2 - a3
    if margin <= 0.0:
        raise DomainError(
            f"3F2 series diverges at unit argument: convergence margin "
            f"b1+b2-a1-a2-a3 = {margin:.6g} <= 0"
        )
    if min(a1, a2, a3, b1, b2) <= 0.0:
        raise DomainError(
            "non-terminating 3F2 with negative parameters is unsupported"
        )
    # Thomae: 3F2(a,b,c;d,e;1) = G * 3F2(d-a, e-a, s; s+b, s+c; 1) with
    # margin a; pick the numerator parameter that maximizes the new margin
    # while keeping every transformed parameter positive.
    best = None
    for a, b, c in ((a1, a2, a3), (a2, a1, a3), (a3, a1, a2)):
        if a > margin and b1 - a > 0.0 and b2 - a > 0.0:
            if best is None or a > best[0]:
                best = (a, b, c)
    if best is not None:
        a, b, c = best
        prefactor = (
            gammaln(b1)
            + gammaln(b2)
            + gammaln(margin)
            - gammaln(a)
            - gammaln(margin + b)
            - gammaln(margin + c)
        )
        inner = _log_sum_positive_series(
            b1 - a, b2 - a, margin, margin + b, margin + c, a, rel_tol
        )
        return float(prefactor + inner)
    return _log_sum_positive_series(a1, a2, a3, b1, b2, margin, rel_tol)


def hyp3F2_at_1(a1, a2, a3, b1, b2, rel_tol=1e-12):
    """3F2(a1,a2,a3; b1,b2; 1) on the linear scale (value 1 when a term
    index is zero; terminating sums evaluated exactly)."""
    if any(a == 0.0 for a in (a1, a2, a3)):
        return 1.0
    if any(_is_nonpositive_int(a) for a in (a1, a2, a3)) and not any(
        _is_nonpositive_int(b) for b in (b1, b2)
    ):
        return _sum_terminating(a1, a2, a3, b1, b2)
    return math.exp(log_hyp3f2_at_1(a1, a2, a3, b1, b2, rel_tol))
