"""Two-sample partition representation and partition-probability evaluators.

A two-sample partition records, for samples of sizes n1 and n2, the
idiosyncratic clusters of each sample (``freq1``, ``freq2``), the shared
clusters with their per-sample frequencies (``shared``), and one binary
label per cluster assigning it to the idiosyncratic latent measure (1) or
the shared measure (0).  Evaluators that marginalize labels analytically
ignore the stored labels.

Four evaluators are provided: the nested-process law (which degenerates to
full exchangeability on any shared cluster), the latent-nested law in its
general quadrature form, and the stable / Dirichlet closed forms.  All
return log probabilities internally; linear-scale wrappers exponentiate.

Note on the stable closed form: the label sum evaluates to a beta-weighted
integral whose sample-2 product factor mirrors the sample-1 one,
(1 + gamma (1-w)^{n-sigma0}), and whose beta weight carries the shared
frequency mass of each sample in addition to k_l * sigma0.  Both choices
are validated against the explicit label-sum evaluation, which remains
available (and is used automatically when a sample has no idiosyncratic
cluster).
"""

import itertools
import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy.special import betaln, gammaln, logsumexp

from .crm import GAMMA, STABLE, CrmSpec, laplace_exponent, log_tau, prior_coincidence
from .errors import DomainError, ValidationError
from .specialfn import (
    DEFAULT_QUADRATURE,
    JMethod,
    _log_halfline_integral,
    _log_quadrant_integral,
    _log_unit_integral,
    log_j_integral,
    log_pochhammer,
)

# analytic evaluators need deterministic J values well below their 1e-6
# tolerances, so they pin quadrature rather than the small-argument
# Monte Carlo default policy
_ANALYTIC_J = JMethod(kind="quadrature")

ZETA_SUM_LIMIT = 20  # exact label sums are 2^(k1+k2); beyond this use closed forms

__all__ = [
    "TwoSamplePartition",
    "LnpParams",
    "eppf_full",
    "log_eppf",
    "eppf_marginal",
    "peppf_nested",
    "log_peppf_nested",
    "peppf_lnp_general",
    "log_peppf_lnp_general",
    "peppf_lnp_stable",
    "log_peppf_lnp_stable",
    "peppf_lnp_dirichlet",
    "log_peppf_lnp_dirichlet",
    "enumerate_two_sample_partitions",
    "log_stable_branches",
]


@dataclass(frozen=True)
class TwoSamplePartition:
    """Cluster structure of two samples.

    freq1/freq2 hold idiosyncratic cluster frequencies, shared holds
    (q_r1, q_r2) pairs, labels* hold the per-cluster binary labels in the
    same order (1 = idiosyncratic latent measure, 0 = shared measure).
    """

    freq1: Tuple[int, ...]
    freq2: Tuple[int, ...]
    shared: Tuple[Tuple[int, int], ...] = ()
    labels1: Optional[Tuple[int, ...]] = None
    labels2: Optional[Tuple[int, ...]] = None
    labels0: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        freq1 = tuple(int(x) for x in self.freq1)
        freq2 = tuple(int(x) for x in self.freq2)
        shared = tuple((int(a), int(b)) for a, b in self.shared)
        object.__setattr__(self, "freq1", freq1)
        object.__setattr__(self, "freq2", freq2)
        object.__setattr__(self, "shared", shared)
        if any(n < 1 for n in freq1 + freq2):
            raise ValidationError("idiosyncratic frequencies must be >= 1")
        if any(q1 < 1 or q2 < 1 for q1, q2 in shared):
            raise ValidationError("shared clusters need >= 1 observation per sample")
        for name, default_label in (("labels1", 1), ("labels2", 1), ("labels0", 0)):
            labels = getattr(self, name)
            count = {"labels1": len(freq1), "labels2": len(freq2), "labels0": len(shared)}[name]
            if labels is None:
                labels = (default_label,) * count
            else:
                labels = tuple(int(z) for z in labels)
                if len(labels) != count:
                    raise ValidationError(f"{name} length must match cluster count")
                if any(z not in (0, 1) for z in labels):
                    raise ValidationError(f"{name} entries must be 0 or 1")
            object.__setattr__(self, name, labels)

    # -- sizes and counts ---------------------------------------------------

    @property
    def n1(self):
        return sum(self.freq1) + sum(q for q, _ in self.shared)

    @property
    def n2(self):
        return sum(self.freq2) + sum(q for _, q in self.shared)

    @property
    def total(self):
        return self.n1 + self.n2

    @property
    def k1(self):
        return len(self.freq1)

    @property
    def k2(self):
        return len(self.freq2)

    @property
    def k0(self):
        return len(self.shared)

    @property
    def k(self):
        return self.k0 + self.k1 + self.k2

    @property
    def kbar(self):
        """Total count of label-1 clusters (all classes)."""
        return sum(self.labels1) + sum(self.labels2) + sum(self.labels0)

    def label_mass(self, sample):
        """(kbar_l, nbar_l): label-1 cluster count and frequency mass seen
        by the given sample; shared clusters contribute their per-sample
        frequency when labelled 1."""
        if sample == 1:
            own = sum(z for z in self.labels1)
            mass = sum(n for n, z in zip(self.freq1, self.labels1) if z)
            shared_k = sum(self.labels0)
            shared_mass = sum(q1 for (q1, _), z in zip(self.shared, self.labels0) if z)
        else:
            own = sum(z for z in self.labels2)
            mass = sum(n for n, z in zip(self.freq2, self.labels2) if z)
            shared_k = sum(self.labels0)
            shared_mass = sum(q2 for (_, q2), z in zip(self.shared, self.labels0) if z)
        return own + shared_k, mass + shared_mass

    @property
    def pooled_freqs(self):
        return self.freq1 + self.freq2 + tuple(q1 + q2 for q1, q2 in self.shared)

    def swapped(self):
        """The same partition with the two samples interchanged."""
        return TwoSamplePartition(
            self.freq2,
            self.freq1,
            tuple((q2, q1) for q1, q2 in self.shared),
            self.labels2,
            self.labels1,
            self.labels0,
        )

    def with_labels(self, labels1, labels2, labels0=None):
        return replace(
            self,
            labels1=tuple(labels1),
            labels2=tuple(labels2),
            labels0=tuple(labels0) if labels0 is not None else self.labels0,
        )

    # -- serialization -------------------------------------------------------

    def to_dict(self):
        return {
            "freq1": list(self.freq1),
            "freq2": list(self.freq2),
            "shared": [list(pair) for pair in self.shared],
            "labels1": list(self.labels1),
            "labels2": list(self.labels2),
            "labels0": list(self.labels0),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, payload):
        try:
            return cls(
                freq1=tuple(payload.get("freq1", ())),
                freq2=tuple(payload.get("freq2", ())),
                shared=tuple(tuple(p) for p in payload.get("shared", ())),
                labels1=tuple(payload["labels1"]) if "labels1" in payload else None,
                labels2=tuple(payload["labels2"]) if "labels2" in payload else None,
                labels0=tuple(payload["labels0"]) if "labels0" in payload else None,
            )
        except (TypeError, KeyError) as exc:
            raise ValidationError(f"malformed partition payload: {exc}") from exc

    @classmethod
    def from_json(cls, text):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid partition JSON: {exc}") from exc
        return cls.from_dict(payload)


@dataclass(frozen=True)
class LnpParams:
    """Latent nested process parameters: outer spec (drives the coincidence
    probability), inner spec (drives the cluster integrals), and the shared
    measure multiplier gamma (gamma = 0 reproduces the plain nested law)."""

    outer: CrmSpec
    inner: CrmSpec
    gamma: float

    def __post_init__(self):
        if not (self.gamma >= 0.0 and math.isfinite(self.gamma)):
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}")


# ---------------------------------------------------------------------------
# exchangeable partition probability (single fully exchangeable block law)


def _clean_freqs(freqs):
    freqs = [int(n) for n in freqs]
    if any(n < 0 for n in freqs):
        raise DomainError("frequencies must be >= 0")
    freqs = [n for n in freqs if n > 0]  # zero arguments drop by convention
    if not freqs:
        raise DomainError("at least one positive frequency is required")
    return freqs


def log_eppf(inner, freqs):
    """log Phi_k^(N)(freqs) for the inner family, in closed form (Ewens for
    gamma, the stable product law otherwise)."""
    freqs = _clean_freqs(freqs)
    n = sum(freqs)
    k = len(freqs)
    if inner.family == GAMMA:
        theta = inner.mass
        return (
            k * math.log(theta)
            - log_pochhammer(theta, n)
            + sum(gammaln(m) for m in freqs)
        )
    sigma0 = inner.sigma
    xi = sum(log_pochhammer(1.0 - sigma0, m - 1) for m in freqs)
    return (k - 1) * math.log(sigma0) + gammaln(k) + xi - gammaln(n)


def _log_eppf_quadrature(inner, freqs, quad_spec=DEFAULT_QUADRATURE):
    # (c0^k / Gamma(N)) int u^{N-1} e^{-c0 psi0(u)} prod tau_{m_j}(u) du
    freqs = _clean_freqs(freqs)
    n = sum(freqs)
    k = len(freqs)
    c0 = inner.mass

    def log_f(u, log_u):
        acc = (n - 1) * log_u - c0 * laplace_exponent(inner, u)
        for m in freqs:
            acc = acc + log_tau(inner, m, u, log_u)
        return acc

    if inner.family == GAMMA:
        exps = (float(n), c0)
    else:
        exps = (k * inner.sigma, inner.sigma)
    integral = _log_halfline_integral(log_f, exponents=exps, spec=quad_spec)
    return k * math.log(c0) - gammaln(n) + integral


def eppf_full(inner, freqs, method="closed_form", quad_spec=DEFAULT_QUADRATURE):
    """Phi_k^(N): probability of the given fully exchangeable partition."""
    if method == "closed_form":
        return math.exp(log_eppf(inner, freqs))
    if method == "quadrature":
        return math.exp(_log_eppf_quadrature(inner, freqs, quad_spec))
    raise DomainError(f"unknown method {method!r}")


def eppf_marginal(inner, own_freqs, shared_freqs=(), method="closed_form"):
    """Marginal single-sample law: the full evaluator on the concatenated
    frequency list (idiosyncratic then shared-within-sample)."""
    return eppf_full(inner, tuple(own_freqs) + tuple(shared_freqs), method=method)


# ---------------------------------------------------------------------------
# nested process (labels play no role; a shared cluster kills the second term)


def log_peppf_nested(params, part):
    if part.n1 < 1 or part.n2 < 1:
        raise DomainError("both samples must be nonempty")
    pi1 = prior_coincidence(params.outer)
    first = math.log(pi1) + log_eppf(params.inner, part.pooled_freqs)
    if part.k0 > 0:
        return first
    second = (
        math.log1p(-pi1)
        + log_eppf(params.inner, part.freq1)
        + log_eppf(params.inner, part.freq2)
    )
    return float(np.logaddexp(first, second))


def peppf_nested(params, part):
    return math.exp(log_peppf_nested(params, part))


# ---------------------------------------------------------------------------
# latent nested process, general quadrature evaluation


def _label_vectors(k1, k2):
    return itertools.product((0, 1), repeat=k1 + k2)


def _log_i2_quadrature(inner, gamma, part, zeta, quad_spec):
    """log I2 for one idiosyncratic label vector zeta (length k1 + k2)."""
    c0 = inner.mass
    z1 = zeta[: part.k1]
    z2 = zeta[part.k1 :]
    kbar = sum(zeta)
    n1, n2 = part.n1, part.n2
    if gamma == 0.0:
        # gamma^(k - kbar) vanishes unless every cluster is labelled 1
        if part.k - kbar > 0:
            return -math.inf
        log_gamma_pow = 0.0
    else:
        log_gamma_pow = (part.k - kbar) * math.log(gamma)

    pooled = [q1 + q2 for q1, q2 in part.shared]

    def log_f(u, v, log_u, log_v):
        log_uv = np.logaddexp(log_u, log_v)
        uv = u + v
        acc = (
            (n1 - 1) * log_u
            + (n2 - 1) * log_v
            - gamma * c0 * laplace_exponent(inner, uv)
            - c0 * (laplace_exponent(inner, u) + laplace_exponent(inner, v))
        )
        for m, z in zip(part.freq1, z1):
            acc = acc + (
                log_tau(inner, m, u, log_u) if z else log_tau(inner, m, uv, log_uv)
            )
        for m, z in zip(part.freq2, z2):
            acc = acc + (
                log_tau(inner, m, v, log_v) if z else log_tau(inner, m, uv, log_uv)
            )
        for m in pooled:
            acc = acc + log_tau(inner, m, uv, log_uv)
        return acc

    if inner.family == STABLE:
        s0 = inner.sigma
        kbar1, nbar1 = sum(z1), sum(m for m, z in zip(part.freq1, z1) if z)
        kbar2, nbar2 = sum(z2), sum(m for m, z in zip(part.freq2, z2) if z)
        exps_u = (n1 - nbar1 + kbar1 * s0, s0)
        exps_v = (n2 - nbar2 + kbar2 * s0, s0)
    else:
        exps_u = (float(n1), c0 * (1.0 + gamma))
        exps_v = (float(n2), c0 * (1.0 + gamma))
    integral = _log_quadrant_integral(log_f, exps_u, exps_v, spec=quad_spec)
    return (
        part.k * math.log(c0)
        + log_gamma_pow
        - gammaln(n1)
        - gammaln(n2)
        + integral
    )


def _log_lnp_general_terms(params, part, quad_spec):
    """The two branch terms of the latent nested law, each its own
    normalized partition law: (log T1, log T2)."""
    inner, gamma = params.inner, params.gamma
    if part.n1 < 1 or part.n2 < 1:
        raise DomainError("both samples must be nonempty")
    if part.k1 + part.k2 > ZETA_SUM_LIMIT:
        raise DomainError(
            f"label sum over 2^{part.k1 + part.k2} terms exceeds the exact-"
            f"evaluation guard ({ZETA_SUM_LIMIT}); use a family closed form"
        )
    c0 = inner.mass
    n = part.total
    k = part.k

    def log_f1(s, log_s):
        acc = (n - 1) * log_s - (1.0 + gamma) * c0 * laplace_exponent(inner, s)
        for m in part.pooled_freqs:
            acc = acc + log_tau(inner, m, s, log_s)
        return acc

    if inner.family == STABLE:
        exps = (k * inner.sigma, inner.sigma)
    else:
        exps = (float(n), c0 * (1.0 + gamma))
    log_t1 = (
        k * math.log(c0)
        + k * math.log1p(gamma)
        - gammaln(n)
        + _log_halfline_integral(log_f1, exponents=exps, spec=quad_spec)
    )
    parts = [
        _log_i2_quadrature(inner, gamma, part, zeta, quad_spec)
        for zeta in _label_vectors(part.k1, part.k2)
    ]
    finite = [p for p in parts if p > -math.inf]
    log_t2 = float(logsumexp(finite)) if finite else -math.inf
    return log_t1, log_t2


def log_peppf_lnp_general(params, part, quad_spec=DEFAULT_QUADRATURE):
    log_t1, log_t2 = _log_lnp_general_terms(params, part, quad_spec)
    pi1 = prior_coincidence(params.outer)
    return float(
        np.logaddexp(math.log(pi1) + log_t1, math.log1p(-pi1) + log_t2)
    )


def peppf_lnp_general(params, part, quad_spec=DEFAULT_QUADRATURE):
    return math.exp(log_peppf_lnp_general(params, part, quad_spec))


# ---------------------------------------------------------------------------
# stable closed form


def _log_xi(sigma0, part):
    total = 0.0
    for m in part.pooled_freqs:
        total += log_pochhammer(1.0 - sigma0, m - 1)
    return total


def log_stable_branches(part, sigma0, gamma, j_method=None):
    """Log weights of the two labelled branches of the stable latent
    nested law for a fully labelled partition.

    Returns (log_full, log_split): the full-exchangeability branch carries
    every labelling; the split branch is -inf whenever a shared cluster is
    labelled 1.  The prior of a labelled partition is
    pi1* exp(log_full) + (1 - pi1*) exp(log_split).
    """
    k = part.k
    kbar_total = part.kbar
    base = (k - 1) * math.log(sigma0) + gammaln(k) + _log_xi(sigma0, part)

    def gamma_pow(exponent):
        if exponent == 0:
            return 0.0
        return exponent * math.log(gamma) if gamma > 0.0 else -math.inf

    log_full = gamma_pow(k - kbar_total) - k * math.log1p(gamma) + base - gammaln(part.total)

    if any(part.labels0) or part.n1 < 1 or part.n2 < 1:
        return log_full, -math.inf
    kbar1, nbar1 = part.label_mass(1)
    kbar2, nbar2 = part.label_mass(2)
    h1 = part.n1 - nbar1 + kbar1 * sigma0
    h2 = part.n2 - nbar2 + kbar2 * sigma0
    kbar = kbar1 + kbar2
    lg = gamma_pow(k - kbar)
    if lg == -math.inf:
        return log_full, -math.inf
    log_split = (
        lg
        + base
        - gammaln(part.n1)
        - gammaln(part.n2)
        + log_j_integral(sigma0, gamma, h1, h2, k, method=j_method or _ANALYTIC_J)
    )
    return log_full, log_split


def _log_stable_zeta_sum(sigma0, gamma, part, j_method):
    terms = []
    for zeta in _label_vectors(part.k1, part.k2):
        labelled = part.with_labels(
            zeta[: part.k1], zeta[part.k1 :], (0,) * part.k0
        )
        _, split = log_stable_branches(labelled, sigma0, gamma, j_method)
        if split > -math.inf:
            terms.append(split)
    return float(logsumexp(terms)) if terms else -math.inf


def log_peppf_lnp_stable(
    sigma,
    sigma0,
    gamma,
    part,
    j_method=None,
    quad_spec=DEFAULT_QUADRATURE,
    return_detail=False,
):
    """Stable-family closed form of the latent nested partition law.

    When a sample has no idiosyncratic cluster the printed beta weight of
    the closed form degenerates, so the explicit label-sum evaluation is
    used instead; the chosen path is reported when ``return_detail``.
    """
    if not 0.0 < sigma < 1.0 or not 0.0 < sigma0 < 1.0:
        raise DomainError("sigma and sigma0 must lie in (0,1)")
    if gamma < 0.0:
        raise DomainError("gamma must be >= 0")
    if part.n1 < 1 or part.n2 < 1:
        raise DomainError("both samples must be nonempty")
    k = part.k
    base = (
        (k - 1) * math.log(sigma0)
        + gammaln(k)
        + _log_xi(sigma0, part)
        - gammaln(part.total)
    )
    if part.k1 == 0 or part.k2 == 0:
        if part.k1 + part.k2 > ZETA_SUM_LIMIT:
            raise DomainError("partition too large for the label-sum fallback")
        log_t2 = _log_stable_zeta_sum(sigma0, gamma, part, j_method)
        value = float(
            np.logaddexp(math.log1p(-sigma) + base, math.log(sigma) + log_t2)
        )
        return (value, "zeta_sum") if return_detail else value

    shared_mass1 = sum(q1 for q1, _ in part.shared)
    shared_mass2 = sum(q2 for _, q2 in part.shared)
    a_w = shared_mass1 + part.k1 * sigma0
    b_w = shared_mass2 + part.k2 * sigma0

    def log_f(log_w, log_1mw):
        denom = gamma + np.exp(sigma0 * log_w) + np.exp(sigma0 * log_1mw)
        acc = (a_w - 1.0) * log_w + (b_w - 1.0) * log_1mw - k * np.log(denom)
        for m in part.freq1:
            acc = acc + np.log1p(gamma * np.exp((m - sigma0) * log_w))
        for m in part.freq2:
            acc = acc + np.log1p(gamma * np.exp((m - sigma0) * log_1mw))
        return acc

    if gamma == 0.0 and part.k0 > 0:
        second = -math.inf
    else:
        log_gamma_pow = part.k0 * math.log(gamma) if part.k0 > 0 else 0.0
        second = (
            math.log(sigma)
            + log_gamma_pow
            - betaln(part.n1, part.n2)
            + _log_unit_integral(log_f, exponents=(a_w, b_w), spec=quad_spec)
        )
    value = base + float(np.logaddexp(math.log1p(-sigma), second))
    return (value, "beta_integral") if return_detail else value


def peppf_lnp_stable(sigma, sigma0, gamma, part, j_method=None,
                     quad_spec=DEFAULT_QUADRATURE):
    return math.exp(log_peppf_lnp_stable(sigma, sigma0, gamma, part, j_method, quad_spec))


# ---------------------------------------------------------------------------
# Dirichlet closed form


def log_peppf_lnp_dirichlet(c, c0, gamma, part, hyp_rel_tol=1e-12):
    """Gamma-family (Dirichlet) closed form of the latent nested law."""
    if c <= 0.0 or c0 <= 0.0:
        raise DomainError("total masses c and c0 must be positive")
    if gamma < 0.0:
        raise DomainError("gamma must be >= 0")
    if part.n1 < 1 or part.n2 < 1:
        raise DomainError("both samples must be nonempty")
    if part.k1 + part.k2 > ZETA_SUM_LIMIT:
        raise DomainError(
            f"label sum over 2^{part.k1 + part.k2} terms exceeds the exact-"
            f"evaluation guard ({ZETA_SUM_LIMIT})"
        )
    from .specialfn import log_hyp3f2_at_1

    n1, n2, k = part.n1, part.n2, part.k
    log_xi0 = sum(gammaln(m) for m in part.pooled_freqs)
    beta_par = c0 * (2.0 + gamma)
    log_t1 = (
        -math.log1p(c)
        + k * math.log1p(gamma)
        - log_pochhammer(c0 * (1.0 + gamma), part.total)
    )
    terms = []
    for zeta in _label_vectors(part.k1, part.k2):
        kbar = sum(zeta)
        if gamma == 0.0 and (part.k - kbar) > 0:
            continue
        nbar1 = sum(m for m, z in zip(part.freq1, zeta[: part.k1]) if z)
        nbar2 = sum(m for m, z in zip(part.freq2, zeta[part.k1 :]) if z)
        alpha = (gamma + 1.0) * c0 + n1 - nbar1
        log_gamma_pow = (part.k - kbar) * math.log(gamma) if part.k > kbar else 0.0
        terms.append(
            log_gamma_pow
            - log_pochhammer(alpha, n2)
            - log_pochhammer(beta_par, n1)
            + log_hyp3f2_at_1(
                c0 + nbar2, alpha, n1, alpha + n2, beta_par + n1, rel_tol=hyp_rel_tol
            )
        )
    log_t2 = float(logsumexp(terms)) if terms else -math.inf
    bracket = np.logaddexp(log_t1, math.log(c) - math.log1p(c) + log_t2)
    return float(log_xi0 + k * math.log(c0) + bracket)


def peppf_lnp_dirichlet(c, c0, gamma, part, hyp_rel_tol=1e-12):
    return math.exp(log_peppf_lnp_dirichlet(c, c0, gamma, part, hyp_rel_tol))


# ---------------------------------------------------------------------------
# enumeration oracle


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for smaller in _set_partitions(rest):
        for i in range(len(smaller)):
            yield smaller[:i] + [[first] + smaller[i]] + smaller[i + 1 :]
        yield [[first]] + smaller


def enumerate_two_sample_partitions(n1, n2):
    """All two-sample partitions of samples of sizes n1 and n2 (n1+n2 <= 8).

    Blocks of the pooled set partition are classified by which samples they
    touch; labels are left at their defaults (evaluators ignore them).
    """
    if n1 < 0 or n2 < 0 or (n1 + n2) < 1:
        raise DomainError("need at least one observation")
    if n1 + n2 > 8:
        raise DomainError(f"enumeration budget is n1+n2 <= 8, got {n1 + n2}")
    out = []
    for blocks in _set_partitions(list(range(n1 + n2))):
        freq1, freq2, shared = [], [], []
        for block in sorted(blocks, key=min):
            a = sum(1 for i in block if i < n1)
            b = len(block) - a
            if a and b:
                shared.append((a, b))
            elif a:
                freq1.append(a)
            else:
                freq2.append(b)
        out.append(
            TwoSamplePartition(tuple(freq1), tuple(freq2), tuple(shared))
        )
    return out
