"""Marginal Gibbs sampler for the stable latent nested mixture model.

State lives at the cluster level: every observation points at a cluster,
each cluster carries a binary label (1 = idiosyncratic latent measure,
0 = shared measure) and a Gaussian component value (M, V).  A sweep visits,
in order: every observation's cluster assignment, every cluster label, the
homogeneity indicator I, sigma, sigma0 (griddy), gamma (random-walk MH on
the log scale), the base-measure hyperparameters (m, tau), and finally the
acceleration step that redraws all cluster values from their conjugate
posteriors.

Sample-2 updates are the sample-swap image of the sample-1 formulas; one
code path serves both by tracking "own" and "other" sample roles.  The
recurring beta-kernel integral J is memoized per (sigma0, gamma) regime,
since its arguments repeat heavily within a sweep.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import betaln, gammaln, logsumexp

from .errors import DomainError, NumericalError, ValidationError
from .mixture import (
    NIGBase,
    log_marginal_likelihood,
    posterior_cell,
    sample_cluster_value,
)
from .partition import TwoSamplePartition
from .specialfn import JMethod, log_j_integral, log_j_integral_grid

__all__ = [
    "GammaPrior",
    "ChainConfig",
    "GibbsState",
    "ChainOutput",
    "initial_state",
    "step_theta",
    "step_labels",
    "step_I",
    "step_sigma",
    "step_sigma0",
    "step_gamma",
    "step_hyperparams",
    "accelerate",
    "sweep",
    "run_chain",
    "predictive_density",
    "geweke_joint_test",
    "GewekeResult",
    "write_chain_csv",
    "read_chain_csv",
]


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape, rate) prior for the shared-measure multiplier."""

    shape: float = 1.0
    rate: float = 1.0

    def __post_init__(self):
        if self.shape <= 0.0 or self.rate <= 0.0:
            raise ValidationError("gamma prior needs positive shape and rate")

    def logpdf(self, x):
        if x <= 0.0:
            return -math.inf
        return (
            self.shape * math.log(self.rate)
            - gammaln(self.shape)
            + (self.shape - 1.0) * math.log(x)
            - self.rate * x
        )

    def draw(self, rng):
        return rng.gamma(self.shape, 1.0 / self.rate)


@dataclass(frozen=True)
class ChainConfig:
    """Sampler configuration; defaults follow the reference study settings
    ((w, W) = (1, 100), A = 2, a = pooled data mean, uniform sigma priors,
    Gamma(1,1) on gamma)."""

    iterations: int = 10_000
    burn_in: int = 5_000
    seed: int = 0
    s0: float = 1.0
    S0: float = 1.0
    w: float = 1.0
    W: float = 100.0
    A: float = 2.0
    a: Optional[float] = None  # None: pooled data mean
    kappa: Optional[Callable[[float], float]] = None   # sigma prior density
    kappa0: Optional[Callable[[float], float]] = None  # sigma0 prior density
    gamma_prior: GammaPrior = GammaPrior()
    j_method: JMethod = JMethod(kind="quadrature")
    sigma0_grid_size: int = 200
    gamma_proposal_sd: float = 0.5
    density_grid: Optional[np.ndarray] = None
    density_grid_size: int = 512

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValidationError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValidationError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.sigma0_grid_size < 2:
            raise ValidationError("sigma0_grid_size must be >= 2")
        if self.gamma_proposal_sd <= 0.0:
            raise ValidationError("gamma_proposal_sd must be positive")


class _Cluster:
    __slots__ = ("n1", "n2", "label", "M", "V")

    def __init__(self, n1, n2, label, M, V):
        self.n1 = n1
        self.n2 = n2
        self.label = label
        self.M = M
        self.V = V

    @property
    def size(self):
        return self.n1 + self.n2


@dataclass
class GibbsState:
    x1: np.ndarray
    x2: np.ndarray
    assign1: np.ndarray
    assign2: np.ndarray
    clusters: dict
    next_id: int
    I: int
    sigma: float
    sigma0: float
    gamma: float
    base: NIGBase
    j_method: JMethod = JMethod(kind="quadrature")
    j_cache: dict = field(default_factory=dict)

    @property
    def n1(self):
        return self.x1.size

    @property
    def n2(self):
        return self.x2.size

    def counts(self):
        k0 = k1 = k2 = 0
        for cl in self.clusters.values():
            if cl.n1 > 0 and cl.n2 > 0:
                k0 += 1
            elif cl.n1 > 0:
                k1 += 1
            else:
                k2 += 1
        return k0, k1, k2

    def label_stats(self):
        """(kbar1, nbar1, kbar2, nbar2, kbar_total) over label-1 clusters."""
        kbar1 = nbar1 = kbar2 = nbar2 = kbar = 0
        for cl in self.clusters.values():
            if cl.label:
                kbar += 1
                if cl.n1 > 0:
                    kbar1 += 1
                    nbar1 += cl.n1
                if cl.n2 > 0:
                    kbar2 += 1
                    nbar2 += cl.n2
        return kbar1, nbar1, kbar2, nbar2, kbar

    def partition(self):
        """Snapshot as a TwoSamplePartition (cluster order: sample-1
        idiosyncratic, sample-2 idiosyncratic, shared)."""
        f1, f2, sh, l1, l2, l0 = [], [], [], [], [], []
        for cl in self.clusters.values():
            if cl.n1 > 0 and cl.n2 > 0:
                sh.append((cl.n1, cl.n2))
                l0.append(cl.label)
            elif cl.n1 > 0:
                f1.append(cl.n1)
                l1.append(cl.label)
            else:
                f2.append(cl.n2)
                l2.append(cl.label)
        return TwoSamplePartition(
            tuple(f1), tuple(f2), tuple(sh), tuple(l1), tuple(l2), tuple(l0)
        )

    def validate(self):
        """Invariant check used by tests: memberships consistent, no empty
        clusters, shared labels zero whenever I = 0."""
        tallies = {cid: [0, 0] for cid in self.clusters}
        for cid in self.assign1:
            tallies[int(cid)][0] += 1
        for cid in self.assign2:
            tallies[int(cid)][1] += 1
        for cid, cl in self.clusters.items():
            if tallies[cid] != [cl.n1, cl.n2]:
                raise ValidationError(f"cluster {cid} counts disagree with assignments")
            if cl.size == 0:
                raise ValidationError(f"cluster {cid} is empty")
            if self.I == 0 and cl.n1 > 0 and cl.n2 > 0 and cl.label == 1:
                raise ValidationError("shared cluster labelled 1 while I=0")
        return True


def _log_j(state, h1, h2, h, rng):
    """Memoized log J at the state's (sigma0, gamma); Monte Carlo draws a
    per-call sub-seed from the chain stream on cache misses."""
    key = (state.sigma0, state.gamma, h1, h2, h)
    hit = state.j_cache.get(key)
    if hit is not None:
        return hit
    method = state.j_method
    if method.kind == "monte_carlo":
        method = JMethod("monte_carlo", method.mc_samples, int(rng.integers(2**62)))
    value = log_j_integral(state.sigma0, state.gamma, h1, h2, h, method=method)
    state.j_cache[key] = value
    return value


def _log_h(x, cl):
    return -0.5 * (math.log(2.0 * math.pi * cl.V) + (x - cl.M) ** 2 / cl.V)


def _own_other(state, ell):
    if ell == 1:
        return state.x1, state.assign1, state.n1, state.n2
    return state.x2, state.assign2, state.n2, state.n1


def _detach(state, ell, j):
    """Remove observation j of sample ell from its cluster; returns the
    observation's label (inherited from the old cluster)."""
    _, assign, _, _ = _own_other(state, ell)
    cid = int(assign[j])
    cl = state.clusters[cid]
    zeta = cl.label
    if ell == 1:
        cl.n1 -= 1
    else:
        cl.n2 -= 1
    if cl.size == 0:
        del state.clusters[cid]
    assign[j] = -1
    return zeta


def _theta_candidates(state, ell, x, zeta, rng, log_ml_x):
    """Candidate cluster ids (-1 = fresh cluster) and their log weights for
    reassigning one observation with label zeta."""
    sigma0, gamma = state.sigma0, state.gamma
    k_minus = len(state.clusters)
    ids, logw = [], []
    if state.I == 1:
        for cid, cl in state.clusters.items():
            if cl.label == zeta:
                ids.append(cid)
                logw.append(math.log(cl.size - sigma0) + _log_h(x, cl))
        log_new = (
            math.log(sigma0)
            + (math.log(k_minus) if k_minus else 0.0)
            - math.log1p(gamma)
            + log_ml_x
        )
        if zeta == 0:
            log_new += math.log(gamma) if gamma > 0.0 else -math.inf
        ids.append(-1)
        logw.append(log_new)
        return ids, logw

    kbar1, nbar1, kbar2, nbar2, _ = state.label_stats()
    if ell == 1:
        a_own = state.n1 - (nbar1 + zeta) + kbar1 * sigma0
        a_oth = state.n2 - nbar2 + kbar2 * sigma0
    else:
        a_own = state.n2 - (nbar2 + zeta) + kbar2 * sigma0
        a_oth = state.n1 - nbar1 + kbar1 * sigma0
    log_j_exist = None  # lazily: a_own can be 0 exactly when no candidate matches
    for cid, cl in state.clusters.items():
        if cl.label != zeta:
            continue
        own_only = (cl.n2 == 0) if ell == 1 else (cl.n1 == 0)
        if zeta == 1 and not own_only:
            continue  # a label-1 cluster cannot become shared while I=0
        if log_j_exist is None:
            log_j_exist = _log_j(state, a_own, a_oth, k_minus, rng)
        ids.append(cid)
        logw.append(log_j_exist + math.log(cl.size - sigma0) + _log_h(x, cl))
    log_new = (
        math.log(sigma0)
        + (math.log(k_minus) if k_minus else 0.0)
        + _log_j(state, a_own + zeta * sigma0, a_oth, k_minus + 1, rng)
        + log_ml_x
    )
    if zeta == 0:
        log_new += math.log(gamma) if gamma > 0.0 else -math.inf
    ids.append(-1)
    logw.append(log_new)
    return ids, logw


def _pick(logw, rng):
    top = max(logw)
    if not math.isfinite(top):
        raise NumericalError("all candidate weights vanished")
    weights = [math.exp(v - top) for v in logw]
    target = rng.uniform() * sum(weights)
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if target <= acc:
            return i
    return len(weights) - 1


def step_theta(state, j, ell, rng, log_ml_x=None):
    """Reassign observation j of sample ell to an existing compatible
    cluster or to a fresh one drawn from the single-observation posterior."""
    x_arr, assign, _, _ = _own_other(state, ell)
    x = float(x_arr[j])
    zeta = _detach(state, ell, j)
    if log_ml_x is None:
        log_ml_x = float(log_marginal_likelihood(state.base, x))
    ids, logw = _theta_candidates(state, ell, x, zeta, rng, log_ml_x)
    chosen = ids[_pick(logw, rng)]
    if chosen == -1:
        value = sample_cluster_value(state.base, [x], rng)
        chosen = state.next_id
        state.next_id += 1
        state.clusters[chosen] = _Cluster(0, 0, zeta, value.M, value.V)
    cl = state.clusters[chosen]
    if ell == 1:
        cl.n1 += 1
    else:
        cl.n2 += 1
    assign[j] = chosen
    return state


def _label_log_weights(state, cid, rng):
    """Two-point log weights (x=0, x=1) for an idiosyncratic cluster's
    label under I=0."""
    cl = state.clusters[cid]
    sigma0, gamma = state.sigma0, state.gamma
    k = len(state.clusters)
    out = []
    original = cl.label
    for x in (0, 1):
        cl.label = x
        kbar1, nbar1, kbar2, nbar2, kbar = state.label_stats()
        h1 = state.n1 - nbar1 + kbar1 * sigma0
        h2 = state.n2 - nbar2 + kbar2 * sigma0
        if gamma > 0.0:
            lg = (k - kbar) * math.log(gamma)
        else:
            lg = 0.0 if k == kbar else -math.inf
        if lg == -math.inf:
            out.append(-math.inf)
        else:
            out.append(lg + _log_j(state, h1, h2, k, rng))
    cl.label = original
    return out


def step_labels(state, cid, rng):
    """Resample one cluster's binary label from its full conditional."""
    cl = state.clusters[cid]
    shared = cl.n1 > 0 and cl.n2 > 0
    if state.I == 0 and shared:
        cl.label = 0
        return state
    if state.I == 1:
        # gamma^(1-x) / (1+gamma)
        p1 = 1.0 / (1.0 + state.gamma)
        cl.label = 1 if rng.uniform() < p1 else 0
        return state
    logw = _label_log_weights(state, cid, rng)
    if logw[0] == -math.inf and logw[1] == -math.inf:
        return state
    p1 = 1.0 / (1.0 + math.exp(min(logw[0] - logw[1], 700.0))) if logw[1] > -math.inf else 0.0
    cl.label = 1 if rng.uniform() < p1 else 0
    return state


def step_I(state, rng):
    """Update the homogeneity indicator; forced to 1 when a shared cluster
    carries label 1."""
    for cl in state.clusters.values():
        if cl.n1 > 0 and cl.n2 > 0 and cl.label == 1:
            state.I = 1
            return state
    sigma, sigma0, gamma = state.sigma, state.sigma0, state.gamma
    kbar1, nbar1, kbar2, nbar2, _ = state.label_stats()
    k = len(state.clusters)
    a1 = state.n1 - nbar1 + kbar1 * sigma0
    a2 = state.n2 - nbar2 + kbar2 * sigma0
    log_num = math.log1p(-sigma) + betaln(state.n1, state.n2)
    log_alt = (
        math.log(sigma)
        + _log_j(state, a1, a2, k, rng)
        + k * math.log1p(gamma)
    )
    p1 = 1.0 / (1.0 + math.exp(min(log_alt - log_num, 700.0)))
    state.I = 1 if rng.uniform() < p1 else 0
    return state


def _grid_sample(log_density, grid_size, rng):
    top = log_density.max()
    if not math.isfinite(top):
        raise NumericalError("all grid densities underflowed")
    probs = np.exp(log_density - top)
    probs /= probs.sum()
    cell = rng.choice(grid_size, p=probs)
    return (cell + rng.uniform()) / grid_size


def step_sigma(state, rng, kappa=None, grid_size=200):
    """sigma | I is Beta(1,2) when I=1 and Beta(2,1) when I=0 under the
    uniform prior (exact draws); other priors fall back to the grid."""
    if kappa is None:
        state.sigma = rng.beta(1.0, 2.0) if state.I == 1 else rng.beta(2.0, 1.0)
        return state
    grid = (np.arange(grid_size) + 0.5) / grid_size
    logk = np.log([kappa(s) for s in grid])
    logd = logk + (np.log1p(-grid) if state.I == 1 else np.log(grid))
    state.sigma = _grid_sample(logd, grid_size, rng)
    return state


def step_sigma0(state, rng, kappa0=None, grid_size=200):
    """Griddy update of sigma0 from its full conditional."""
    grid = (np.arange(grid_size) + 0.5) / grid_size
    k = len(state.clusters)
    logd = (k - 1) * np.log(grid)
    if kappa0 is not None:
        logd = logd + np.log([kappa0(s) for s in grid])
    sizes = np.array([cl.size for cl in state.clusters.values()], dtype=float)
    # sum of log (1 - s0)_(n_c - 1) across clusters, vectorized on the grid
    logd = logd + np.sum(
        gammaln(sizes[:, None] - grid[None, :]) - gammaln(1.0 - grid[None, :]),
        axis=0,
    )
    if state.I == 0:
        kbar1, nbar1, kbar2, nbar2, _ = state.label_stats()
        h1 = state.n1 - nbar1 + kbar1 * grid
        h2 = state.n2 - nbar2 + kbar2 * grid
        logd = logd + log_j_integral_grid(grid, state.gamma, h1, h2, k)
    state.sigma0 = _grid_sample(logd, grid_size, rng)
    state.j_cache = {}
    return state


def _log_gamma_target(state, gamma, rng):
    k = len(state.clusters)
    _, _, _, _, kbar = state.label_stats()
    if gamma > 0.0:
        lg = (k - kbar) * math.log(gamma)
    else:
        return -math.inf
    if state.I == 1:
        branch = math.log1p(-state.sigma) - k * math.log1p(gamma)
    else:
        kbar1, nbar1, kbar2, nbar2, _ = state.label_stats()
        h1 = state.n1 - nbar1 + kbar1 * state.sigma0
        h2 = state.n2 - nbar2 + kbar2 * state.sigma0
        method = state.j_method
        if method.kind == "monte_carlo":
            method = JMethod("monte_carlo", method.mc_samples, int(rng.integers(2**62)))
        branch = math.log(state.sigma) + log_j_integral(
            state.sigma0, gamma, h1, h2, k, method=method
        )
    return lg + branch


def step_gamma(state, rng, prior=GammaPrior(), proposal_sd=0.5):
    """Metropolis-within-Gibbs on log gamma with a Gaussian random walk."""
    current = state.gamma
    proposal = current * math.exp(proposal_sd * rng.normal())
    log_ratio = (
        _log_gamma_target(state, proposal, rng)
        + prior.logpdf(proposal)
        - _log_gamma_target(state, current, rng)
        - prior.logpdf(current)
        + math.log(proposal)
        - math.log(current)
    )
    if math.log(rng.uniform()) < log_ratio:
        state.gamma = proposal
        state.j_cache = {}
    return state


def step_hyperparams(state, rng):
    """Exact conjugate draws of tau (inverse-gamma) and m (normal)."""
    base = state.base
    values = [(cl.M, cl.V) for cl in state.clusters.values()]
    k = len(values)
    shape = 0.5 * base.w + 0.5 * k
    scale = 0.5 * base.W + sum((m - base.m) ** 2 / (2.0 * v) for m, v in values)
    tau = scale / rng.gamma(shape)
    precision = 1.0 / base.A + sum(1.0 / (tau * v) for _, v in values)
    mean = (base.a / base.A + sum(m / (tau * v) for m, v in values)) / precision
    m_new = mean + rng.normal() / math.sqrt(precision)
    state.base = base.with_hyper(m_new, tau)
    return state


def accelerate(state, rng):
    """Redraw every cluster value from its conjugate posterior given its
    member observations; partition and labels are untouched."""
    members = {cid: [] for cid in state.clusters}
    for j, cid in enumerate(state.assign1):
        members[int(cid)].append(float(state.x1[j]))
    for j, cid in enumerate(state.assign2):
        members[int(cid)].append(float(state.x2[j]))
    for cid, cl in state.clusters.items():
        value = sample_cluster_value(state.base, members[cid], rng)
        cl.M, cl.V = value.M, value.V
    return state


def sweep(state, rng, config):
    state.j_cache = {}
    log_ml1 = log_marginal_likelihood(state.base, state.x1)
    log_ml2 = log_marginal_likelihood(state.base, state.x2)
    for j in range(state.n1):
        step_theta(state, j, 1, rng, float(log_ml1[j]))
    for j in range(state.n2):
        step_theta(state, j, 2, rng, float(log_ml2[j]))
    for cid in list(state.clusters):
        step_labels(state, cid, rng)
    step_I(state, rng)
    step_sigma(state, rng, config.kappa, config.sigma0_grid_size)
    step_sigma0(state, rng, config.kappa0, config.sigma0_grid_size)
    step_gamma(state, rng, config.gamma_prior, config.gamma_proposal_sd)
    step_hyperparams(state, rng)
    accelerate(state, rng)
    return state


# ---------------------------------------------------------------------------
# predictive density (the assignment-step weight system applied to a
# hypothetical extra observation, with its label summed out)


def _predictive_weights(state, ell, rng):
    """(cluster weights, new-cluster weights) on the linear scale, already
    normalized, for a hypothetical (n_ell + 1)-th observation."""
    sigma0, gamma = state.sigma0, state.gamma
    k = len(state.clusters)
    ids = list(state.clusters)
    if state.I == 1:
        w_exist = [state.clusters[c].size - sigma0 for c in ids]
        w_new = [sigma0 * k]  # both labels pooled: gamma/(1+g) + 1/(1+g) = 1
    else:
        kbar1, nbar1, kbar2, nbar2, _ = state.label_stats()
        if ell == 1:
            base_own = state.n1 + 1 - nbar1 + kbar1 * sigma0
            a_oth = state.n2 - nbar2 + kbar2 * sigma0
        else:
            base_own = state.n2 + 1 - nbar2 + kbar2 * sigma0
            a_oth = state.n1 - nbar1 + kbar1 * sigma0
        # a_own with the hypothetical observation labelled zeta
        a_own = {0: base_own, 1: base_own - 1.0}
        log_j_k = {z: _log_j(state, a_own[z], a_oth, k, rng) for z in (0, 1)}
        w_exist = []
        for cid in ids:
            cl = state.clusters[cid]
            own_only = (cl.n2 == 0) if ell == 1 else (cl.n1 == 0)
            if cl.label == 1 and not own_only:
                w_exist.append(0.0)
                continue
            w_exist.append(
                (cl.size - sigma0) * math.exp(log_j_k[cl.label] - log_j_k[0])
            )
        w_new = [
            gamma
            * sigma0
            * k
            * math.exp(_log_j(state, a_own[0], a_oth, k + 1, rng) - log_j_k[0]),
            sigma0
            * k
            * math.exp(
                _log_j(state, a_own[1] + sigma0, a_oth, k + 1, rng) - log_j_k[0]
            ),
        ]
    total = sum(w_exist) + sum(w_new)
    return ids, [w / total for w in w_exist], [w / total for w in w_new]


def predictive_density(state, ell, grid, rng=None):
    """One-sweep predictive density of a new observation from sample ell,
    evaluated on the grid: existing-cluster weights times the Gaussian
    kernel plus new-cluster weight times the base-measure marginal."""
    rng = rng or np.random.default_rng(0)
    grid = np.asarray(grid, dtype=float)
    ids, w_exist, w_new = _predictive_weights(state, ell, rng)
    out = np.zeros_like(grid)
    for cid, w in zip(ids, w_exist):
        if w == 0.0:
            continue
        cl = state.clusters[cid]
        out += w * np.exp(
            -0.5 * (math.log(2.0 * math.pi * cl.V) + (grid - cl.M) ** 2 / cl.V)
        )
    out += sum(w_new) * np.exp(log_marginal_likelihood(state.base, grid))
    return out


# ---------------------------------------------------------------------------
# chain orchestration


@dataclass
class ChainOutput:
    records: dict
    grid: np.ndarray
    density1: np.ndarray
    density2: np.ndarray
    seed: int
    n_retained: int


CHAIN_COLUMNS = ("iter", "I", "k0", "k1", "k2", "sigma", "sigma0", "gamma", "m", "tau")


def default_density_grid(x1, x2, size=512):
    pooled = np.concatenate([np.asarray(x1, float), np.asarray(x2, float)])
    sd = float(pooled.std())
    lo = float(pooled.min()) - 4.0 * sd
    hi = float(pooled.max()) + 4.0 * sd
    return np.linspace(lo, hi, size)


def initial_state(x1, x2, config, rng):
    """Prior-drawn scalars with one idiosyncratic cluster per sample."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.size == 0 or x2.size == 0:
        raise ValidationError("both samples must be nonempty")
    pooled_mean = float(np.concatenate([x1, x2]).mean())
    a = config.a if config.a is not None else pooled_mean
    tau = 0.5 * config.W / rng.gamma(0.5 * config.w)
    m = a + math.sqrt(config.A) * rng.normal()
    base = NIGBase(config.s0, config.S0, m, tau, a, config.A, config.w, config.W)
    state = GibbsState(
        x1=x1,
        x2=x2,
        assign1=np.zeros(x1.size, dtype=int),
        assign2=np.ones(x2.size, dtype=int),
        clusters={},
        next_id=2,
        I=1,
        sigma=rng.uniform(),
        sigma0=rng.uniform(),
        gamma=config.gamma_prior.draw(rng),
        base=base,
        j_method=config.j_method,
    )
    v1 = sample_cluster_value(base, x1, rng)
    v2 = sample_cluster_value(base, x2, rng)
    state.clusters[0] = _Cluster(x1.size, 0, 1, v1.M, v1.V)
    state.clusters[1] = _Cluster(0, x2.size, 1, v2.M, v2.V)
    return state


def run_chain(data, config):
    """Run the Gibbs sampler; returns per-iteration records for the
    retained sweeps plus per-iteration predictive densities on the grid."""
    x1, x2 = np.asarray(data[0], float), np.asarray(data[1], float)
    rng = np.random.default_rng(config.seed)
    state = initial_state(x1, x2, config, rng)
    grid = (
        np.asarray(config.density_grid, dtype=float)
        if config.density_grid is not None
        else default_density_grid(x1, x2, config.density_grid_size)
    )
    retained = config.iterations - config.burn_in
    records = {name: np.empty(retained, dtype=float) for name in CHAIN_COLUMNS}
    density1 = np.empty((retained, grid.size))
    density2 = np.empty((retained, grid.size))
    row = 0
    for it in range(config.iterations):
        sweep(state, rng, config)
        if it < config.burn_in:
            continue
        k0, k1, k2 = state.counts()
        for name, value in zip(
            CHAIN_COLUMNS,
            (
                it,
                state.I,
                k0,
                k1,
                k2,
                state.sigma,
                state.sigma0,
                state.gamma,
                state.base.m,
                state.base.tau,
            ),
        ):
            records[name][row] = value
        density1[row] = predictive_density(state, 1, grid, rng)
        density2[row] = predictive_density(state, 2, grid, rng)
        row += 1
    for name in ("iter", "I", "k0", "k1", "k2"):
        records[name] = records[name].astype(int)
    return ChainOutput(records, grid, density1, density2, config.seed, retained)


def write_chain_csv(output, path, header_comment=None):
    """One row per retained iteration, deterministic float formatting."""
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(",".join(CHAIN_COLUMNS) + "\n")
        rec = output.records
        for i in range(output.n_retained):
            cells = []
            for name in CHAIN_COLUMNS:
                value = rec[name][i]
                cells.append(str(int(value)) if name in ("iter", "I", "k0", "k1", "k2") else repr(float(value)))
            fh.write(",".join(cells) + "\n")


def read_chain_csv(path):
    from .errors import ParseError

    records = {name: [] for name in CHAIN_COLUMNS}
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    rows = [(i + 1, ln) for i, ln in enumerate(lines) if ln and not ln.startswith("#")]
    if not rows:
        raise ParseError("empty chain file")
    header = rows[0][1].split(",")
    if tuple(header) != CHAIN_COLUMNS:
        raise ParseError(f"unexpected chain header {header}", line=rows[0][0])
    for lineno, ln in rows[1:]:
        cells = ln.split(",")
        if len(cells) != len(CHAIN_COLUMNS):
            raise ParseError(f"expected {len(CHAIN_COLUMNS)} fields", line=lineno)
        try:
            for name, cell in zip(CHAIN_COLUMNS, cells):
                records[name].append(float(cell))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    out = {}
    for name in CHAIN_COLUMNS:
        arr = np.asarray(records[name])
        out[name] = arr.astype(int) if name in ("iter", "I", "k0", "k1", "k2") else arr
    return out


# ---------------------------------------------------------------------------
# forward model simulation and the joint-distribution (Geweke-style) check


def _forward_partition(rng, n1, n2, sigma0, gamma, flag_i, j_method):
    """Exact draw of (cluster sizes, labels) from the partition prior given
    the homogeneity indicator, by sequential seating; cluster tuples are
    (n1_c, n2_c, label)."""
    clusters = []

    def seat(ell):
        m1 = sum(c[0] for c in clusters)
        m2 = sum(c[1] for c in clusters)
        k = len(clusters)
        ids, logw = [], []
        other_empty = (m2 == 0) if ell == 1 else (m1 == 0)
        if flag_i == 1 or other_empty:
            for idx, (c1, c2, _) in enumerate(clusters):
                ids.append((idx, None))
                logw.append(math.log(c1 + c2 - sigma0))
            for z in (0, 1):
                base = math.log(sigma0) + (math.log(k) if k else 0.0) - math.log1p(gamma)
                if z == 0:
                    base += math.log(gamma) if gamma > 0 else -math.inf
                ids.append((-1, z))
                logw.append(base)
        else:
            kbar1 = sum(1 for c in clusters if c[2] and c[0] > 0)
            nbar1 = sum(c[0] for c in clusters if c[2])
            kbar2 = sum(1 for c in clusters if c[2] and c[1] > 0)
            nbar2 = sum(c[1] for c in clusters if c[2])
            if ell == 1:
                base_own = m1 + 1 - nbar1 + kbar1 * sigma0
                a_oth = m2 - nbar2 + kbar2 * sigma0
            else:
                base_own = m2 + 1 - nbar2 + kbar2 * sigma0
                a_oth = m1 - nbar1 + kbar1 * sigma0
            logj = {}

            def log_j_for(z):
                if z not in logj:
                    logj[z] = log_j_integral(
                        sigma0, gamma, base_own - z, a_oth, k, method=j_method
                    )
                return logj[z]

            for idx, (c1, c2, label) in enumerate(clusters):
                own_only = (c2 == 0) if ell == 1 else (c1 == 0)
                if label == 1 and not own_only:
                    continue
                ids.append((idx, None))
                logw.append(math.log(c1 + c2 - sigma0) + log_j_for(label))
            for z in (0, 1):
                lw = (
                    math.log(sigma0)
                    + (math.log(k) if k else 0.0)
                    + log_j_integral(
                        sigma0,
                        gamma,
                        base_own - z + z * sigma0,
                        a_oth,
                        k + 1,
                        method=j_method,
                    )
                )
                if z == 0:
                    lw += math.log(gamma) if gamma > 0 else -math.inf
                ids.append((-1, z))
                logw.append(lw)
        idx, z = ids[_pick(logw, rng)]
        if idx == -1:
            clusters.append([1, 0, z] if ell == 1 else [0, 1, z])
        else:
            clusters[idx][0 if ell == 1 else 1] += 1

    for _ in range(n1):
        seat(1)
    for _ in range(n2):
        seat(2)
    return clusters


def _forward_state(rng, n1, n2, config):
    sigma = rng.uniform()
    sigma0 = rng.uniform()
    gamma = config.gamma_prior.draw(rng)
    flag_i = 1 if rng.uniform() < 1.0 - sigma else 0
    tau = 0.5 * config.W / rng.gamma(0.5 * config.w)
    a = config.a if config.a is not None else 0.0
    m = a + math.sqrt(config.A) * rng.normal()
    base = NIGBase(config.s0, config.S0, m, tau, a, config.A, config.w, config.W)
    layout = _forward_partition(rng, n1, n2, sigma0, gamma, flag_i, config.j_method)
    clusters = {}
    assign1, assign2 = [], []
    for cid, (c1, c2, label) in enumerate(layout):
        v = base.S0 / rng.gamma(base.s0)
        mu = base.m + math.sqrt(base.tau * v) * rng.normal()
        clusters[cid] = _Cluster(c1, c2, label, mu, v)
        assign1.extend([cid] * c1)
        assign2.extend([cid] * c2)
    state = GibbsState(
        x1=np.zeros(n1),
        x2=np.zeros(n2),
        assign1=np.array(assign1, dtype=int),
        assign2=np.array(assign2, dtype=int),
        clusters=clusters,
        next_id=len(layout),
        I=flag_i,
        sigma=sigma,
        sigma0=sigma0,
        gamma=gamma,
        base=base,
        j_method=config.j_method,
    )
    _regenerate_data(state, rng)
    return state


def _regenerate_data(state, rng):
    for j, cid in enumerate(state.assign1):
        cl = state.clusters[int(cid)]
        state.x1[j] = cl.M + math.sqrt(cl.V) * rng.normal()
    for j, cid in enumerate(state.assign2):
        cl = state.clusters[int(cid)]
        state.x2[j] = cl.M + math.sqrt(cl.V) * rng.normal()


_GEWEKE_STATS = ("k", "I", "sigma", "sigma0", "gamma", "m")


def _stat_vector(state):
    return (
        float(len(state.clusters)),
        float(state.I),
        state.sigma,
        state.sigma0,
        state.gamma,
        state.base.m,
    )


def _batch_means_se(series, n_batches=50):
    series = np.asarray(series, dtype=float)
    usable = (series.size // n_batches) * n_batches
    batches = series[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(batches.std(ddof=1) / math.sqrt(n_batches))


@dataclass
class GewekeResult:
    z_scores: dict
    forward_means: dict
    chain_means: dict

    def max_abs_z(self):
        return max(abs(z) for z in self.z_scores.values())


def geweke_joint_test(config, n1=3, n2=3, rounds=100_000, seed=1234,
                      _flip_step_i=False):
    """Joint-distribution sampler check: forward prior draws versus a
    successive-conditional chain that alternates one Gibbs sweep with data
    regeneration.  Returns per-statistic z-scores; |z| < 4 is the expected
    range for a correct sampler at the default round count.

    ``_flip_step_i`` corrupts the indicator update (for harness
    sensitivity checks only).
    """
    rng_f = np.random.default_rng(seed)
    forward = np.empty((rounds, len(_GEWEKE_STATS)))
    for r in range(rounds):
        forward[r] = _stat_vector(_forward_state(rng_f, n1, n2, config))

    rng_c = np.random.default_rng(seed + 1)
    state = _forward_state(rng_c, n1, n2, config)
    chain = np.empty((rounds, len(_GEWEKE_STATS)))
    for r in range(rounds):
        sweep(state, rng_c, config)
        if _flip_step_i:
            state.I = 1 - state.I if state.partition().labels0.count(1) == 0 else state.I
        _regenerate_data(state, rng_c)
        chain[r] = _stat_vector(state)

    z_scores, f_means, c_means = {}, {}, {}
    for i, name in enumerate(_GEWEKE_STATS):
        mf = float(forward[:, i].mean())
        mc = float(chain[:, i].mean())
        se_f = float(forward[:, i].std(ddof=1) / math.sqrt(rounds))
        se_c = _batch_means_se(chain[:, i])
        z_scores[name] = (mf - mc) / math.hypot(se_f, se_c)
        f_means[name] = mf
        c_means[name] = mc
    return GewekeResult(z_scores, f_means, c_means)
