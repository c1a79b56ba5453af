"""Metropolis-within-Gibbs back-fitting sampler for the additive sparse-GP model.

One iteration:

1. redraw the pseudo-inputs of every active component (bottom layer first,
   disjoint across components, uniform over the eligible training points);
2. for each component in id order, draw its pseudo-targets from their
   Gaussian full conditional given the partial residual, then update its
   ``eta`` with a uniform random-walk Metropolis step;
3. draw the noise variance from its inverse-gamma full conditional.

Proposal bandwidths are tuned during burn-in only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import component as comp
from .errors import ConfigError, InvariantViolation, SagpError, SamplerError

log = logging.getLogger(__name__)

PRESETS = ("amplitude_decay", "paper_literal")
# "conditional" includes the pseudo-target prior N(fbar | 0, K_m(eta)) in the
# eta acceptance ratio; "likelihood" uses likelihood x eta prior only.
ETA_TARGETS = ("conditional", "likelihood")
RHO_FIRST_LOG10 = -1.0
RHO_LAST_LOG10 = -50.0


def rho_schedule(n_layers):
    """Per-layer rho, log10-equally spaced from 1e-1 down to 1e-50."""
    if n_layers == 1:
        return (10.0**RHO_FIRST_LOG10,)
    return tuple(float(10.0**e) for e in np.linspace(RHO_FIRST_LOG10, RHO_LAST_LOG10, n_layers))


def _eta_prior_means(n_layers, preset):
    if preset == "amplitude_decay":
        return [10.0**layer for layer in range(n_layers)]
    if preset == "paper_literal":
        if n_layers == 3:
            return [1e-1, 1e-10, 1e-50]
        return list(rho_schedule(n_layers))
    raise ConfigError(f"unknown prior preset {preset!r}; choose one of {', '.join(PRESETS)}")


@dataclass(frozen=True)
class Priors:
    """Inverse-gamma priors on the noise variance and per-layer eta; rho per layer."""

    alpha_eps: float
    beta_eps: float
    alpha_eta: tuple
    beta_eta: tuple
    rho: tuple
    preset: str = "custom"

    @classmethod
    def default(cls, n_layers, preset="amplitude_decay", alpha_eps=1.0, beta_eps=1.0, alpha_eta=2.0):
        means = _eta_prior_means(n_layers, preset)
        return cls(
            alpha_eps=float(alpha_eps),
            beta_eps=float(beta_eps),
            alpha_eta=(float(alpha_eta),) * n_layers,
            beta_eta=tuple(mu * (alpha_eta - 1.0) for mu in means),
            rho=rho_schedule(n_layers),
            preset=preset,
        )

    @property
    def n_layers(self):
        return len(self.rho)

    def problems(self):
        out = []
        if not self.alpha_eps > 0 or not self.beta_eps > 0:
            out.append("noise prior shape and scale must be > 0")
        if not (len(self.alpha_eta) == len(self.beta_eta) == len(self.rho)):
            out.append("per-layer prior lists must have equal length")
        if any(not a > 0 for a in self.alpha_eta) or any(not b > 0 for b in self.beta_eta):
            out.append("eta prior shapes and scales must be > 0")
        if any(not 0.0 < r < 1.0 for r in self.rho):
            out.append("rho values must lie in (0, 1)")
        if any(r2 >= r1 for r1, r2 in zip(self.rho, self.rho[1:])):
            out.append("rho schedule must be strictly decreasing")
        return out

    def eta_init(self, layer):
        a, b = self.alpha_eta[layer - 1], self.beta_eta[layer - 1]
        return b / (a - 1.0) if a > 1.0 else b / (a + 1.0)


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 3000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    init_bandwidth: float | None = None
    adapt_every: int | None = None
    target_band: tuple = (0.39, 0.49)
    resample_every: int = 1
    reanchor: bool = True
    eta_target: str = "conditional"
    update_eta: bool = True
    update_sigma2: bool = True
    init_sigma2: float = 1.0
    check_invariants: bool = True

    def problems(self):
        out = []
        if self.n_iter < 1 or self.thin < 1 or self.burn_in < 0:
            out.append("n_iter and thin must be >= 1, burn_in >= 0")
        if self.burn_in >= self.n_iter:
            out.append(f"burn_in ({self.burn_in}) must be < n_iter ({self.n_iter})")
        if self.adapt_every is not None and self.adapt_every < 1:
            out.append("adapt_every must be >= 1")
        if self.init_bandwidth is not None and not self.init_bandwidth > 0:
            out.append("init_bandwidth must be > 0")
        lo, hi = self.target_band
        if not 0.0 <= lo < hi <= 1.0:
            out.append("target_band must satisfy 0 <= low < high <= 1")
        if self.resample_every < 1:
            out.append("resample_every must be >= 1")
        if not self.init_sigma2 > 0:
            out.append("init_sigma2 must be > 0")
        if self.eta_target not in ETA_TARGETS:
            out.append(f"eta_target must be one of {', '.join(ETA_TARGETS)}")
        return out

    @property
    def adapt_period(self):
        if self.adapt_every is not None:
            return self.adapt_every
        return max(1, self.burn_in // 20)

    @property
    def n_kept(self):
        return len(range(self.burn_in, self.n_iter, self.thin))


@dataclass
class ModelState:
    """Mutable chain state. ``fitted`` and ``lambda_total`` are running sums."""

    states: list
    caches: list
    sigma2: float
    bandwidth: np.ndarray
    window_accept: np.ndarray
    window_total: np.ndarray
    accept_total: np.ndarray = None
    propose_total: np.ndarray = None
    fitted: np.ndarray = None
    lambda_total: np.ndarray = None

    def __post_init__(self):
        n_comp = len(self.states)
        if self.accept_total is None:
            self.accept_total = np.zeros(n_comp, dtype=int)
            self.propose_total = np.zeros(n_comp, dtype=int)
        self.recompute_totals()

    def recompute_totals(self):
        n = self.caches[0].contribution.shape[0]
        self.fitted = np.zeros(n)
        self.lambda_total = np.zeros(n)
        for c in self.caches:
            self.fitted += c.contribution
            self.lambda_total += c.lambda_diag


@dataclass
class PosteriorSamples:
    """Kept draws; arrays are indexed ``[draw, component, ...]``."""

    component_ids: list
    log_rho: list
    iterations: np.ndarray
    sigma2: np.ndarray
    eta: np.ndarray
    pseudo_targets: np.ndarray
    pseudo_idx: np.ndarray
    acceptance: np.ndarray = field(default=None)
    bandwidth: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.iterations)

    def draw(self, k):
        return self.sigma2[k], self.eta[k], self.pseudo_targets[k], self.pseudo_idx[k]


def invgamma_logpdf(x, alpha, beta):
    if x <= 0.0:
        return -math.inf
    return alpha * math.log(beta) - math.lgamma(alpha) - (alpha + 1.0) * math.log(x) - beta / x


def draw_invgamma(alpha, beta, rng):
    return beta / rng.gamma(alpha)


def sample_pseudo_inputs(scheme, X, rng, membership=None):
    """Disjoint pseudo-input index sets for all active components.

    Components are visited from the highest id (deepest layer) down; each
    takes ``m`` points uniformly without replacement among those in its box
    that no earlier component has taken.
    """
    ids = scheme.active_ids
    m = scheme.m_required
    if membership is None:
        membership = dict(zip(ids, scheme.membership(X, ids)))
    available = np.ones(np.asarray(X).shape[0], dtype=bool)
    out = {}
    for j in reversed(ids):
        cand = np.flatnonzero(membership[j] & available)
        if cand.size < m:
            raise InvariantViolation(f"component {j} has {cand.size} eligible points, needs {m}; scheme not pruned?")
        pick = np.sort(rng.choice(cand, size=m, replace=False))
        available[pick] = False
        out[j] = pick
    return out


def adapt_bandwidth(rate, bandwidth, band=(0.39, 0.49), target=0.44, floor=1e-12, cap=1e3):
    """Multiplicative bandwidth update, a no-op when ``rate`` is inside the band."""
    lo, hi = band
    if lo < rate <= hi:
        return bandwidth
    return float(min(max(bandwidth * rate / target, floor), cap))


def draw_sigma2(y, fitted, alpha, beta, rng):
    """One draw from InverseGamma(alpha + n/2, beta + RSS/2)."""
    r = np.asarray(y) - np.asarray(fitted)
    return draw_invgamma(alpha + 0.5 * len(r), beta + 0.5 * float(r @ r), rng)


def gibbs_sigma2(model, y, priors, rng):
    model.sigma2 = draw_sigma2(y, model.fitted, priors.alpha_eps, priors.beta_eps, rng)
    return model


def update_pseudo_targets(model, j, y, rng, factor_override=None):
    """Gibbs draw of component ``j``'s pseudo-targets on its partial residual."""
    cache = model.caches[j]
    residual = y - (model.fitted - cache.contribution)
    fc = comp.full_conditional(cache, residual, model.sigma2)
    factor = fc.factor if factor_override is None else factor_override
    fbar = comp.draw_gaussian(fc.mean, factor, rng)
    new_cache = comp.refresh_targets(cache, fbar)
    model.fitted += new_cache.contribution - cache.contribution
    model.states[j] = model.states[j].with_targets(fbar)
    model.caches[j] = new_cache
    return fc


def gibbs_pseudo_targets(model, y, rng):
    for j in range(len(model.states)):
        update_pseudo_targets(model, j, y, rng)
    return model


def eta_log_target(model, j, y, priors, layer, cache=None, lambda_total=None, target="conditional"):
    """Log target density of eta_j, up to a constant.

    Sum of the model log-likelihood, the inverse-gamma eta prior and, for
    ``target="conditional"``, the pseudo-target prior N(fbar | 0, K_m), all
    evaluated at ``cache.eta``.
    """
    cache = model.caches[j] if cache is None else cache
    lam = model.lambda_total if lambda_total is None else lambda_total
    ll = comp.gaussian_diag_logpdf(y, model.fitted, model.sigma2 + lam)
    lp = comp.pseudo_target_log_prior(model.states[j], cache) if target == "conditional" else 0.0
    return ll + lp + invgamma_logpdf(cache.eta, priors.alpha_eta[layer - 1], priors.beta_eta[layer - 1])


@dataclass
class MhResult:
    accepted: bool
    proposal: float
    log_ratio: float


def mh_eta_step(model, j, y, priors, layer, rng, proposal=None, target="conditional"):
    """Uniform random-walk Metropolis update of eta_j; mutates ``model``.

    Nonpositive proposals have zero prior density and are rejected without
    evaluating the likelihood.
    """
    cache = model.caches[j]
    eta = cache.eta
    if proposal is None:
        bw = model.bandwidth[j]
        proposal = eta + rng.uniform(-bw, bw)
    model.window_total[j] += 1
    model.propose_total[j] += 1
    if proposal <= 0.0:
        return MhResult(False, proposal, -math.inf)

    new_cache = cache.with_eta(proposal)
    new_lam = model.lambda_total - cache.lambda_diag + new_cache.lambda_diag
    log_ratio = eta_log_target(model, j, y, priors, layer, new_cache, new_lam, target) - eta_log_target(
        model, j, y, priors, layer, target=target
    )
    accepted = log_ratio >= 0.0 or math.log(rng.uniform()) <= log_ratio
    if accepted:
        model.caches[j] = new_cache
        model.lambda_total = new_lam
        model.states[j] = replace(model.states[j], eta=float(proposal))
        model.window_accept[j] += 1
        model.accept_total[j] += 1
    return MhResult(accepted, proposal, log_ratio)


def resample_pseudo_inputs(model, scheme, X, rng, membership, box_index, reanchor=True):
    draws = sample_pseudo_inputs(scheme, X, rng, membership)
    for j, st in enumerate(model.states):
        idx = draws[st.component_id]
        fbar = comp.reanchor_targets(st, X, idx) if reanchor else st.pseudo_targets
        st = replace(st, pseudo_idx=idx, pseudo_targets=np.asarray(fbar, dtype=float))
        model.states[j] = st
        model.caches[j] = comp.build_cache(st, X, box_index[st.component_id])
    model.recompute_totals()


def check_invariants(model, X):
    """Raise InvariantViolation unless the chain state is internally consistent."""
    seen = np.concatenate([st.pseudo_idx for st in model.states])
    if len(np.unique(seen)) != len(seen):
        raise InvariantViolation("pseudo-input index sets overlap")
    for st, c in zip(model.states, model.caches):
        if not np.all(st.box.contains(X[st.pseudo_idx])):
            raise InvariantViolation(f"component {st.component_id}: pseudo-input outside box")
        if np.any(c.lambda_diag < 0.0):
            raise InvariantViolation(f"component {st.component_id}: negative Lambda entry")
        if not st.eta > 0.0:
            raise InvariantViolation(f"component {st.component_id}: eta <= 0")
    if not model.sigma2 > 0.0:
        raise InvariantViolation("sigma2_eps <= 0")


def init_model(X, scheme, priors, config, rng):
    ids = scheme.active_ids
    membership = dict(zip(ids, scheme.membership(X, ids)))
    box_index = {j: np.flatnonzero(membership[j]) for j in ids}
    draws = sample_pseudo_inputs(scheme, X, rng, membership)
    states, caches, bws = [], [], []
    for j in ids:
        layer = scheme[j].layer
        eta0 = priors.eta_init(layer)
        st = comp.ComponentState(
            component_id=j,
            box=scheme[j].box,
            pseudo_idx=draws[j],
            pseudo_targets=np.zeros(scheme.m_required),
            eta=eta0,
            log_rho=math.log(priors.rho[layer - 1]),
        )
        states.append(st)
        caches.append(comp.build_cache(st, X, box_index[j]))
        bws.append(config.init_bandwidth if config.init_bandwidth is not None else 0.1 * eta0)
    n_comp = len(ids)
    model = ModelState(
        states=states,
        caches=caches,
        sigma2=float(config.init_sigma2),
        bandwidth=np.array(bws, dtype=float),
        window_accept=np.zeros(n_comp, dtype=int),
        window_total=np.zeros(n_comp, dtype=int),
    )
    return model, membership, box_index


def validate(scheme, priors, config):
    problems = priors.problems() + config.problems()
    if priors.n_layers < scheme.n_layers:
        problems.append(f"priors cover {priors.n_layers} layers, scheme has {scheme.n_layers}")
    if problems:
        raise ConfigError(problems)


def run_mcmc(data, scheme, priors, config, callback=None):
    """Run one chain and return the thinned post-burn-in draws.

    ``data`` needs standardized ``X`` (in [0, 1]^d) and ``y`` attributes.
    ``callback(iteration, model)`` is invoked after every iteration.
    """
    validate(scheme, priors, config)
    X = np.asarray(data.X, dtype=float)
    y = np.asarray(data.y, dtype=float)
    rng = np.random.default_rng(config.seed)
    model, membership, box_index = init_model(X, scheme, priors, config, rng)
    layers = [scheme[st.component_id].layer for st in model.states]
    n_comp = len(model.states)
    m = scheme.m_required
    n_keep = config.n_kept
    out = PosteriorSamples(
        component_ids=[st.component_id for st in model.states],
        log_rho=[st.log_rho for st in model.states],
        iterations=np.zeros(n_keep, dtype=int),
        sigma2=np.zeros(n_keep),
        eta=np.zeros((n_keep, n_comp)),
        pseudo_targets=np.zeros((n_keep, n_comp, m)),
        pseudo_idx=np.zeros((n_keep, n_comp, m), dtype=int),
    )
    period = config.adapt_period
    band = tuple(config.target_band)
    kept = 0
    for it in range(config.n_iter):
        try:
            if it % config.resample_every == 0:
                resample_pseudo_inputs(model, scheme, X, rng, membership, box_index, config.reanchor)
            for j in range(n_comp):
                update_pseudo_targets(model, j, y, rng)
                if config.update_eta:
                    mh_eta_step(model, j, y, priors, layers[j], rng, target=config.eta_target)
            if config.update_sigma2:
                gibbs_sigma2(model, y, priors, rng)
            if config.check_invariants:
                check_invariants(model, X)
        except InvariantViolation as exc:
            raise SamplerError(it, exc) from exc
        except (SagpError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise SamplerError(it, exc) from exc

        if it < config.burn_in and (it + 1) % period == 0:
            for j in range(n_comp):
                if model.window_total[j]:
                    rate = model.window_accept[j] / model.window_total[j]
                    model.bandwidth[j] = adapt_bandwidth(rate, model.bandwidth[j], band)
            model.window_accept[:] = 0
            model.window_total[:] = 0
        if it == config.burn_in - 1:
            model.accept_total[:] = 0
            model.propose_total[:] = 0

        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            out.iterations[kept] = it
            out.sigma2[kept] = model.sigma2
            for j, st in enumerate(model.states):
                out.eta[kept, j] = st.eta
                out.pseudo_targets[kept, j] = st.pseudo_targets
                out.pseudo_idx[kept, j] = st.pseudo_idx
            kept += 1
        if callback is not None:
            callback(it, model)

    with np.errstate(invalid="ignore", divide="ignore"):
        out.acceptance = np.where(
            model.propose_total > 0, model.accept_total / np.maximum(model.propose_total, 1), np.nan
        )
    out.bandwidth = model.bandwidth.copy()
    log.debug("acceptance rates after burn-in: %s", out.acceptance)
    return out


def config_dict(priors, config):
    """Plain-dict view of priors and sampler settings for manifests."""
    return {"priors": asdict(priors), "mcmc": asdict(config)}
