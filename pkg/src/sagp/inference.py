"""Posterior prediction, scoring rules and cross-validated layer selection."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .component import ComponentState, predict_terms
from .errors import DatasetTooSmallError, FoldInfeasibleError, InvalidInputError
from .partition import build_full_rp, check_unit_points, prune
from .sampler import Priors, run_mcmc

log = logging.getLogger(__name__)

SATURATION = 2**63 - 1


@dataclass
class PredictionResult:
    """Predictive summaries in original response units.

    ``per_component_mean`` holds the across-draw mean of each component's
    contribution (rows follow ``component_ids``), scaled to response units
    but not shifted, so ``offset + per_component_mean.sum(0) == mean``.
    """

    locations: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    component_ids: list
    per_component_mean: np.ndarray
    offset: float


def _component_draw_terms(samples, data, X_unit, scheme):
    """Per-draw, per-component conditional means and variances (standardized)."""
    n_draw = len(samples)
    n_comp = len(samples.component_ids)
    means = np.zeros((n_draw, n_comp, X_unit.shape[0]))
    varis = np.zeros_like(means)
    for j, cid in enumerate(samples.component_ids):
        comp = scheme[cid]
        inside = comp.box.contains(X_unit)
        if not np.any(inside):
            continue
        log_rho = samples.log_rho[j]
        for k in range(n_draw):
            st = ComponentState(
                component_id=cid,
                box=comp.box,
                pseudo_idx=samples.pseudo_idx[k, j],
                pseudo_targets=samples.pseudo_targets[k, j],
                eta=float(samples.eta[k, j]),
                log_rho=log_rho,
            )
            mu, var = predict_terms(st, data.X[st.pseudo_idx], X_unit[inside])
            means[k, j, inside] = mu
            varis[k, j, inside] = var
    return means, varis


def predict_unit(samples, scheme, data, X_unit, alpha=0.05, seed=0):
    """Predict at locations already mapped into the unit cube.

    Each posterior draw contributes one predictive y-draw per location, with
    variance equal to the summed component conditional variances plus that
    draw's noise variance. The point prediction averages the conditional
    means; interval bounds are empirical quantiles of the y-draws.
    """
    if len(samples) == 0:
        raise InvalidInputError("no posterior samples to predict from")
    if not 0.0 < alpha <= 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1], got {alpha}")
    X_unit = check_unit_points(X_unit, scheme.d)
    means, varis = _component_draw_terms(samples, data, X_unit, scheme)
    total = means.sum(axis=1)
    var = varis.sum(axis=1) + samples.sigma2[:, None]
    rng = np.random.default_rng(seed)
    y_draws = total + np.sqrt(var) * rng.standard_normal(total.shape)
    lo, hi = np.quantile(y_draws, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0)
    tf = data.transform
    per_comp = means.mean(axis=0) * tf.y_sd
    return PredictionResult(
        locations=tf.from_unit(X_unit),
        mean=tf.y_from_std(total.mean(axis=0)),
        lower=tf.y_from_std(lo),
        upper=tf.y_from_std(hi),
        alpha=float(alpha),
        component_ids=list(samples.component_ids),
        per_component_mean=per_comp,
        offset=tf.y_mean,
    )


def predict(samples, scheme, data, x_stars, alpha=0.05, seed=0):
    """Predict at locations given in original input units.

    Locations outside the training range are clipped into the unit cube
    with a warning.
    """
    X_unit = data.transform.to_unit(x_stars)
    return predict_unit(samples, scheme, data, X_unit, alpha, seed)


def _check_pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0:
        raise InvalidInputError("empty input")
    if a.shape != b.shape:
        raise InvalidInputError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def _check_triple(lower, upper, y):
    lower, upper = _check_pair(lower, upper)
    _, y = _check_pair(lower, y)
    return lower, upper, y


def mse(y_true, y_pred):
    y_true, y_pred = _check_pair(y_true, y_pred)
    return float(np.mean((y_true - y_pred) ** 2))


def interval_scores(lower, upper, y, alpha):
    """Pointwise interval score: width plus 2/alpha times any miss distance."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    y = np.asarray(y, dtype=float)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    if np.any(lower > upper):
        raise InvalidInputError("interval with lower > upper")
    below = np.where(y < lower, lower - y, 0.0)
    above = np.where(y > upper, y - upper, 0.0)
    return (upper - lower) + (2.0 / alpha) * (below + above)


def interval_score(lower, upper, y, alpha):
    """Interval score of a single interval."""
    return float(interval_scores(lower, upper, y, alpha))


def mean_interval_score(lower, upper, y, alpha):
    return float(np.mean(interval_scores(*_check_triple(lower, upper, y), alpha)))


def coverage(lower, upper, y):
    lower, upper, y = _check_triple(lower, upper, y)
    return float(np.mean((lower <= y) & (y <= upper)))


def complexity_estimate(d, branching, n_layers, n, m):
    """Unit-operation count sum_l prod_i b_i^(l-1) * n * m^2, saturating at 2^63 - 1."""
    b = (int(branching),) * d if np.isscalar(branching) else tuple(int(v) for v in branching)
    if len(b) != d or any(v < 2 for v in b) or n_layers < 1 or n < 1 or m < 1:
        raise InvalidInputError("invalid scheme parameters for the complexity estimate")
    per_layer = 1
    total = 0
    for _ in range(n_layers):
        total += per_layer
        per_layer *= int(np.prod(b, dtype=object))
        if total * n * m * m >= SATURATION:
            return SATURATION
    return min(total * n * m * m, SATURATION)


def fit(data, m, n_layers, priors, config, branching=2):
    """Build and prune a scheme on ``data`` and run one chain."""
    scheme = prune(build_full_rp(data.d, branching, n_layers, m), data.X)
    return scheme, run_mcmc(data, scheme, priors, config)


@dataclass
class CvReport:
    layers: list
    mse_mean: np.ndarray
    mse_se: np.ndarray
    fold_mse: np.ndarray
    selected: int
    one_se: bool

    def rows(self):
        """One row per candidate layer count."""
        return [
            {"L": L, "mse_mean": float(mu), "mse_se": float(se), "selected": int(L == self.selected)}
            for L, mu, se in zip(self.layers, self.mse_mean, self.mse_se)
        ]


def make_folds(n, n_folds, seed):
    """Seeded random partition of ``range(n)`` into near-equal folds."""
    if not 2 <= n_folds <= n:
        raise InvalidInputError(f"need 2 <= folds <= n, got {n_folds} folds for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, n_folds)]


def select_layers(layers, mse_mean, mse_se, one_se=False):
    """Argmin of the CV curve, optionally the smallest L within one SE of it.

    Ties go to the smaller L.
    """
    order = np.argsort(layers, kind="stable")
    layers = np.asarray(layers)[order]
    mse_mean = np.asarray(mse_mean, dtype=float)[order]
    mse_se = np.asarray(mse_se, dtype=float)[order]
    best = int(np.argmin(mse_mean))
    if one_se:
        limit = mse_mean[best] + mse_se[best]
        best = int(np.flatnonzero(mse_mean <= limit)[0])
    return int(layers[best])


def _fold_job(args):
    data, train_idx, test_idx, fold, m, n_layers, priors, config, branching = args
    train = data.subset(train_idx)
    try:
        scheme = prune(build_full_rp(data.d, branching, n_layers, m), train.X)
    except DatasetTooSmallError as exc:
        raise FoldInfeasibleError(fold, str(exc)) from exc
    samples = run_mcmc(train, scheme, priors, config)
    res = predict_unit(samples, scheme, train, data.X[test_idx], seed=config.seed)
    return mse(data.transform.y_from_std(data.y[test_idx]), res.mean)


def cv_select_layers(
    data,
    m,
    layer_candidates,
    config,
    priors=None,
    preset="amplitude_decay",
    n_folds=10,
    seed=0,
    one_se=False,
    branching=2,
    jobs=1,
):
    """K-fold cross-validation of the held-out MSE for each candidate L.

    ``priors`` may be a callable mapping L to a Priors instance; by default
    the ``preset`` priors are used. Fold chains get seeds derived from
    ``config.seed`` so that every fit is reproducible on its own.
    """
    layer_candidates = sorted(int(L) for L in layer_candidates)
    if not layer_candidates:
        raise InvalidInputError("no candidate layer counts")
    folds = make_folds(data.n, n_folds, seed)
    seeds = np.random.SeedSequence(config.seed).generate_state(len(layer_candidates) * n_folds)
    jobs_args = []
    for a, L in enumerate(layer_candidates):
        pri = priors(L) if callable(priors) else Priors.default(L, preset)
        for f, test_idx in enumerate(folds):
            train_idx = np.setdiff1d(np.arange(data.n), test_idx)
            cfg = replace(config, seed=int(seeds[a * n_folds + f]))
            jobs_args.append((data, train_idx, test_idx, f, m, L, pri, cfg, branching))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fold_job, jobs_args))
    else:
        results = [_fold_job(a) for a in jobs_args]
    fold_mse = np.array(results).reshape(len(layer_candidates), n_folds)
    mean = fold_mse.mean(axis=1)
    se = fold_mse.std(axis=1, ddof=1) / np.sqrt(n_folds)
    chosen = select_layers(layer_candidates, mean, se, one_se)
    return CvReport(layer_candidates, mean, se, fold_mse, chosen, one_se)
