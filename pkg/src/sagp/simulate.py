"""Synthetic nonstationary benchmark and the batch study harness."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baseline import dense_gp_predict, fit_dense_gp
from .data import Table, standardize
from .errors import InvalidInputError, SagpError
from .inference import coverage, fit, mean_interval_score, mse, predict
from .sampler import McmcConfig, Priors

log = logging.getLogger(__name__)

SPLITS = ("random", "interval")
STUDY_CONFIGS = ((5, 4), (10, 3), (15, 3))
METRICS = ("mse", "coverage", "interval_score")


def true_mean(x):
    """Nonstationary test function on [0, 1]."""
    x = np.asarray(x, dtype=float)
    return (
        -5.0
        - 6.0 * x**3
        + 30.0 * (x - 0.5) ** 2
        + 3.0 * np.exp(2.0 * x - 1.0)
        + 3.0 * x**2 * np.sin(12.0 * np.pi * x)
        + np.cos(6.0 * np.pi * x)
    )


@dataclass(frozen=True)
class SimScenario:
    n: int = 200
    noise_var: float = 0.1
    split: str = "random"
    train_size: int = 150
    seed: int = 0

    def problems(self):
        out = []
        if self.split not in SPLITS:
            out.append(f"split must be one of {', '.join(SPLITS)}, got {self.split!r}")
        if not 0 < self.train_size < self.n:
            out.append(f"train_size must lie in (0, n={self.n}), got {self.train_size}")
        # zero noise is accepted for noiseless sanity fits
        if not self.noise_var >= 0.0:
            out.append(f"noise_var must be >= 0, got {self.noise_var}")
        return out


def generate(scenario):
    """Draw one dataset and split it; returns ``(train, test)`` tables."""
    problems = scenario.problems()
    if problems:
        raise InvalidInputError("; ".join(problems))
    rng = np.random.default_rng(scenario.seed)
    x = rng.uniform(0.0, 1.0, scenario.n)
    y = true_mean(x) + rng.normal(0.0, np.sqrt(scenario.noise_var), scenario.n)
    n_test = scenario.n - scenario.train_size
    if scenario.split == "random":
        test = np.sort(rng.choice(scenario.n, size=n_test, replace=False))
    else:
        test = np.sort(np.argsort(np.abs(x - 0.5), kind="stable")[:n_test])
    train = np.setdiff1d(np.arange(scenario.n), test)
    return Table(x[train, None], y[train]), Table(x[test, None], y[test])


def config_name(m, n_layers):
    return f"m{m}_L{n_layers}"


def _metrics(y, mean, lower, upper, alpha):
    return {
        "mse": mse(y, mean),
        "coverage": coverage(lower, upper, y),
        "interval_score": mean_interval_score(lower, upper, y, alpha),
    }


def _batch_job(args):
    batch, scenario, configs, mcmc, preset, alpha, include_dense = args
    rows = []
    train, test = generate(scenario)
    data = standardize(train)
    for m, n_layers in configs:
        name = config_name(m, n_layers)
        try:
            scheme, samples = fit(data, m, n_layers, Priors.default(n_layers, preset), mcmc)
            with warnings.catch_warnings():
                # test points beyond the training range are expected here
                warnings.simplefilter("ignore", UserWarning)
                pred = predict(samples, scheme, data, test.X, alpha, seed=mcmc.seed)
            vals = _metrics(test.y, pred.mean, pred.lower, pred.upper, alpha)
        except SagpError as exc:
            log.warning("batch %d config %s failed: %s", batch, name, exc)
            vals = {k: float("nan") for k in METRICS}
            rows.append((batch, name, scenario.split, "error", str(exc).replace(",", ";")))
        rows.extend((batch, name, scenario.split, k, vals[k]) for k in METRICS)
    if include_dense:
        try:
            dfit = fit_dense_gp(data.X, data.y)
            U = np.clip(data.transform.to_unit(test.X, clip=False), 0.0, 1.0)
            mu, lo, hi = dense_gp_predict(dfit, data.X, data.y, U, alpha)
            tf = data.transform
            vals = _metrics(test.y, tf.y_from_std(mu), tf.y_from_std(lo), tf.y_from_std(hi), alpha)
        except SagpError as exc:
            log.warning("batch %d dense GP failed: %s", batch, exc)
            vals = {k: float("nan") for k in METRICS}
        rows.extend((batch, "dense_gp", scenario.split, k, vals[k]) for k in METRICS)
    return rows


@dataclass
class StudyResult:
    """Long-format rows ``(batch, config, scenario, metric, value)``."""

    rows: list

    def values(self, config, metric):
        return np.array([r[4] for r in self.rows if r[1] == config and r[3] == metric], dtype=float)

    def summary(self):
        """Median and quartiles per (config, metric), ignoring failed batches."""
        out = []
        keys = sorted({(r[1], r[3]) for r in self.rows if r[3] in METRICS})
        for config, metric in keys:
            v = self.values(config, metric)
            v = v[np.isfinite(v)]
            q = np.quantile(v, [0.25, 0.5, 0.75]) if v.size else [np.nan] * 3
            out.append((config, metric, int(v.size), float(q[0]), float(q[1]), float(q[2])))
        return out


def run_study(
    batches=20,
    configs=STUDY_CONFIGS,
    scenario=None,
    mcmc=None,
    preset="amplitude_decay",
    alpha=0.05,
    include_dense=False,
    seed=0,
    jobs=1,
):
    """Fit every config on ``batches`` independent datasets and score the test sets.

    ``scenario`` defaults to the random split and ``mcmc`` to 2000 iterations
    with 1000 burn-in. Batch ``b`` uses data and chain seeds spawned from ``seed``, so results do
    not depend on ``jobs``. A failing fit yields NaN metrics plus an
    ``error`` row and the study continues.
    """
    if batches < 1:
        raise InvalidInputError(f"batches must be >= 1, got {batches}")
    scenario = SimScenario() if scenario is None else scenario
    mcmc = McmcConfig(n_iter=2000, burn_in=1000) if mcmc is None else mcmc
    children = np.random.SeedSequence(seed).generate_state(2 * batches)
    args = []
    for b in range(batches):
        sc = replace(scenario, seed=int(children[2 * b]))
        cfg = replace(mcmc, seed=int(children[2 * b + 1]))
        args.append((b, sc, tuple(configs), cfg, preset, alpha, include_dense))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_batch_job, args))
    else:
        parts = [_batch_job(a) for a in args]
    return StudyResult([row for part in parts for row in part])
