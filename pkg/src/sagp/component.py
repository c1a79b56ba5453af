"""Closed-form sparse-GP algebra for one additive component.

Each component j owns ``m`` pseudo-inputs (indices into the training set),
a vector of pseudo-targets ``fbar`` and a kernel restricted to its box. Only
training points inside the box have nonzero cross-covariance, so all
n-sized work is done on that subset and scattered back into length-n
vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidInputError
from .kernel import Box, KernelParams, PsdFactor, chol_jitter, cov_matrix

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ComponentState:
    component_id: int
    box: Box
    pseudo_idx: np.ndarray
    pseudo_targets: np.ndarray
    eta: float
    log_rho: float

    @property
    def params(self):
        return KernelParams(self.log_rho, self.eta)

    @property
    def m(self):
        return len(self.pseudo_idx)

    def with_targets(self, fbar):
        return replace(self, pseudo_targets=np.asarray(fbar, dtype=float))


@dataclass
class ComponentCache:
    """Quantities shared by the pseudo-target and eta updates of a component.

    ``box_idx`` are the training points inside the box; ``cross`` holds the
    rows of K_nm for those points. ``lambda_diag`` and ``contribution`` are
    full length-n vectors, zero outside the box.
    """

    eta: float
    box_idx: np.ndarray
    k_m: np.ndarray
    chol: PsdFactor
    cross: np.ndarray
    weights: np.ndarray
    lambda_diag: np.ndarray
    contribution: np.ndarray

    def with_eta(self, eta):
        """Cache for the same pseudo-inputs and targets under a new eta.

        Every covariance scales by ``old / new``; the fitted contribution is
        invariant because K_nm and K_m scale together.
        """
        s = self.eta / eta
        return ComponentCache(
            eta=eta,
            box_idx=self.box_idx,
            k_m=self.k_m * s,
            chol=self.chol.scaled(s),
            cross=self.cross * s,
            weights=self.weights / s,
            lambda_diag=self.lambda_diag * s,
            contribution=self.contribution,
        )


def box_members(state, X):
    return np.flatnonzero(state.box.contains(X))


def build_cache(state, X, box_idx=None):
    """Factor K_m and form K_nm, the Lambda diagonal and the contribution."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if box_idx is None:
        box_idx = box_members(state, X)
    params = state.params
    pseudo_X = X[state.pseudo_idx]
    if not np.all(state.box.contains(pseudo_X)):
        raise InvalidInputError(f"component {state.component_id}: pseudo-input outside its box")
    k_m = cov_matrix(pseudo_X, pseudo_X, params)
    chol = chol_jitter(k_m)
    cross = cov_matrix(X[box_idx], pseudo_X, params)
    weights = chol.solve(state.pseudo_targets)

    v = chol.half_solve(cross.T)
    lam = np.zeros(n)
    lam[box_idx] = np.maximum(1.0 / state.eta - np.sum(v * v, axis=0), 0.0)
    contrib = np.zeros(n)
    contrib[box_idx] = cross @ weights
    return ComponentCache(state.eta, box_idx, k_m, chol, cross, weights, lam, contrib)


def refresh_targets(cache, fbar):
    """Cache after a pseudo-target update; only weights and contribution change."""
    weights = cache.chol.solve(fbar)
    contrib = np.zeros_like(cache.contribution)
    contrib[cache.box_idx] = cache.cross @ weights
    return replace(cache, weights=weights, contribution=contrib)


def lambda_diag(state, X):
    """Diagonal K_ii - k_i' K_m^{-1} k_i, zero outside the component box."""
    return build_cache(state, X).lambda_diag


def contribution(state, X):
    """Fitted contribution K_nm K_m^{-1} fbar at the training inputs."""
    return build_cache(state, X).contribution


def model_log_likelihood(y, caches, sigma2_eps):
    """Log density of y under N(sum of contributions, s2 I + sum of Lambdas)."""
    y = np.asarray(y, dtype=float)
    mean = np.zeros_like(y)
    var = np.full_like(y, sigma2_eps)
    for c in caches:
        mean += c.contribution
        var += c.lambda_diag
    return gaussian_diag_logpdf(y, mean, var)


def gaussian_diag_logpdf(y, mean, var):
    if np.any(var <= 0.0):
        raise ArithmeticError("nonpositive variance in diagonal Gaussian")
    r = y - mean
    return -0.5 * float(np.sum(r * r / var + np.log(var)) + len(y) * LOG_2PI)


def pseudo_target_log_prior(state, cache):
    """log N(fbar | 0, K_m) with the factor of the (jittered) K_m."""
    z = cache.chol.half_solve(state.pseudo_targets)
    return -0.5 * float(z @ z) - 0.5 * cache.chol.logdet() - 0.5 * state.m * LOG_2PI


@dataclass
class FullConditional:
    """Gaussian full conditional of a pseudo-target vector.

    ``factor`` satisfies ``factor @ factor.T == cov`` and is what the
    sampler uses to draw.
    """

    mean: np.ndarray
    cov: np.ndarray
    factor: np.ndarray
    q_chol: PsdFactor


def full_conditional(cache, residual, sigma2_eps):
    """Moments of fbar_j given the partial residual r_j.

    Mean = K_m Q^{-1} K_mn D^{-1} r and Var = K_m Q^{-1} K_m with
    D = Lambda + s2 I and Q = K_m + K_mn D^{-1} K_nm.
    """
    idx = cache.box_idx
    d_inv = 1.0 / (cache.lambda_diag[idx] + sigma2_eps)
    scaled = cache.cross * d_inv[:, None]
    q = cache.k_m + cache.cross.T @ scaled
    q_chol = chol_jitter(0.5 * (q + q.T))
    b = scaled.T @ np.asarray(residual, dtype=float)[idx]
    a = solve_triangular(q_chol.lower, cache.k_m, lower=True, check_finite=False)
    mean = a.T @ q_chol.half_solve(b)
    cov = a.T @ a
    return FullConditional(mean, cov, a.T, q_chol)


def pseudo_target_full_conditional(residual, state, X, sigma2_eps, cache=None):
    """Return ``(Mean_j, Var_j)`` for component ``state`` given ``r_j``."""
    cache = build_cache(state, X) if cache is None else cache
    fc = full_conditional(cache, residual, sigma2_eps)
    return fc.mean, fc.cov


def draw_gaussian(mean, factor, rng):
    return mean + factor @ rng.standard_normal(len(mean))


def predict_terms(state, pseudo_X, X_star):
    """Per-location conditional mean and variance of the component function.

    Conditional on the current pseudo-targets: mean = k*' K_m^{-1} fbar and
    variance = K** - k*' K_m^{-1} k*. Locations outside the box give (0, 0).
    """
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    mean = np.zeros(X_star.shape[0])
    var = np.zeros(X_star.shape[0])
    inside = state.box.contains(X_star)
    if not np.any(inside):
        return mean, var
    params = state.params
    chol = chol_jitter(cov_matrix(pseudo_X, pseudo_X, params))
    k_star = cov_matrix(X_star[inside], pseudo_X, params)
    mean[inside] = k_star @ chol.solve(state.pseudo_targets)
    v = chol.half_solve(k_star.T)
    var[inside] = np.maximum(1.0 / state.eta - np.sum(v * v, axis=0), 0.0)
    return mean, var


def component_predict(state, X, x_star):
    """Scalar ``(mean, variance)`` contribution of one component at ``x_star``."""
    mean, var = predict_terms(state, np.asarray(X, dtype=float)[state.pseudo_idx], x_star)
    return float(mean[0]), float(var[0])


def sgp_predictive(state, X, y, sigma2_eps, X_star):
    """Predictive of y* for a single sparse GP with pseudo-targets integrated out.

    mean = k*' Q^{-1} K_mn D^{-1} y and
    var = s2 + K** - k*' K_m^{-1} k* + k*' Q^{-1} k*.
    """
    X = np.asarray(X, dtype=float)
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    cache = build_cache(state, X)
    fc = full_conditional(cache, y, sigma2_eps)
    idx = cache.box_idx
    d_inv = 1.0 / (cache.lambda_diag[idx] + sigma2_eps)
    b = cache.cross.T @ (d_inv * np.asarray(y, dtype=float)[idx])
    pseudo_X = X[state.pseudo_idx]

    inside = state.box.contains(X_star)
    mean = np.zeros(X_star.shape[0])
    var = np.full(X_star.shape[0], float(sigma2_eps))
    if np.any(inside):
        k_star = cov_matrix(X_star[inside], pseudo_X, state.params)
        mean[inside] = k_star @ fc.q_chol.solve(b)
        v = cache.chol.half_solve(k_star.T)
        w = fc.q_chol.half_solve(k_star.T)
        var[inside] += 1.0 / state.eta - np.sum(v * v, axis=0) + np.sum(w * w, axis=0)
    return mean, var


def reanchor_targets(state, X, new_idx):
    """Values of the component's current conditional mean at new pseudo-inputs."""
    X = np.asarray(X, dtype=float)
    mean, _ = predict_terms(state, X[state.pseudo_idx], X[new_idx])
    return mean
