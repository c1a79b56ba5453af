"""Compactly supported Gaussian kernel and the small dense linear-algebra kit.

The kernel of one additive component is

    K(x, x') = (1 / eta) * rho ** ||x - x'||^2      for x, x' inside the box,

and zero as soon as either point lies outside the component box. Everything
is evaluated as ``exp(log_rho * d2) / eta`` because ``rho`` goes down to
1e-50 for the deepest layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DimensionError, InvalidInputError, NonPsdError

JITTER_START = 1e-10
JITTER_CEILING = 1e-4
DENSE_CEILING = 500


@dataclass(frozen=True)
class KernelParams:
    """Kernel parameters of one component.

    ``log_rho`` is the stored quantity; ``rho`` is derived from it.
    """

    log_rho: float
    eta: float

    def __post_init__(self):
        if not (math.isfinite(self.log_rho) and self.log_rho < 0.0):
            raise InvalidInputError(f"log_rho must be finite and negative, got {self.log_rho}")
        if not (math.isfinite(self.eta) and self.eta > 0.0):
            raise InvalidInputError(f"eta must be finite and positive, got {self.eta}")

    @classmethod
    def from_rho(cls, rho, eta):
        if not 0.0 < rho < 1.0:
            raise InvalidInputError(f"rho must lie in (0, 1), got {rho}")
        return cls(math.log(rho), float(eta))

    @property
    def rho(self):
        return math.exp(self.log_rho)

    def with_eta(self, eta):
        return KernelParams(self.log_rho, float(eta))


@dataclass(frozen=True)
class Box:
    """Axis-aligned hyper-box ``[lower, upper]`` in R^d.

    Membership is half-open, ``lower < x <= upper`` per coordinate, except
    that a face lying on the domain boundary 0 is closed. Neighbouring boxes
    therefore never share a point and a point on a shared face belongs to
    the box with the smaller coordinate.
    """

    lower: tuple
    upper: tuple

    @classmethod
    def unit(cls, d):
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def d(self):
        return len(self.lower)

    @property
    def centroid(self):
        return tuple((lo + hi) / 2.0 for lo, hi in zip(self.lower, self.upper))

    @property
    def half_width(self):
        return tuple((hi - lo) / 2.0 for lo, hi in zip(self.lower, self.upper))

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, points):
        """Boolean membership for an (n, d) array, or a bool for one point."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.d:
            raise DimensionError(f"points have dimension {pts.shape[1]}, box has {self.d}")
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        above = (pts > lo) | ((pts == lo) & (lo <= 0.0))
        inside = np.all(above & (pts <= hi), axis=1)
        return bool(inside[0]) if single else inside


def _as_points(points, name):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d array of points")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError(f"{name} contains non-finite coordinates")
    return pts


def sq_dist(a, b):
    """Matrix of squared Euclidean distances between rows of ``a`` and ``b``."""
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kernel_eval(x, x2, params, support=None):
    """Kernel value between two points; 0 if either point is outside ``support``."""
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape:
        raise DimensionError(f"point dimensions differ: {x.size} vs {x2.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x2))):
        raise InvalidInputError("non-finite coordinate")
    if support is not None and not (support.contains(x) and support.contains(x2)):
        return 0.0
    d2 = float(np.dot(x - x2, x - x2))
    return math.exp(params.log_rho * d2) / params.eta


def cov_matrix(points_a, points_b, params, support=None):
    """Cross-covariance matrix with entry (i, k) = K(a_i, b_k)."""
    a = _as_points(points_a, "points_a")
    b = _as_points(points_b, "points_b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    k = np.exp(params.log_rho * sq_dist(a, b)) / params.eta
    if support is not None:
        k *= support.contains(a)[:, None] & support.contains(b)[None, :]
    return k


@dataclass
class PsdFactor:
    """Lower Cholesky factor of ``M + jitter_used * I``."""

    lower: np.ndarray
    jitter_used: float = 0.0

    def solve(self, rhs):
        return cho_solve((self.lower, True), rhs, check_finite=False)

    def half_solve(self, rhs):
        """``L^{-1} rhs``."""
        return solve_triangular(self.lower, rhs, lower=True, check_finite=False)

    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def scaled(self, factor):
        """Factor of ``factor * (M + jitter I)`` for a positive scalar."""
        return PsdFactor(self.lower * math.sqrt(factor), self.jitter_used * factor)


def chol_jitter(m, start=JITTER_START, ceiling=JITTER_CEILING):
    """Cholesky factorization with escalating diagonal perturbation.

    Tries the plain factorization first, then adds ``start * mean(diag)`` to
    the diagonal and multiplies the perturbation by 10 until it succeeds or
    exceeds ``ceiling * mean(diag)``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix contains non-finite entries")
    if m.size == 0:
        return PsdFactor(np.zeros((0, 0)), 0.0)
    scale = float(np.max(np.abs(m)))
    if float(np.max(np.abs(m - m.T))) > 1e-10 * scale:
        raise InvalidInputError("matrix is not symmetric")
    try:
        return PsdFactor(np.linalg.cholesky(m), 0.0)
    except np.linalg.LinAlgError:
        pass
    mean_diag = float(np.mean(np.diag(m)))
    if mean_diag <= 0.0:
        raise NonPsdError("matrix has nonpositive mean diagonal", 0.0)
    jitter = start * mean_diag
    limit = ceiling * mean_diag * (1.0 + 1e-12)
    eye = np.eye(m.shape[0])
    last = jitter
    while jitter <= limit:
        try:
            return PsdFactor(np.linalg.cholesky(m + jitter * eye), jitter)
        except np.linalg.LinAlgError:
            last = jitter
            jitter *= 10.0
    raise NonPsdError("matrix is not positive semi-definite", last)


def full_gp_posterior(X, y, params, sigma2_eps, support=None, max_n=DENSE_CEILING):
    """Dense GP posterior of the latent values ``f`` at the training inputs.

    Returns ``(mean, cov)`` with ``mean = K (K + s2 I)^{-1} y`` and
    ``cov = K - K (K + s2 I)^{-1} K``.
    """
    X = _as_points(X, "X")
    y = np.asarray(y, dtype=float)
    if X.shape[0] > max_n:
        raise InvalidInputError(f"dense GP limited to n <= {max_n}, got {X.shape[0]}")
    K = cov_matrix(X, X, params, support)
    fac = chol_jitter(K + sigma2_eps * np.eye(len(y)))
    mean = K @ fac.solve(y)
    cov = K - K @ fac.solve(K)
    return mean, 0.5 * (cov + cov.T)


def full_gp_predict(X, y, params, sigma2_eps, X_star, support=None, max_n=DENSE_CEILING):
    """Dense GP predictive mean and latent variance at new locations."""
    X = _as_points(X, "X")
    X_star = _as_points(X_star, "X_star")
    y = np.asarray(y, dtype=float)
    if X.shape[0] > max_n:
        raise InvalidInputError(f"dense GP limited to n <= {max_n}, got {X.shape[0]}")
    K = cov_matrix(X, X, params, support)
    k_star = cov_matrix(X_star, X, params, support)
    fac = chol_jitter(K + sigma2_eps * np.eye(len(y)))
    mean = k_star @ fac.solve(y)
    v = fac.half_solve(k_star.T)
    prior_var = np.full(X_star.shape[0], 1.0 / params.eta)
    if support is not None:
        prior_var = prior_var * support.contains(X_star)
    var = prior_var - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def full_gp_log_marginal(X, y, params, sigma2_eps):
    """Log marginal likelihood ``log N(y | 0, K + s2 I)`` of the dense GP."""
    X = _as_points(X, "X")
    y = np.asarray(y, dtype=float)
    K = cov_matrix(X, X, params)
    fac = chol_jitter(K + sigma2_eps * np.eye(len(y)))
    alpha = fac.half_solve(y)
    return -0.5 * float(alpha @ alpha) - 0.5 * fac.logdet() - 0.5 * len(y) * math.log(2.0 * math.pi)
