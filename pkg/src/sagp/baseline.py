"""Dense GP reference model with maximum-likelihood hyper-parameters.

Uses the same squared-exponential kernel family on the unit cube, without
support restriction, and fits ``(log rho, log eta, log sigma2)`` by
maximizing the log marginal likelihood from a few starting points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .errors import SagpError
from .kernel import DENSE_CEILING, KernelParams, full_gp_log_marginal, full_gp_predict

STARTS = ((-5.0, 0.0, -2.0), (-50.0, 0.0, -2.0), (-1.0, 0.0, -1.0), (-300.0, 1.0, -3.0))


@dataclass(frozen=True)
class DenseGpFit:
    params: KernelParams
    sigma2: float
    log_marginal: float


def fit_dense_gp(X, y, starts=STARTS, max_n=DENSE_CEILING):
    """Maximum-likelihood dense GP on standardized data."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] > max_n:
        raise SagpError(f"dense GP limited to n <= {max_n}, got {X.shape[0]}")

    def neg(theta):
        log_rho = -math.exp(theta[0])
        try:
            return -full_gp_log_marginal(X, y, KernelParams(log_rho, math.exp(theta[1])), math.exp(theta[2]))
        except (SagpError, ArithmeticError, np.linalg.LinAlgError):
            return 1e300

    best = None
    for log_rho0, log_eta0, log_s20 in starts:
        x0 = np.array([math.log(-log_rho0), log_eta0, log_s20])
        res = minimize(neg, x0, method="L-BFGS-B", bounds=[(-8.0, 9.0), (-12.0, 12.0), (-14.0, 3.0)])
        if best is None or res.fun < best.fun:
            best = res
    theta = best.x
    params = KernelParams(-math.exp(theta[0]), math.exp(theta[1]))
    return DenseGpFit(params, math.exp(theta[2]), -float(best.fun))


def dense_gp_predict(fit, X, y, X_star, alpha=0.05):
    """Predictive mean and Gaussian ``1 - alpha`` interval for y* (standardized)."""
    mean, var = full_gp_predict(X, y, fit.params, fit.sigma2, X_star)
    half = norm.ppf(1.0 - alpha / 2.0) * np.sqrt(var + fit.sigma2)
    return mean, mean - half, mean + half
