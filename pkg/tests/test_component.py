import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from sagp import component as comp
from sagp.errors import InvalidInputError
from sagp.kernel import Box, KernelParams, full_gp_posterior

from conftest import dense_kernel, random_state


def dense_pieces(st_, X):
    Xm = X[st_.pseudo_idx]
    Kn = dense_kernel(X, X, st_.log_rho, st_.eta, st_.box)
    Knm = dense_kernel(X, Xm, st_.log_rho, st_.eta, st_.box)
    Km = dense_kernel(Xm, Xm, st_.log_rho, st_.eta, st_.box)
    return Kn, Knm, Km


def conjugate_oracle(st_, X, r, s2):
    """Posterior of fbar under prior N(0, K_m) and likelihood N(K_nm K_m^-1 fbar, Lambda + s2 I)."""
    Kn, Knm, Km = dense_pieces(st_, X)
    Kinv = np.linalg.inv(Km)
    A = Knm @ Kinv
    lam = np.clip(np.diag(Kn - Knm @ Kinv @ Knm.T), 0.0, None)
    Dinv = np.diag(1.0 / (lam + s2))
    prec = Kinv + A.T @ Dinv @ A
    cov = np.linalg.inv(prec)
    return cov @ A.T @ Dinv @ r, cov


def test_lambda_zero_when_all_points_are_pseudo_inputs(rng):
    X, st_ = random_state(rng, 6, 6)
    np.testing.assert_allclose(comp.lambda_diag(st_, X), 0.0, atol=1e-10)


def test_lambda_single_pseudo_input_formula(rng):
    X, st_ = random_state(rng, 5, 1)
    p = st_.params
    xbar = X[st_.pseudo_idx[0]]
    expected = [1 / p.eta - p.eta * (math.exp(p.log_rho * float(np.sum((xbar - x) ** 2))) / p.eta) ** 2 for x in X]
    np.testing.assert_allclose(comp.lambda_diag(st_, X), expected, atol=1e-12)


def test_lambda_matches_dense_oracle(rng):
    X, st_ = random_state(rng, 8, 3)
    Kn, Knm, Km = dense_pieces(st_, X)
    oracle = np.diag(Kn - Knm @ np.linalg.inv(Km) @ Knm.T)
    np.testing.assert_allclose(comp.lambda_diag(st_, X), np.clip(oracle, 0, None), atol=1e-10)


def test_lambda_and_contribution_vanish_outside_box(rng):
    box = Box((0.0,), (0.5,))
    X, st_ = random_state(rng, 6, 2, box=box)
    X = np.vstack([X, [[0.8], [0.95]]])
    c = comp.build_cache(st_, X)
    assert c.lambda_diag[-2:].tolist() == [0.0, 0.0]
    assert c.contribution[-2:].tolist() == [0.0, 0.0]


def test_pseudo_input_outside_box_rejected(rng):
    X, st_ = random_state(rng, 6, 2)
    st_ = replace(st_, box=Box((0.0,), (1e-6,)))
    with pytest.raises(InvalidInputError):
        comp.build_cache(st_, X)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6), st.integers(0, 10))
def test_lambda_bounded_by_prior_variance(seed, m, extra):
    rng = np.random.default_rng(seed)
    X, st_ = random_state(rng, m + extra, m, d=2)
    lam = comp.lambda_diag(st_, X)
    assert np.all(lam >= 0.0)
    assert np.all(lam <= 1.0 / st_.eta + 1e-12)


def test_model_log_likelihood_reduces_to_noise_only(rng):
    X, st_ = random_state(rng, 5, 5)
    st_ = st_.with_targets(np.zeros(5))
    y = rng.normal(size=5)
    ll = comp.model_log_likelihood(y, [comp.build_cache(st_, X)], 0.7)
    ref = multivariate_normal(np.zeros(5), 0.7 * np.eye(5)).logpdf(y)
    assert ll == pytest.approx(ref, abs=1e-8)


def test_model_log_likelihood_matches_dense_density(rng):
    X, s1 = random_state(rng, 6, 2)
    s2_ = replace(
        s1,
        component_id=1,
        pseudo_idx=np.setdiff1d(np.arange(6), s1.pseudo_idx)[:3],
        pseudo_targets=rng.normal(size=3),
        eta=0.9,
        log_rho=-7.0,
    )
    y = rng.normal(size=6)
    sig = 0.4
    mean = np.zeros(6)
    cov = sig * np.eye(6)
    for s in (s1, s2_):
        Kn, Knm, Km = dense_pieces(s, X)
        Kinv = np.linalg.inv(Km)
        mean += Knm @ Kinv @ s.pseudo_targets
        cov += np.diag(np.clip(np.diag(Kn - Knm @ Kinv @ Knm.T), 0, None))
    ref = multivariate_normal(mean, cov).logpdf(y)
    caches = [comp.build_cache(s, X) for s in (s1, s2_)]
    assert comp.model_log_likelihood(y, caches, sig) == pytest.approx(ref, abs=1e-10)


def test_model_log_likelihood_translation_invariant(rng):
    y = rng.normal(size=7)
    mean = rng.normal(size=7)
    var = rng.uniform(0.1, 1.0, size=7)
    a = comp.gaussian_diag_logpdf(y, mean, var)
    b = comp.gaussian_diag_logpdf(y + 3.5, mean + 3.5, var)
    assert a == pytest.approx(b, abs=1e-12)


def test_log_likelihood_drops_when_lambda_inflated(rng):
    X, st_ = random_state(rng, 8, 3)
    c = comp.build_cache(st_, X)
    y = c.contribution.copy()
    base = comp.model_log_likelihood(y, [c], 0.1)
    inflated = replace(c, lambda_diag=c.lambda_diag + np.eye(8)[2] * 0.5)
    assert comp.model_log_likelihood(y, [inflated], 0.1) < base


def test_full_conditional_zero_residual(rng):
    X, st_ = random_state(rng, 9, 3)
    mean, _ = comp.pseudo_target_full_conditional(np.zeros(9), st_, X, 0.3)
    np.testing.assert_array_equal(mean, 0.0)


def test_full_conditional_matches_conjugacy_oracle(rng):
    X, st_ = random_state(rng, 6, 2)
    r = rng.normal(size=6)
    mean, cov = comp.pseudo_target_full_conditional(r, st_, X, 0.25)
    om, oc = conjugate_oracle(st_, X, r, 0.25)
    np.testing.assert_allclose(mean, om, atol=1e-8)
    np.testing.assert_allclose(cov, oc, atol=1e-8)


def test_full_conditional_equals_dense_gp_when_m_equals_n(rng):
    X, st_ = random_state(rng, 7, 7, log_rho=-2.0)
    y = rng.normal(size=7)
    mean, cov = comp.pseudo_target_full_conditional(y, st_, X, 0.2)
    dm, dc = full_gp_posterior(X, y, st_.params, 0.2)
    np.testing.assert_allclose(mean, dm, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(cov, dc, rtol=1e-6, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5), st.integers(0, 12))
def test_full_conditional_contracts_prior(seed, m, extra):
    rng = np.random.default_rng(seed)
    X, st_ = random_state(rng, m + extra, m, d=2)
    _, cov = comp.pseudo_target_full_conditional(rng.normal(size=m + extra), st_, X, 0.5)
    Km = comp.build_cache(st_, X).k_m
    tol = 1e-9 * np.trace(Km)
    assert np.linalg.eigvalsh(cov).min() >= -tol
    assert np.linalg.eigvalsh(Km - cov).min() >= -tol


def test_factor_reproduces_covariance(rng):
    X, st_ = random_state(rng, 10, 4)
    fc = comp.full_conditional(comp.build_cache(st_, X), rng.normal(size=10), 0.3)
    np.testing.assert_allclose(fc.factor @ fc.factor.T, fc.cov, atol=1e-12)


def test_contribution_zero_targets(rng):
    X, st_ = random_state(rng, 8, 3)
    np.testing.assert_array_equal(comp.contribution(st_.with_targets(np.zeros(3)), X), 0.0)


def test_contribution_at_pseudo_input_m1(rng):
    X, st_ = random_state(rng, 5, 1)
    c = comp.contribution(st_, X)
    assert c[st_.pseudo_idx[0]] == pytest.approx(st_.pseudo_targets[0], abs=1e-12)


def test_contribution_matches_triple_product(rng):
    X, st_ = random_state(rng, 10, 4)
    _, Knm, Km = dense_pieces(st_, X)
    np.testing.assert_allclose(comp.contribution(st_, X), Knm @ np.linalg.inv(Km) @ st_.pseudo_targets, atol=1e-10)


def test_cache_with_eta_matches_rebuild(rng):
    X, st_ = random_state(rng, 12, 4)
    c = comp.build_cache(st_, X).with_eta(3.7)
    ref = comp.build_cache(replace(st_, eta=3.7), X)
    for name in ("k_m", "cross", "weights", "lambda_diag", "contribution"):
        np.testing.assert_allclose(getattr(c, name), getattr(ref, name), rtol=1e-10, atol=1e-14)
    assert comp.pseudo_target_log_prior(st_, c) == pytest.approx(comp.pseudo_target_log_prior(st_, ref), rel=1e-10)


def test_refresh_targets_matches_rebuild(rng):
    X, st_ = random_state(rng, 12, 4)
    fbar = rng.normal(size=4)
    c = comp.refresh_targets(comp.build_cache(st_, X), fbar)
    ref = comp.build_cache(st_.with_targets(fbar), X)
    np.testing.assert_allclose(c.contribution, ref.contribution, atol=1e-12)


def test_pseudo_target_log_prior_matches_scipy(rng):
    X, st_ = random_state(rng, 8, 3)
    c = comp.build_cache(st_, X)
    ref = multivariate_normal(np.zeros(3), c.k_m).logpdf(st_.pseudo_targets)
    assert comp.pseudo_target_log_prior(st_, c) == pytest.approx(ref, rel=1e-9)


def test_component_predict_at_pseudo_input(rng):
    X, st_ = random_state(rng, 8, 3)
    k = st_.pseudo_idx[1]
    mean, var = comp.component_predict(st_, X, X[k])
    assert mean == pytest.approx(st_.pseudo_targets[1], abs=1e-9)
    assert var == pytest.approx(0.0, abs=1e-9)


def test_component_predict_outside_box(rng):
    X, st_ = random_state(rng, 8, 3, box=Box((0.0,), (0.5,)))
    assert comp.component_predict(st_, X, [0.9]) == (0.0, 0.0)


def test_component_predict_conditional_gaussian_oracle(rng):
    X, st_ = random_state(rng, 9, 4, d=2)
    x_star = rng.uniform(size=2)
    Xm = X[st_.pseudo_idx]
    joint = dense_kernel(np.vstack([Xm, x_star]), np.vstack([Xm, x_star]), st_.log_rho, st_.eta)
    Km, ks, kss = joint[:4, :4], joint[:4, 4], joint[4, 4]
    Kinv = np.linalg.inv(Km)
    mean, var = comp.component_predict(st_, X, x_star)
    assert mean == pytest.approx(ks @ Kinv @ st_.pseudo_targets, abs=1e-10)
    assert var == pytest.approx(kss - ks @ Kinv @ ks, abs=1e-10)


def test_sgp_predictive_equals_dense_gp_when_m_equals_n(rng):
    from sagp.kernel import full_gp_predict

    X, st_ = random_state(rng, 8, 8, log_rho=-3.0)
    y = rng.normal(size=8)
    Xs = rng.uniform(size=(5, 1))
    mean, var = comp.sgp_predictive(st_, X, y, 0.3, Xs)
    dm, dv = full_gp_predict(X, y, st_.params, 0.3, Xs)
    np.testing.assert_allclose(mean, dm, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(var, dv + 0.3, rtol=1e-6)


def test_reanchor_keeps_function_at_old_pseudo_inputs(rng):
    X, st_ = random_state(rng, 10, 3)
    new = comp.reanchor_targets(st_, X, st_.pseudo_idx)
    np.testing.assert_allclose(new, st_.pseudo_targets, atol=1e-9)


def test_component_params_property(rng):
    _, st_ = random_state(rng, 4, 2, eta=2.0, log_rho=-1.5)
    assert st_.params == KernelParams(-1.5, 2.0)
    assert st_.m == 2
