import math

import numpy as np
import pytest

from sagp.data import standardize
from sagp.inference import fit, mse, predict_unit
from sagp.sampler import McmcConfig, Priors
from sagp.simulate import STUDY_CONFIGS, SimScenario, config_name, generate, run_study, true_mean

FAST = McmcConfig(n_iter=40, burn_in=20)


def term_by_term(x):
    terms = [
        -5.0,
        -6.0 * x**3,
        30.0 * (x - 0.5) ** 2,
        3.0 * math.exp(2.0 * x - 1.0),
        3.0 * x**2 * math.sin(12.0 * math.pi * x),
        math.cos(6.0 * math.pi * x),
    ]
    return math.fsum(terms)


def test_true_mean_values():
    assert true_mean(0.5) == pytest.approx(-3.75, abs=1e-12)
    assert true_mean(0.0) == pytest.approx(term_by_term(0.0), abs=1e-12)
    assert true_mean(0.0) == pytest.approx(4.603638, abs=1e-6)
    assert true_mean(0.0) != true_mean(1.0)
    xs = np.linspace(0, 1, 13)
    np.testing.assert_allclose(true_mean(xs), [term_by_term(x) for x in xs], atol=1e-12)


def test_generate_sizes_and_determinism():
    train, test = generate(SimScenario(seed=3))
    assert train.X.shape == (150, 1) and test.X.shape == (50, 1)
    again = generate(SimScenario(seed=3))
    np.testing.assert_array_equal(train.X, again[0].X)
    np.testing.assert_array_equal(test.y, again[1].y)
    other = generate(SimScenario(seed=4))
    assert not np.array_equal(train.y, other[0].y)


def test_interval_split_takes_points_closest_to_center():
    train, test = generate(SimScenario(split="interval", seed=5))
    d_test = np.abs(test.X[:, 0] - 0.5)
    d_train = np.abs(train.X[:, 0] - 0.5)
    assert d_test.max() < d_train.min()


def test_interval_split_is_contiguous_block():
    train, test = generate(SimScenario(split="interval", seed=6))
    x = np.concatenate([train.X[:, 0], test.X[:, 0]])
    is_test = np.concatenate([np.zeros(150, bool), np.ones(50, bool)])
    order = is_test[np.argsort(x)]
    first = np.argmax(order)
    assert order[first : first + 50].all() and order.sum() == 50


def test_noise_variance():
    sc = SimScenario(n=20000, train_size=19000, noise_var=0.1, seed=7)
    train, test = generate(sc)
    eps = np.concatenate([train.y - true_mean(train.X[:, 0]), test.y - true_mean(test.X[:, 0])])
    assert abs(eps.var(ddof=1) - 0.1) < 0.005


def test_scenario_validation():
    assert len(SimScenario(train_size=300, split="x", noise_var=-1).problems()) == 3
    with pytest.raises(ValueError):
        generate(SimScenario(train_size=0))


def test_study_configs():
    assert [config_name(m, L) for m, L in STUDY_CONFIGS] == ["m5_L4", "m10_L3", "m15_L3"]


def test_study_one_batch_one_config_three_rows():
    res = run_study(batches=1, configs=[(5, 2)], mcmc=FAST)
    assert [r[3] for r in res.rows] == ["mse", "coverage", "interval_score"]
    assert {r[1] for r in res.rows} == {"m5_L2"}


def test_study_deterministic_and_failures_recorded():
    kw = {"batches": 2, "configs": [(5, 2), (200, 1)], "mcmc": FAST, "seed": 11}
    a = run_study(**kw)
    b = run_study(**kw)
    assert repr(a.rows) == repr(b.rows)
    errors = [r for r in a.rows if r[3] == "error"]
    assert len(errors) == 2
    assert np.isnan(a.values("m200_L1", "mse")).all()
    summary = {(c, m): row for c, m, *row in a.summary()}
    assert summary[("m5_L2", "mse")][0] == 2


def test_noiseless_fit_interpolates_training_points():
    train, _ = generate(SimScenario(noise_var=0.0, seed=8))
    data = standardize(train)
    cfg = McmcConfig(n_iter=600, burn_in=300, update_sigma2=False, init_sigma2=1e-5, seed=2)
    scheme, samples = fit(data, 15, 3, Priors.default(3), cfg)
    res = predict_unit(samples, scheme, data, data.X)
    assert mse(train.y, res.mean) < 1e-2
