import math

import numpy as np
import pytest

import pmwls.simulate as sim
from pmwls.errors import NumericalError, ValidationError
from pmwls.simulate import (CSV_FIELDS, ErrorProcessSpec, Estimator,
                            SimConfig, TABLES, gen_covariates, gen_dataset,
                            gen_errors, get_table, metrics, rows_to_csv,
                            run_experiment, run_replications, seeded_rng,
                            true_theta)
from pmwls.weights import WeightSpec, arma_autocovariance


def test_true_theta():
    t = true_theta(20)
    assert list(t[:3]) == [1.0, 1.2, 0.6] and np.all(t[3:] == 0)


def test_covariate_moments():
    x = gen_covariates(200_000, 5, seeded_rng(0, 0, 0))
    assert x[:, 0].min() >= -1 and x[:, 0].max() <= 1
    assert np.var(x[:, 0]) == pytest.approx(1 / 3, abs=0.01)
    c = np.cov(x[:, 1:].T)
    assert np.allclose(np.diag(c), 0.6, atol=0.01)
    off = c[~np.eye(4, dtype=bool)]
    assert np.allclose(off, 0.1, atol=0.01)


def test_ar1_errors_moments():
    spec = ErrorProcessSpec("ar1", 0.5, 0.0, 0.3, 0.5)
    e = gen_errors(spec, 400_000, seeded_rng(1, 0, 1))
    assert e.mean() == pytest.approx(0.3, abs=0.01)
    assert e.std() == pytest.approx(0.5, abs=0.01)
    ec = e - e.mean()
    assert (ec[1:] @ ec[:-1]) / (ec @ ec) == pytest.approx(0.5, abs=0.01)


def test_exponentiated_errors_positive():
    spec = ErrorProcessSpec("arma11", 0.8, 0.4, 0.1, 0.5, exponentiate=True)
    e = gen_errors(spec, 1000, seeded_rng(2, 0, 1))
    assert np.all(e > 0)


def test_arma_errors_autocovariance_roughly():
    spec = ErrorProcessSpec("arma11", 0.8, 0.4, 0.0, 1.0)
    e = gen_errors(spec, 300_000, seeded_rng(3, 0, 1))
    g = arma_autocovariance(0.8, 0.4, 1.0, 2)
    emp = [np.mean(e[: len(e) - k] * e[k:]) for k in range(3)]
    assert np.allclose(emp, g, atol=0.05)


def test_error_spec_validation():
    with pytest.raises(ValidationError):
        ErrorProcessSpec("ar1", 1.0)
    with pytest.raises(ValidationError):
        ErrorProcessSpec("ar1", 0.5, 0.3)
    with pytest.raises(ValidationError):
        ErrorProcessSpec("ar1", 0.5, sigma=0.0)


def test_multiplicative_config_exponentiates():
    cfg = SimConfig(n=20, reps=1, model_form="multiplicative")
    assert cfg.errors.exponentiate
    d = gen_dataset(cfg, 0)
    assert np.allclose(np.exp(d.y), d.z)
    with pytest.raises(ValidationError):
        SimConfig(errors=ErrorProcessSpec(exponentiate=True))


def test_streams_are_reproducible_and_distinct():
    cfg = SimConfig(n=30, reps=3, seed=5)
    a, b = gen_dataset(cfg, 1), gen_dataset(cfg, 1)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.x, b.x)
    c = gen_dataset(cfg, 2)
    assert not np.array_equal(a.x, c.x)
    with pytest.raises(ValidationError):
        gen_dataset(cfg, 3)


def test_estimator_labels_and_guards():
    assert Estimator().label == "PMWLS"
    assert Estimator("pwls", WeightSpec("ar1", 0.5)).label == "PWLS (rho=0.5)"
    assert Estimator("pmwls", WeightSpec("arma11", 0.8, 0.4)).label == \
        "PMWLS (rho=0.8,phi=0.4)"
    with pytest.raises(ValidationError):
        Estimator("additive", WeightSpec("ar1", 0.5))
    with pytest.raises(ValidationError):
        Estimator(penalty="ridge")


def test_metrics_exact_estimates():
    t0 = true_theta(20)
    m = metrics(np.tile(t0, (4, 1)), t0)
    assert m.mse == 0 and m.sd == 0 and m.tp == 3 and m.tn == 17


def test_metrics_formulas():
    t0 = np.array([1.0, 0.0])
    th = np.array([[2.0, 0.0], [0.0, 1.0]])
    m = metrics(th, t0)
    assert m.mse == pytest.approx((1 + (1 + 1)) / (2 * 2))
    mean = th.mean(0)
    assert m.sd == pytest.approx(math.sqrt(np.sum((th - mean) ** 2) / 1))
    assert m.tp == 0.5 and m.tn == 0.5
    assert math.isnan(metrics(th[:1], t0).sd)


def test_table_presets():
    assert len(TABLES) == 15
    t = get_table("add_scad_5")
    assert len(t.estimators) == 8
    assert {e.method for e in get_table("multi_add_8_4").estimators} == \
        {"pmwls", "additive"}
    with pytest.raises(ValidationError):
        get_table("table_9")
    cfgs = list(t.configs(7, sample_sizes=(50,), reps=2,
                          methods=["PMWLS (rho=0.5)"]))
    assert len(cfgs) == 2 and len(cfgs[0].estimators) == 1


def test_replications_do_not_depend_on_workers():
    cfg = SimConfig(n=40, reps=3, seed=9, tau_count=10)
    a = run_replications(cfg, threads=1)
    b = run_replications(cfg, threads=2)
    for ra, rb in zip(a, b):
        assert np.array_equal(ra[0], rb[0])


def test_failures_are_counted_and_capped(monkeypatch):
    calls = {"n": 0}
    real = sim.fit_estimator

    def flaky(est, data, cfg):
        calls["n"] += 1
        if calls["n"] == 1:
            raise NumericalError("boom")
        return real(est, data, cfg)

    monkeypatch.setattr(sim, "fit_estimator", flaky)
    rows = run_experiment(SimConfig(n=30, reps=10, seed=1, tau_count=5))
    assert rows[0].metrics.failures == 1 and rows[0].metrics.reps == 9

    def broken(est, data, cfg):
        raise NumericalError("boom")

    monkeypatch.setattr(sim, "fit_estimator", broken)
    with pytest.raises(NumericalError):
        run_experiment(SimConfig(n=30, reps=5, seed=1))


def test_csv_layout():
    rows = run_experiment(SimConfig(n=30, reps=2, seed=1, tau_count=5))
    text = rows_to_csv("demo", rows)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_FIELDS)
    assert lines[1].startswith("demo,0.0,1.0,PMWLS,none,scad,30,2,0,")
    assert text.endswith("\n") and "\r" not in text


def test_theta_bound_is_respected():
    cfg = SimConfig(n=40, reps=2, seed=4, theta_bound=0.5, tau_count=10)
    res = sim.fit_estimator(cfg.estimators[0], gen_dataset(cfg, 0), cfg)
    assert np.all(np.abs(res.fit.theta) <= 0.5)
