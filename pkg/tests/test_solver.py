import numpy as np
import pytest
from scipy import optimize

from conftest import random_logistic
from pmwls.errors import ValidationError
from pmwls.model import Dataset, constant_model, linear_model
from pmwls.objective import ObjectiveContext, Penalty, q_n
from pmwls.solver import (SolverConfig, fit, fit_additive_naive, fit_pmwls,
                          fit_pwls)
from pmwls.weights import (IDENTITY, WeightSpec, build_weight,
                           inverse_covariance)


def test_linear_unpenalized_equals_centered_ols(rng):
    x = rng.normal(size=(40, 3))
    y = 2.0 + x @ [1.0, -0.5, 0.0] + 0.3 * rng.normal(size=40)
    ctx = ObjectiveContext.pmwls(Dataset(y, x), linear_model(3))
    res = fit_pmwls(ctx, SolverConfig(tol_theta=1e-10, tol_obj=1e-14))
    xc, yc = x - x.mean(0), y - y.mean()
    ols = np.linalg.lstsq(xc, yc, rcond=None)[0]
    assert res.converged
    assert np.allclose(res.theta, ols, atol=1e-6)


def test_weighted_linear_equals_closed_form(rng):
    x = rng.normal(size=(30, 2))
    y = 1.0 + x @ [0.7, 0.2] + 0.3 * rng.normal(size=30)
    spec = WeightSpec("ar1", 0.6)
    ctx = ObjectiveContext.pmwls(Dataset(y, x), linear_model(2), spec)
    res = fit_pmwls(ctx, SolverConfig(tol_theta=1e-11, tol_obj=1e-15))
    K = build_weight(spec, 30).sigma_w
    closed = np.linalg.solve(x.T @ K @ x, x.T @ K @ y)
    assert np.allclose(res.theta, closed, atol=1e-6)


def test_pwls_matches_gls_with_intercept(rng):
    x = rng.normal(size=(30, 2))
    y = 0.5 + x @ [0.7, -0.4] + 0.3 * rng.normal(size=30)
    spec = WeightSpec("arma11", 0.8, 0.4)
    ctx = ObjectiveContext.pwls(Dataset(y, x), linear_model(2), spec)
    res = fit_pwls(ctx, SolverConfig(tol_theta=1e-11, tol_obj=1e-15))
    V = inverse_covariance(spec, 30)
    D = np.column_stack([np.ones(30), x])
    gls = np.linalg.solve(D.T @ V @ D, D.T @ V @ y)
    assert np.allclose(res.theta, gls[1:], atol=1e-6)
    assert res.beta0 == pytest.approx(gls[0], abs=1e-6)


def test_pwls_identity_equals_pmwls_identity(rng):
    data, m, _ = random_logistic(rng, n=40)
    pen = Penalty("scad", 0.02)
    a = fit(ObjectiveContext.pmwls(data, m, IDENTITY, pen))
    b = fit(ObjectiveContext.pwls(data, m, IDENTITY, pen))
    assert np.allclose(a.theta, b.theta, atol=1e-10)
    assert b.beta0 == pytest.approx(np.mean(b.residuals))


def test_trace_nonincreasing(rng):
    for _ in range(5):
        data, m, _ = random_logistic(rng, n=40, p=4, noise=0.3)
        for pen in (Penalty(), Penalty("lasso", 0.01), Penalty("scad", 0.03)):
            res = fit(ObjectiveContext.pmwls(data, m, WeightSpec("ar1", 0.5),
                                             pen))
            assert all(b <= a + 1e-12 for a, b in zip(res.trace,
                                                       res.trace[1:]))


def test_logistic_fit_is_stationary(rng):
    data, m, theta0 = random_logistic(rng, n=60, noise=0.05)
    ctx = ObjectiveContext.pmwls(data, m)
    res = fit(ctx, SolverConfig(tol_theta=1e-10, tol_obj=1e-15))
    ref = optimize.minimize(lambda t: q_n(ctx, t), res.theta,
                            method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14})
    assert res.q <= ref.fun + 1e-8


def test_max_sweeps_reports_nonconvergence(rng):
    data, m, _ = random_logistic(rng, n=30)
    res = fit(ObjectiveContext.pmwls(data, m), SolverConfig(max_sweeps=1))
    assert not res.converged
    assert any("not converged" in w for w in res.warnings)


def test_flat_direction_warning(rng):
    d = Dataset(rng.normal(size=10), rng.normal(size=(10, 2)))
    res = fit(ObjectiveContext.pmwls(d, constant_model(2)))
    assert res.converged
    assert any("flat direction" in w for w in res.warnings)


def test_fit_result_fields(rng):
    data, m, _ = random_logistic(rng, n=30)
    res = fit(ObjectiveContext.pmwls(data, m, IDENTITY, Penalty("scad", 0.05)))
    d = res.to_dict()
    for key in ("theta_hat", "df", "S_n", "Q_n", "converged", "sweeps"):
        assert key in d
    assert d["df"] == len(d["active"])
    assert np.allclose(res.residuals, data.y - m.value(data.x, res.theta))


def test_large_tau_keeps_targets(rng):
    data, m, _ = random_logistic(rng, n=30)
    t = np.array([0.3, -0.2, 0.1])
    res = fit(ObjectiveContext.pmwls(data, m, IDENTITY,
                                     Penalty("scad", 100.0, targets=t)))
    assert np.array_equal(res.theta, t)
    assert res.df == 0


def test_explicit_init_validation():
    with pytest.raises(ValidationError):
        SolverConfig(init="explicit")
    with pytest.raises(ValidationError):
        SolverConfig(max_sweeps=0)


def test_method_guards(rng):
    data, m, _ = random_logistic(rng, n=10)
    with pytest.raises(ValidationError):
        fit_pwls(ObjectiveContext.pmwls(data, m))
    with pytest.raises(ValidationError):
        fit_pmwls(ObjectiveContext.pwls(data, m))


def test_additive_naive_uses_raw_scale(rng):
    x = rng.normal(size=(40, 2))
    z = np.exp(0.1 * rng.normal(size=40)) / (1 + np.exp(-x @ [1.0, 0.5]))
    data = Dataset.from_multiplicative(z, x)
    from pmwls.model import logistic_model
    res = fit_additive_naive(data, logistic_model(2))
    ctx_raw = ObjectiveContext.pmwls(Dataset(z, x), logistic_model(2))
    assert res.method == "additive"
    assert np.allclose(res.theta, fit(ctx_raw).theta)
    with pytest.raises(ValidationError):
        fit_additive_naive(Dataset(np.log(z), x, data.scale), logistic_model(2))
