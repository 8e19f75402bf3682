import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_logistic
from pmwls.errors import NumericalError, ValidationError
from pmwls.model import Dataset, ModelSpec, constant_model, linear_model
from pmwls.objective import (ObjectiveContext, Penalty, penalty_deriv,
                             penalty_value, prox_scalar, q_n, s_n,
                             s_n_gradient)
from pmwls.weights import IDENTITY, WeightSpec, build_weight

SPECS = [IDENTITY, WeightSpec("ar1", 0.5), WeightSpec("ar1", 0.9),
         WeightSpec("arma11", 0.8, 0.4)]


def naive_s(y, f, W):
    """Explicit double-sum form sum_t (Wr - mean(Wr))_t^2."""
    r = [yt - ft for yt, ft in zip(y, f)]
    n = len(r)
    wr = [sum(W[t][s] * r[s] for s in range(n)) for t in range(n)]
    m = sum(wr) / n
    return sum((v - m) ** 2 for v in wr)


def test_two_point_example():
    d = Dataset(np.array([1.0, 3.0]), np.zeros((2, 1)))
    ctx = ObjectiveContext.pmwls(d, constant_model(1, 0.0))
    assert s_n(ctx, [0.0]) == pytest.approx(2.0)


@pytest.mark.parametrize("spec", SPECS)
def test_constant_residual_gives_zero(spec):
    d = Dataset(np.full(8, 4.2), np.zeros((8, 1)))
    ctx = ObjectiveContext.pmwls(d, constant_model(1, 0.0), spec)
    assert abs(s_n(ctx, [0.0])) < 1e-10


@pytest.mark.parametrize("spec", SPECS)
def test_matches_naive_formula(rng, spec):
    data, m, theta = random_logistic(rng, n=20)
    ctx = ObjectiveContext.pmwls(data, m, spec)
    W = build_weight(spec, 20).W.tolist()
    f = m.value(data.x, theta).tolist()
    assert s_n(ctx, theta) == pytest.approx(naive_s(data.y.tolist(), f, W),
                                            abs=1e-10)


@pytest.mark.parametrize("spec", SPECS)
def test_gradient_central_differences(rng, spec):
    data, m, theta = random_logistic(rng, n=25)
    ctx = ObjectiveContext.pmwls(data, m, spec)
    g = s_n_gradient(ctx, theta)
    fd = np.empty_like(g)
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1e-6
        fd[k] = (s_n(ctx, theta + e) - s_n(ctx, theta - e)) / 2e-6
    assert np.max(np.abs(g - fd)) <= 1e-5 * max(1.0, np.max(np.abs(g)))


def test_zero_residual_zero_gradient(rng):
    x = rng.normal(size=(10, 2))
    m = linear_model(2)
    theta = np.array([0.5, -1.0])
    ctx = ObjectiveContext.pmwls(Dataset(x @ theta, x), m)
    assert np.allclose(s_n_gradient(ctx, theta), 0.0)


def test_constant_model_zero_gradient(rng):
    d = Dataset(rng.normal(size=6), rng.normal(size=(6, 2)))
    ctx = ObjectiveContext.pmwls(d, constant_model(2, 1.0))
    assert np.all(s_n_gradient(ctx, np.ones(2)) == 0.0)


def test_non_finite_model_output_is_numerical_error():
    m = ModelSpec(1, lambda X, t: np.full(X.shape[0], np.nan))
    ctx = ObjectiveContext.pmwls(Dataset(np.ones(3), np.ones((3, 1))), m)
    with pytest.raises(NumericalError):
        s_n(ctx, [0.0])


def test_scad_derivative_values():
    pen = Penalty("scad", 1.0)
    assert penalty_deriv(pen, 0.5) == pytest.approx(1.0)
    assert penalty_deriv(pen, 2.0) == pytest.approx(1.7 / 2.7)
    assert penalty_deriv(pen, 4.0) == 0.0
    assert np.all(penalty_deriv(pen, np.linspace(3.7, 50, 20)) == 0.0)


def test_scad_value_is_integral_of_derivative():
    pen = Penalty("scad", 0.8)
    u = np.linspace(0, 5, 20001)
    q = penalty_deriv(pen, u)
    integral = np.concatenate([[0], np.cumsum((q[1:] + q[:-1]) / 2 * np.diff(u))])
    direct = np.array([penalty_value(pen, [v]) for v in u[::500]])
    assert np.allclose(direct, integral[::500], atol=1e-8)


def test_lasso_zero_tau():
    pen = Penalty("lasso", 0.0)
    assert penalty_deriv(pen, 3.0) == 0.0
    assert penalty_value(pen, [1.0, -2.0]) == 0.0


def test_negative_u_rejected():
    with pytest.raises(ValidationError):
        penalty_deriv(Penalty("scad", 1.0), -1.0)


def test_q_minus_s_is_penalty(rng):
    data, m, theta = random_logistic(rng, n=15)
    pen = Penalty("scad", 0.3, targets=np.array([0.1, 0.0, -0.2]))
    ctx = ObjectiveContext.pmwls(data, m, IDENTITY, pen)
    assert q_n(ctx, theta) - s_n(ctx, theta) == pytest.approx(
        15 * penalty_value(pen, theta), abs=1e-12)
    assert q_n(ctx, pen.targets) == pytest.approx(s_n(ctx, pen.targets))
    assert q_n(ctx.with_penalty(Penalty()), theta) == s_n(ctx, theta)


def test_prox_examples():
    assert prox_scalar(Penalty("lasso", 1.0), 3.0, 1.0, 1.0) == 2.0
    assert prox_scalar(Penalty("scad", 0.01), 10.0, 1.0, 1.0) == 10.0
    assert prox_scalar(Penalty("lasso", 1.0), 3.0, 1.0, 1.0, target=2.5) == 2.5
    with pytest.raises(ValidationError):
        prox_scalar(Penalty("lasso", 1.0), 3.0, 0.0, 1.0)


def scalar_obj(pen, u, z, h, n, target=0.0):
    return 0.5 * h * (u - z) ** 2 + n * penalty_value(
        Penalty(pen.family, pen.tau, pen.a), [u - target])


@settings(max_examples=300, deadline=None)
@given(z=st.floats(-20, 20), h=st.floats(0.01, 50), tau=st.floats(0.001, 3),
       a=st.floats(2.1, 6), target=st.floats(-2, 2),
       fam=st.sampled_from(["lasso", "scad"]))
def test_prox_descent_property(z, h, tau, a, target, fam):
    pen = Penalty(fam, tau, a)
    u = prox_scalar(pen, z, h, 1.0, target)
    assert scalar_obj(pen, u, z, h, 1.0, target) <= \
        scalar_obj(pen, z, z, h, 1.0, target) + 1e-12


def test_shift_invariance_of_s(rng):
    data, m, theta = random_logistic(rng, n=20)
    for spec in SPECS:
        ctx = ObjectiveContext.pmwls(data, m, spec)
        base = s_n(ctx, theta)
        for c in (-3.0, 0.7, 10.0):
            shifted = ctx.with_data(data.shifted(c))
            assert s_n(shifted, theta) == pytest.approx(base, abs=1e-9)


def test_targets_length_checked(rng):
    data, m, _ = random_logistic(rng, n=10)
    with pytest.raises(ValidationError):
        ObjectiveContext.pmwls(data, m, IDENTITY,
                               Penalty("lasso", 1.0, targets=np.zeros(2)))
