import numpy as np
import pytest

from hte_vim.cate import (
    cate_dr_learner,
    cate_s_learner,
    fit_cate,
    fit_tau,
    project_gamma_s,
    project_tau_s,
    pseudo_outcome,
)
from hte_vim.learners import HAL, OLS, Tree
from hte_vim.model import Dataset, NuisanceFits, SubsetSpec
from hte_vim.sim import generate, tau_true


def one_obs(A, Y, g1, q0, q1):
    return Dataset([[0.0]], [A], [Y]), NuisanceFits([q0], [q1], [g1])


def test_pseudo_outcome_treated():
    ds, nf = one_obs(1, 2.0, 0.5, 0.0, 1.0)
    assert pseudo_outcome(ds, nf)[0] == pytest.approx(3.0)


def test_pseudo_outcome_control():
    ds, nf = one_obs(0, 1.0, 0.2, 0.5, 1.5)
    assert pseudo_outcome(ds, nf)[0] == pytest.approx(0.375)


def test_pseudo_outcome_zero_residual(rng):
    n = 20
    A = (np.arange(n) % 2).astype(float)
    q0, q1 = rng.normal(size=n), rng.normal(size=n)
    ds = Dataset(rng.normal(size=(n, 1)), A, np.where(A == 1, q1, q0))
    nf = NuisanceFits(q0, q1, rng.uniform(0.1, 0.9, n))
    np.testing.assert_allclose(pseudo_outcome(ds, nf), q1 - q0)


def test_s_learner():
    assert np.all(cate_s_learner(NuisanceFits([1.0, 2.0], [1.0, 2.0], [0.5, 0.5])) == 0)
    np.testing.assert_allclose(cate_s_learner(NuisanceFits([0.5], [2.0], [0.5])), [1.5])


def test_s_learner_on_exact_linear_toy(linear_data):
    from hte_vim.nuisance import fit_nuisance

    nf = fit_nuisance(linear_data, OLS(), 0.5)
    np.testing.assert_allclose(fit_tau(linear_data, nf), 2.0, atol=1e-8)


def test_dr_constant_pseudo_outcome(rng):
    ds = Dataset(rng.normal(size=(30, 2)), np.arange(30) % 2, np.zeros(30))
    np.testing.assert_allclose(cate_dr_learner(ds, np.full(30, 1.7), OLS()), 1.7, atol=1e-10)


def test_dr_recovers_linear_signal_within_3se(rng):
    n = 2000
    W = rng.normal(size=(n, 2))
    phi = 0.5 + 1.0 * W[:, 0] - 2.0 * W[:, 1] + rng.normal(scale=2.0, size=n)
    ds = Dataset(W, np.arange(n) % 2, np.zeros(n))
    model = OLS().fit(W, phi)
    Z = np.column_stack([np.ones(n), W])
    resid = phi - Z @ model.coef
    se = np.sqrt(np.diag(np.linalg.inv(Z.T @ Z)) * resid.var(ddof=3))
    assert np.all(np.abs(model.coef - [0.5, 1.0, -2.0]) <= 3 * se)
    np.testing.assert_allclose(cate_dr_learner(ds, phi, OLS()), Z @ model.coef)


def test_projection_all_covariates_is_mean(rng):
    ds = Dataset(rng.normal(size=(10, 2)), np.arange(10) % 2, np.zeros(10))
    tau = rng.normal(size=10)
    np.testing.assert_allclose(project_tau_s(ds, tau, SubsetSpec((0, 1)), OLS()), tau.mean())
    np.testing.assert_allclose(project_gamma_s(ds, tau, SubsetSpec((0, 1)), OLS()), np.mean(tau**2))


def test_projection_of_constant(rng):
    ds = Dataset(rng.normal(size=(25, 2)), np.arange(25) % 2, np.zeros(25))
    tau = np.full(25, 1.3)
    np.testing.assert_allclose(project_tau_s(ds, tau, SubsetSpec((0,)), OLS(2)), 1.3, atol=1e-10)
    np.testing.assert_allclose(project_gamma_s(ds, tau, SubsetSpec((0,)), OLS(2)), 1.69, atol=1e-10)


def test_gamma_is_group_mean_of_squares_on_discrete_toy(rng):
    n = 400
    W = rng.integers(0, 2, size=(n, 2)).astype(float)
    tau = 1 + W[:, 0] + 2 * W[:, 1] + rng.normal(size=n)
    ds = Dataset(W, np.arange(n) % 2, np.zeros(n))
    saturated = Tree(max_depth=3, min_leaf=1)
    gamma = project_gamma_s(ds, tau, SubsetSpec((0,)), saturated)
    tau_s = project_tau_s(ds, tau, SubsetSpec((0,)), saturated)
    for v in (0.0, 1.0):
        grp = W[:, 1] == v
        np.testing.assert_allclose(gamma[grp], np.mean(tau[grp] ** 2), atol=1e-12)
        np.testing.assert_allclose(tau_s[grp], np.mean(tau[grp]), atol=1e-12)


def test_projection_when_tau_depends_only_on_rest(rng):
    errors = []
    for n in (200, 2000):
        W = rng.uniform(-1, 1, size=(n, 2))
        tau = np.sin(3 * W[:, 1])
        ds = Dataset(W, np.arange(n) % 2, np.zeros(n))
        errors.append(np.mean((project_tau_s(ds, tau, SubsetSpec((0,)), HAL(max_knots=50)) - tau) ** 2))
    assert errors[1] < errors[0]
    assert errors[1] < 1e-3


def test_hal_s_learner_tau_accuracy_on_simulation_design():
    ds = generate(5000, 11)
    from hte_vim.nuisance import fit_outcome

    q0, q1 = fit_outcome(ds, HAL())
    assert np.mean((q1 - q0 - tau_true(ds.W)) ** 2) <= 0.05


def test_fit_cate_dr_requires_learner(linear_data):
    nf = NuisanceFits(np.zeros(linear_data.n), np.ones(linear_data.n), np.full(linear_data.n, 0.5))
    with pytest.raises(ValueError):
        fit_tau(linear_data, nf, "DR", None)
    with pytest.raises(ValueError):
        fit_cate(linear_data, nf, SubsetSpec((0,)), OLS(), metalearner="T")
    cate = fit_cate(linear_data, nf, SubsetSpec((0,)), OLS(), metalearner="DR")
    assert cate.metalearner == "DR" and cate.tau.shape == (linear_data.n,)
