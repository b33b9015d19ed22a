"""Tests for the homogeneous-selection-bias estimators."""

import numpy as np
import pytest
from scipy import special

from ivsel.errors import ConfigurationError
from ivsel.glm import fit_cca, fit_selection_model
from ivsel.numkit import LOG_SQRT_2PI, numerical_gradient
from ivsel.ttw import (
    logistic_log_propensity,
    logistic_selected_logodds,
    poisson_selected_log_mean,
    ttw_linear,
    ttw_logistic,
    ttw_poisson,
)


class TestClosedForms:
    """Identities of the selected-unit mean and propensity formulas."""

    def test_zero_odds_ratio_leaves_logodds(self):
        xb = np.array([-1.0, 0.0, 2.5])
        lam = np.array([0.2, 0.5, 0.9])
        out = logistic_selected_logodds(xb, np.zeros(3), np.log(lam), np.log1p(-lam))
        np.testing.assert_allclose(out, xb, atol=1e-12)

    def test_zero_odds_ratio_propensity_equals_lambda(self):
        lam = np.array([0.1, 0.4, 0.75])
        log_pi, log_not = logistic_log_propensity(np.array([0.3, -1.0, 2.0]), np.zeros(3), np.log(lam), np.log1p(-lam))
        np.testing.assert_allclose(np.exp(log_pi), lam, rtol=1e-12)
        np.testing.assert_allclose(np.exp(log_not), 1.0 - lam, rtol=1e-12)

    def test_propensity_sums_to_one(self):
        rng = np.random.default_rng(1)
        xb, omega, lin = rng.normal(size=(3, 50))
        log_pi, log_not = logistic_log_propensity(xb, omega, special.log_expit(lin), special.log_expit(-lin))
        np.testing.assert_allclose(np.exp(log_pi) + np.exp(log_not), 1.0, rtol=1e-12)

    def test_unit_rate_ratio_leaves_log_mean(self):
        xb = np.array([0.2, 1.5])
        pi = np.array([0.3, 0.8])
        out = poisson_selected_log_mean(xb, np.zeros(2), np.log(pi), np.log1p(-pi))
        np.testing.assert_allclose(out, xb, atol=1e-12)


class TestTtwLinear:
    """Linear outcome, partial and full likelihood."""

    def test_recovers_slope_where_complete_case_fails(self, homogeneous_linear_data):
        data = homogeneous_linear_data(n=40000)
        fit = ttw_linear(data)
        cca = fit_cca(data)
        assert fit.converged
        assert fit.coef("X") == pytest.approx(0.5, abs=0.08)
        assert abs(cca.coef("X") - 0.5) > 0.15
        assert fit.coef("eta_const") == pytest.approx(2.0, abs=0.6)

    def test_full_mode_agrees_with_partial(self, homogeneous_linear_data):
        data = homogeneous_linear_data(n=8000)
        partial = ttw_linear(data, mode="partial")
        full = ttw_linear(data, mode="full")
        assert full.coef("X") == pytest.approx(partial.coef("X"), abs=0.05)
        assert "ps_Z" in full.estimates.index
        assert "ps_Z" not in partial.estimates.index
        assert full.loglik >= partial.loglik - 1e-6

    def test_zero_bias_function_is_complete_case(self, homogeneous_linear_data):
        data = homogeneous_linear_data(n=3000)
        fit = ttw_linear(data, fix_eta_zero=True)
        cca = fit_cca(data)
        assert not any(name.startswith("eta_") for name in fit.estimates.index)
        np.testing.assert_allclose(fit.estimates[["const", "X"]], cca.estimates, atol=1e-5)

    def test_weak_instrument_inflates_standard_error(self, homogeneous_linear_data):
        weak = ttw_linear(homogeneous_linear_data(gamma_z=0.08))
        strong = ttw_linear(homogeneous_linear_data(gamma_z=0.95))
        assert weak.se("X") > 2 * strong.se("X")

    def test_probit_link(self, homogeneous_linear_data):
        fit = ttw_linear(homogeneous_linear_data(), link="probit")
        assert fit.coef("X") == pytest.approx(0.5, abs=0.15)

    def test_needs_selection_instrument(self, homogeneous_linear_data):
        data = homogeneous_linear_data(n=200).view(selection_instruments=())
        with pytest.raises(ConfigurationError):
            ttw_linear(data)

    def test_unknown_mode(self, homogeneous_linear_data):
        with pytest.raises(ConfigurationError):
            ttw_linear(homogeneous_linear_data(n=200), mode="joint")


class TestTtwLogistic:
    def test_recovers_slope(self, homogeneous_binary_data):
        fit = ttw_logistic(homogeneous_binary_data())
        assert fit.converged
        assert fit.coef("X") == pytest.approx(0.5, abs=0.12)
        assert np.isfinite(fit.se("eta_const"))

    def test_mean_propensity_matches_observed_fraction(self, homogeneous_binary_data):
        data = homogeneous_binary_data()
        fit = ttw_logistic(data)
        assert fit.extras["mean_propensity"] == pytest.approx(data.observed.mean(), abs=0.02)


class TestTtwPoisson:
    def test_recovers_slope(self, homogeneous_count_data):
        fit = ttw_poisson(homogeneous_count_data())
        assert fit.converged
        assert fit.coef("X") == pytest.approx(0.3, abs=0.08)

    def test_unit_rate_ratio_is_complete_case_poisson(self, homogeneous_count_data):
        data = homogeneous_count_data(n=3000)
        fit = ttw_poisson(data, fix_eta_zero=True)
        cca = fit_cca(data, "poisson")
        np.testing.assert_allclose(fit.estimates[["const", "X"]], cca.estimates, atol=1e-5)


def _logistic_loglik(data, theta):
    observed = data.observed
    X, _ = data.design(["X"])
    A, _ = data.design(["X", "Z"])
    xb, omega, lin = X @ theta[:2], X @ theta[2:4], A @ theta[4:]
    log_lam, log_not_lam = special.log_expit(lin), special.log_expit(-lin)
    lo = logistic_selected_logodds(xb[observed], omega[observed], log_lam[observed], log_not_lam[observed])
    y = data.column(data.outcome, observed)
    ll_y = np.sum(np.where(y > 0, special.log_expit(lo), special.log_expit(-lo)))
    log_pi, log_not_pi = logistic_log_propensity(xb, omega, log_lam, log_not_lam)
    return float(ll_y + np.sum(np.where(observed, log_pi, log_not_pi)))


def _poisson_loglik(data, theta):
    observed = data.observed
    X, _ = data.design(["X"])
    A, _ = data.design(["X", "Z"])
    lin = A @ theta[4:]
    log_mu = poisson_selected_log_mean(
        (X @ theta[:2])[observed],
        (X @ theta[2:4])[observed],
        special.log_expit(lin[observed]),
        special.log_expit(-lin[observed]),
    )
    y = data.column(data.outcome, observed)
    ll_y = np.sum(y * log_mu - np.exp(log_mu) - special.gammaln(y + 1.0))
    ll_r = np.sum(np.where(observed, special.log_expit(lin), special.log_expit(-lin)))
    return float(ll_y + ll_r)


def _linear_second_stage_loglik(data, params, one_minus_pi):
    observed = data.observed
    X, _ = data.design(["X"], observed)
    y = data.column(data.outcome, observed)
    beta, eta, sigma2 = params[:2], params[2:4], params[4]
    resid = y - X @ beta - (X @ eta) * one_minus_pi
    return float(np.sum(-LOG_SQRT_2PI - 0.5 * np.log(sigma2) - 0.5 * resid**2 / sigma2))


def _assert_stationary(loglik, theta):
    value = loglik(theta)
    assert np.linalg.norm(numerical_gradient(loglik, theta)) < 1e-5 * (1.0 + abs(value))


class TestScoreAtOptimum:
    """Finite-difference scores vanish at every fitted optimum."""

    def test_linear_partial(self, homogeneous_linear_data):
        data = homogeneous_linear_data(n=5000)
        fit = ttw_linear(data)
        _, pi_hat = fit_selection_model(data, ["X", "Z"])
        one_minus_pi = 1.0 - pi_hat[data.observed]
        _assert_stationary(
            lambda params: _linear_second_stage_loglik(data, params, one_minus_pi),
            fit.estimates.to_numpy(),
        )

    def test_logistic(self, homogeneous_binary_data):
        data = homogeneous_binary_data(n=5000)
        fit = ttw_logistic(data)
        theta = fit.extras["argmin"]
        assert _logistic_loglik(data, theta) == pytest.approx(fit.loglik, rel=1e-8)
        _assert_stationary(lambda t: _logistic_loglik(data, t), theta)

    def test_poisson(self, homogeneous_count_data):
        data = homogeneous_count_data(n=5000)
        fit = ttw_poisson(data)
        theta = fit.extras["argmin"]
        assert _poisson_loglik(data, theta) == pytest.approx(fit.loglik, rel=1e-8)
        _assert_stationary(lambda t: _poisson_loglik(data, t), theta)
