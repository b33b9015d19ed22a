"""Tests for the dataset container and the complete-case, IPW and oracle fits."""

import numpy as np
import pandas as pd
import pytest
from scipy.special import expit
from scipy.stats import norm

from ivsel.data import Dataset
from ivsel.errors import DatasetError, InsufficientDataError
from ivsel.glm import (
    fit_cca,
    fit_glm,
    fit_ipw,
    fit_logistic,
    fit_ols,
    fit_oracle,
    fit_poisson,
    fit_probit,
    fit_selection_model,
)


class TestDataset:
    """Role checks and the missingness contract."""

    def test_missing_column(self):
        frame = pd.DataFrame({"X": [1.0, 2.0], "Y": [1.0, 2.0], "R": [1, 1]})
        with pytest.raises(DatasetError, match="Z"):
            Dataset(frame)

    def test_missingness_must_follow_indicator(self):
        frame = pd.DataFrame({"X": [1.0, 2.0], "Z": [0.0, 1.0], "Y": [1.0, np.nan], "R": [1, 1]})
        with pytest.raises(DatasetError, match="row 1"):
            Dataset(frame)

    def test_indicator_must_be_binary(self):
        frame = pd.DataFrame({"X": [1.0], "Z": [0.0], "Y": [1.0], "R": [2]})
        with pytest.raises(DatasetError):
            Dataset(frame)

    def test_covariates_fully_observed(self):
        frame = pd.DataFrame({"X": [np.nan, 2.0], "Z": [0.0, 1.0], "Y": [1.0, 2.0], "R": [1, 1]})
        with pytest.raises(DatasetError, match="X"):
            Dataset(frame)

    def test_unmasked_restores_oracle(self, mar_data):
        data = mar_data(n=200)
        full = data.unmasked()
        assert not full.has_missing
        assert not np.isnan(full.column("Y")).any()

    def test_unmasked_needs_oracle(self, complete_data):
        with pytest.raises(DatasetError):
            complete_data().unmasked()


class TestCompleteCase:
    """Complete-case fits."""

    def test_no_missingness_matches_ols(self, complete_data):
        data = complete_data()
        cca = fit_cca(data)
        ols = fit_ols(data)
        np.testing.assert_allclose(cca.estimates, ols.estimates, rtol=1e-12)
        assert cca.method == "cca"
        assert cca.n_used == data.n

    def test_unbiased_under_covariate_dependent_missingness(self, mar_data):
        fit = fit_cca(mar_data())
        assert fit.coef("X") == pytest.approx(0.5, abs=4 * fit.se("X"))

    def test_too_few_rows(self):
        frame = pd.DataFrame(
            {"X": [1.0, 2.0, 3.0], "Z": [0.0, 1.0, 0.0], "Y": [1.0, np.nan, np.nan], "R": [1, 0, 0]}
        )
        with pytest.raises(InsufficientDataError):
            fit_cca(Dataset(frame))

    def test_logistic_null_slope(self):
        rng = np.random.default_rng(8)
        n = 5000
        frame = pd.DataFrame(
            {"X": rng.normal(size=n), "Z": rng.normal(size=n), "Y": rng.integers(0, 2, n).astype(float)}
        )
        frame["R"] = 1
        fit = fit_cca(Dataset(frame), "logistic")
        assert abs(fit.coef("X")) < 3 * fit.se("X")

    def test_logistic_response_must_be_binary(self, complete_data):
        with pytest.raises(DatasetError):
            fit_glm(complete_data(), "logistic")

    def test_poisson_recovers_coefficients(self):
        rng = np.random.default_rng(9)
        n = 20000
        x = rng.normal(size=n)
        y = rng.poisson(np.exp(0.5 + 0.3 * x)).astype(float)
        frame = pd.DataFrame({"X": x, "Z": rng.normal(size=n), "Y": y, "R": 1})
        fit = fit_cca(Dataset(frame), "poisson")
        assert fit.coef("X") == pytest.approx(0.3, abs=0.03)
        assert fit.converged


def _binary_frame(seed, n, link):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    index = -0.3 + 0.6 * x
    p = norm.cdf(index) if link == "probit" else expit(index)
    frame = pd.DataFrame({"X": x, "Z": rng.normal(size=n), "Y": (rng.uniform(size=n) < p).astype(float)})
    frame["R"] = 1
    return Dataset(frame)


def _design(data):
    X, _ = data.design(data.covariates)
    return X, data.column(data.outcome)


class TestGeneralizedLinearFits:
    """IRLS fits solve their score equations."""

    def test_probit_recovers_coefficients(self):
        fit = fit_probit(_binary_frame(12, 20000, "probit"))
        assert fit.method == "probit"
        assert fit.converged
        assert fit.coef("const") == pytest.approx(-0.3, abs=0.04)
        assert fit.coef("X") == pytest.approx(0.6, abs=0.04)

    def test_logistic_and_probit_agree_in_sign(self):
        data = _binary_frame(13, 5000, "logit")
        logistic, probit = fit_logistic(data), fit_probit(data)
        assert np.array_equal(np.sign(logistic.estimates), np.sign(probit.estimates))
        # logit coefficients run about 1.6 times the probit ones
        assert 1.4 < logistic.coef("X") / probit.coef("X") < 1.9

    def test_logistic_score_vanishes(self):
        data = _binary_frame(14, 5000, "logit")
        X, y = _design(data)
        beta = fit_logistic(data).estimates.to_numpy()
        score = X.T @ (y - expit(X @ beta))
        assert np.linalg.norm(score) < 1e-6 * data.n

    def test_probit_score_vanishes(self):
        data = _binary_frame(15, 5000, "probit")
        X, y = _design(data)
        index = X @ fit_probit(data).estimates.to_numpy()
        cdf, pdf = norm.cdf(index), norm.pdf(index)
        score = X.T @ ((y - cdf) * pdf / (cdf * (1.0 - cdf)))
        assert np.linalg.norm(score) < 1e-6 * data.n

    def test_poisson_score_vanishes(self):
        rng = np.random.default_rng(16)
        n = 5000
        x = rng.normal(size=n)
        frame = pd.DataFrame({"X": x, "Z": rng.normal(size=n), "Y": rng.poisson(np.exp(0.2 + 0.4 * x)).astype(float)})
        frame["R"] = 1
        data = Dataset(frame)
        X, y = _design(data)
        beta = fit_poisson(data).estimates.to_numpy()
        assert np.linalg.norm(X.T @ (y - np.exp(X @ beta))) < 1e-6 * n


class TestInverseProbabilityWeighting:
    """IPW with a logistic weight model."""

    def test_complete_data_weights_are_one(self, complete_data):
        data = complete_data()
        ipw = fit_ipw(data)
        cca = fit_cca(data)
        np.testing.assert_allclose(ipw.estimates, cca.estimates, rtol=1e-12)

    def test_corrects_covariate_dependent_missingness(self, mar_data):
        data = mar_data()
        fit = fit_ipw(data)
        assert fit.method == "ipw"
        assert fit.coef("X") == pytest.approx(0.5, abs=4 * fit.se("X"))

    def test_weight_covariate_must_be_observed(self, mar_data):
        with pytest.raises(DatasetError):
            fit_ipw(mar_data(n=300), weight_covariates=["Y"])

    def test_selection_model_probabilities(self, mar_data):
        data = mar_data(n=5000)
        fit, probabilities = fit_selection_model(data, ["X"])
        assert probabilities.shape == (data.n,)
        assert np.all((probabilities > 0) & (probabilities < 1))
        assert fit.coef("X") == pytest.approx(1.0, abs=0.15)


class TestOracle:
    """Benchmark fits on the unmasked data."""

    def test_uses_every_row(self, mar_data):
        data = mar_data(n=2000)
        fit = fit_oracle(data)
        assert fit.n_used == data.n
        np.testing.assert_allclose(fit.estimates, fit_ols(data.unmasked()).estimates, rtol=1e-12)
