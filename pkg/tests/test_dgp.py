"""Tests for the simulation data-generating processes and intercept calibration."""

import math

import numpy as np
import pandas as pd
import pytest

from ivsel.dgp import (
    calibrate_alpha_r,
    generate,
    generate_mr,
    generate_regression,
    selection_intercept,
    variant_names,
)
from ivsel.errors import ConfigurationError
from ivsel.numkit import RngStream
from ivsel.scenarios import validate_scenario


def _regression(**fields):
    payload = {
        "name": "dgp",
        "n": 2000,
        "replications": 1,
        "base_seed": 42,
        "selection": {"alpha_R": -0.5, "beta_R": 0.5, "gamma_R": 0.4, "delta_R": 0.5},
    }
    payload.update(fields)
    return validate_scenario(payload)


def _mr(kind="mr_single", **mr):
    payload = {
        "name": "dgp_mr",
        "kind": kind,
        "n": 2000,
        "replications": 1,
        "base_seed": 7,
        "selection": {"alpha_R": 0.0, "gamma_R": 0.5, "delta_R": 1.0},
        "mr": {"K": 1 if kind == "mr_single" else 4},
    }
    payload["mr"].update(mr)
    return validate_scenario(payload)


class TestCalibration:
    """Selection intercept for a target observed fraction."""

    def test_baseline_intercept(self):
        scenario = _regression(
            target_observed_fraction=0.5,
            selection={"beta_R": 0.5, "gamma_R": 0.4, "delta_R": 0.5},
        )
        alpha_r = calibrate_alpha_r(scenario, 0.5, size=200_000)
        assert -0.55 <= alpha_r <= -0.45

    def test_generated_fraction_matches_target(self, override_settings):
        override_settings(calibration_size=50_000)
        scenario = _regression(
            n=20000,
            target_observed_fraction=0.3,
            selection={"beta_R": 0.5, "gamma_R": 0.4, "delta_R": 0.5},
        )
        data = generate_regression(scenario, RngStream(scenario.base_seed, 0))
        assert data.observed.mean() == pytest.approx(0.3, abs=0.02)

    def test_calibration_is_deterministic(self):
        scenario = _regression(
            target_observed_fraction=0.4,
            selection={"beta_R": 0.5, "gamma_R": 0.4, "delta_R": 0.5},
        )
        assert calibrate_alpha_r(scenario, 0.4, size=20_000) == calibrate_alpha_r(scenario, 0.4, size=20_000)

    def test_unattainable_target(self):
        scenario = _regression(selection={"alpha_R": 0.0, "beta_R": 50.0})
        with pytest.raises(ConfigurationError):
            calibrate_alpha_r(scenario, 0.9, size=20_000)

    def test_given_intercept_is_used(self):
        assert selection_intercept(_regression()) == -0.5


class TestRegressionDgp:
    """Regression populations with the outcome masked by selection."""

    def test_reproducible_by_stream(self):
        scenario = _regression()
        a = generate(scenario, RngStream(42, 3))
        b = generate(scenario, RngStream(42, 3))
        c = generate(scenario, RngStream(42, 4))
        pd.testing.assert_frame_equal(a.frame, b.frame)
        assert not a.frame.equals(c.frame)

    def test_masking_follows_indicator(self):
        data = generate_regression(_regression(), RngStream(42, 0))
        assert data.missing_on == ("Y",)
        np.testing.assert_array_equal(np.isnan(data.column("Y")), ~data.observed)
        assert not np.isnan(data.oracle["Y"]).any()

    def test_lognormal_error_mean(self):
        scenario = _regression(n=1_000_000, alpha=0.0, beta=0.0, error_dist="lognormal")
        data = generate_regression(scenario, RngStream(1, 0))
        assert data.oracle["Y"].mean() == pytest.approx(2.2456, abs=0.02)

    def test_binary_covariate_and_instrument(self):
        data = generate_regression(
            _regression(covariate_form="binary", instrument_form="binary", zx_effect=1.0),
            RngStream(2, 0),
        )
        assert set(np.unique(data.column("X"))) <= {0.0, 1.0}
        assert set(np.unique(data.column("Z"))) <= {0.0, 1.0}

    def test_count_outcome(self):
        scenario = _regression(outcome_family="poisson", methods=["cca", "ttw"], alpha=0.5)
        data = generate_regression(scenario, RngStream(2, 1))
        observed = data.column("Y", data.observed)
        assert np.all(observed >= 0) and np.all(observed == np.round(observed))

    def test_confounder_is_not_exposed(self):
        scenario = _regression(confounder={"lambda_Y": 0.5, "lambda_R": 0.5})
        data = generate_regression(scenario, RngStream(3, 0))
        assert "V" not in data.frame.columns

    def test_rejects_mr_scenario(self):
        with pytest.raises(ConfigurationError):
            generate_regression(_mr(), RngStream(0, 0))


class TestMrDgp:
    """Genotype populations for one- and two-sample designs."""

    def test_variant_names(self):
        assert variant_names(1) == ("G",)
        assert variant_names(3) == ("G1", "G2", "G3")

    def test_single_variant_explains_five_percent(self):
        scenario = _mr(missing_on="outcome").model_copy(update={"n": 1_000_000})
        data = generate_mr(scenario, RngStream(9, 0))
        r2 = np.corrcoef(data.column("G"), data.column("X"))[0, 1] ** 2
        assert 0.045 <= r2 <= 0.055
        assert math.isclose(scenario.mr.theta, 0.2)

    def test_both_columns_masked_together(self):
        data = generate_mr(_mr(missing_on="both"), RngStream(9, 1))
        missing_x = np.isnan(data.column("X"))
        np.testing.assert_array_equal(missing_x, np.isnan(data.column("Y")))
        np.testing.assert_array_equal(missing_x, ~data.observed)
        assert set(data.oracle.columns) == {"X", "Y"}

    def test_two_sample_masks_each_side(self):
        data_x, data_y = generate_mr(_mr(design="two_sample", missing_on="outcome"), RngStream(9, 2))
        assert not np.isnan(data_x.column("X")).any()
        assert not data_x.has_missing
        np.testing.assert_array_equal(np.isnan(data_y.column("Y")), ~data_y.observed)
        assert not data_x.frame["G"].equals(data_y.frame["G"])

    def test_binomial_genotypes_for_several_variants(self):
        scenario = _mr(kind="mr_multi", estimator="tsls")
        data = generate_mr(scenario, RngStream(9, 3))
        assert data.genetic_instruments == ("G1", "G2", "G3", "G4")
        for name in data.genetic_instruments:
            assert set(np.unique(data.column(name))) <= {0.0, 1.0, 2.0}

    def test_different_populations_use_heavier_tails(self):
        scenario = _mr(design="two_sample", populations="different").model_copy(update={"n": 50_000})
        data_x, data_y = generate_mr(scenario, RngStream(9, 4))
        assert data_y.column("G").var() > 1.5 * data_x.column("G").var()
