"""Tests for replication, aggregation and sweeps."""

import math

import pytest

from ivsel.dgp import generate
from ivsel.errors import ConfigurationError
from ivsel.heckman import heckman_binary_mle
from ivsel.numkit import RngStream
from ivsel.scenarios import validate_scenario
from ivsel.study import (
    SWEEP_SEED_STRIDE,
    MethodOutcome,
    run_replication,
    run_study,
    summarize,
    sweep,
)


def _scenario(**fields):
    payload = {
        "name": "small",
        "n": 600,
        "replications": 4,
        "base_seed": 5,
        "methods": ["cca", "ipw", "oracle"],
        "selection": {"alpha_R": 0.0, "beta_R": 0.5, "gamma_R": 0.4, "delta_R": 0.5},
    }
    payload.update(fields)
    return validate_scenario(payload)


def _ok(estimate, se=0.1):
    return MethodOutcome("cca", estimate, se, True)


class TestSummarize:
    """Per-method metrics over replications."""

    def test_known_values(self):
        summary = summarize("cca", [_ok(0.9), _ok(1.1)], target=1.0)
        assert summary.mean == pytest.approx(1.0)
        assert summary.median == pytest.approx(1.0)
        assert summary.emp_sd == pytest.approx(math.sqrt(0.02))
        assert summary.mean_se == pytest.approx(0.1)
        assert summary.coverage == 1.0
        assert summary.rejection_rate == 1.0
        assert not summary.flagged

    def test_single_replication_has_no_spread(self):
        summary = summarize("cca", [_ok(0.5)], target=0.5)
        assert summary.emp_sd is None
        assert summary.mean == 0.5

    def test_failures_excluded_and_flagged(self):
        outcomes = [_ok(1.0)] * 9 + [MethodOutcome("cca", math.nan, math.nan, False, "boom")]
        summary = summarize("cca", outcomes, target=1.0)
        assert summary.n_converged == 9
        assert summary.n_failed == 1
        assert summary.flagged
        assert summary.mean == pytest.approx(1.0)

    def test_unconverged_estimate_excluded(self):
        outcomes = [_ok(1.0), _ok(1.0), MethodOutcome("cca", 50.0, 0.1, False)]
        assert summarize("cca", outcomes, target=1.0).mean == pytest.approx(1.0)

    def test_all_failed(self):
        summary = summarize("ttw", [MethodOutcome("ttw", math.nan, math.nan, False)], target=0.1)
        assert summary.mean is None and summary.coverage is None
        assert summary.flagged

    def test_missing_standard_errors_skip_coverage(self):
        summary = summarize("cca", [_ok(1.0, math.nan), _ok(1.2, math.nan)], target=1.0)
        assert summary.mean == pytest.approx(1.1)
        assert summary.coverage is None and summary.rejection_rate is None


class TestReplication:
    def test_failed_fit_is_recorded(self):
        # almost nobody is selected
        result = run_replication(_scenario(), -40.0, ("cca",), 0)
        (outcome,) = result.outcomes
        assert not outcome.converged
        assert "InsufficientDataError" in outcome.error

    def test_binary_heckman_reports_probit_scale(self):
        scenario = _scenario(outcome_family="logistic", n=3000)
        result = run_replication(scenario, 0.0, ("heckman",), 2)
        (outcome,) = result.outcomes
        data = generate(scenario, RngStream(scenario.base_seed, 2), 0.0)
        assert outcome.estimate == pytest.approx(heckman_binary_mle(data).coef("X"), rel=1e-10)

    def test_outcomes_follow_method_order(self):
        result = run_replication(_scenario(), 0.0, ("oracle", "cca"), 1)
        assert [o.method for o in result.outcomes] == ["oracle", "cca"]


class TestRunStudy:
    """Whole studies and their reproducibility."""

    def test_report_shape(self):
        report = run_study(_scenario())
        assert report.replications == 4
        assert [s.method for s in report.summaries] == ["cca", "ipw", "oracle"]
        assert report.target_name == "beta"
        assert report.alpha_R == 0.0
        assert report.summary("oracle").n_converged == 4
        with pytest.raises(KeyError):
            report.summary("heckman")

    def test_parallelism_does_not_change_results(self):
        scenario = _scenario()
        assert run_study(scenario, parallelism=1) == run_study(scenario, parallelism=2)

    def test_method_subset(self):
        report = run_study(_scenario(), methods=["oracle"])
        assert [s.method for s in report.summaries] == ["oracle"]
        assert report.config["methods"] == ["oracle"]

    def test_invalid_parallelism(self):
        with pytest.raises(ConfigurationError):
            run_study(_scenario(), parallelism=0)

    def test_mr_study(self):
        scenario = validate_scenario(
            {
                "name": "mr_small",
                "kind": "mr_single",
                "n": 3000,
                "replications": 2,
                "base_seed": 3,
                "methods": ["cca", "oracle"],
                "selection": {"alpha_R": 0.0, "gamma_R": 0.5, "delta_R": 1.0},
                "mr": {"K": 1},
            }
        )
        report = run_study(scenario)
        assert report.target == 0.2
        assert report.summary("oracle").n_converged == 2

    def test_frame_and_dict(self):
        report = run_study(_scenario(replications=2))
        frame = report.to_frame()
        assert list(frame["method"]) == ["cca", "ipw", "oracle"]
        payload = report.to_dict()
        assert "elapsed_s" not in payload
        assert payload["config"]["name"] == "small"


class TestSweep:
    """One study per parameter value."""

    def test_empty_grid(self):
        assert sweep(_scenario(), "selection.gamma_R", []) == []

    def test_unknown_parameter(self):
        with pytest.raises(ConfigurationError):
            sweep(_scenario(), "selection.omega_R", [1.0])

    def test_values_seeds_and_names(self):
        reports = sweep(_scenario(replications=2), "selection.gamma_R", [0.2, 0.8], methods=["oracle"])
        assert [r.sweep_value for r in reports] == [0.2, 0.8]
        assert all(r.sweep_parameter == "selection.gamma_R" for r in reports)
        assert reports[1].config["base_seed"] == 5 + SWEEP_SEED_STRIDE
        assert reports[1].config["selection"]["gamma_R"] == 0.8
        assert reports[0].scenario == "small[selection.gamma_R=0.2]"
