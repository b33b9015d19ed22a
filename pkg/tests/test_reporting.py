"""Tests for result tables and forest plots."""

import math

import pytest

from ivsel.errors import DomainError
from ivsel.mr import CausalEstimate
from ivsel.reporting import (
    emit_forest_plot,
    forest_rows,
    render_csv,
    render_json,
    render_markdown,
    report_table,
)
from ivsel.study import MethodSummary, SimulationReport


def _summary(method, mean, flagged=False):
    return MethodSummary(
        method=method,
        replications=10,
        n_converged=10 if mean is not None else 0,
        n_failed=0 if mean is not None else 10,
        mean=mean,
        median=mean,
        emp_sd=0.02 if mean is not None else None,
        mean_se=0.021 if mean is not None else None,
        median_se=0.02 if mean is not None else None,
        coverage=0.95 if mean is not None else None,
        rejection_rate=0.9 if mean is not None else None,
        flagged=flagged,
    )


@pytest.fixture
def report():
    return SimulationReport(
        scenario="demo",
        target_name="beta",
        target=0.1,
        replications=10,
        alpha_R=-0.5,
        summaries=(_summary("cca", 0.05), _summary("ttw", None, flagged=True)),
    )


class TestTables:
    def test_table_columns(self, report):
        frame = report_table([report])
        assert list(frame.columns)[:3] == ["scenario", "method", "mean"]
        assert "median" not in frame.columns
        assert "median" in report_table([report], median=True).columns

    def test_csv_marks_missing_values(self, report):
        text = render_csv([report])
        assert text.splitlines()[0].startswith("scenario,method,mean")
        assert ",NA," in text

    def test_markdown(self, report):
        text = render_markdown([report])
        assert "### demo" in text
        assert "| ttw * |" in text
        assert "-----" in text
        assert "true beta = 0.1" in text

    def test_json(self, report):
        payload = render_json([report])
        assert payload["reports"][0]["methods"][1]["mean"] is None

    def test_empty_report_list(self):
        assert report_table([]).empty


class TestForestPlot:
    """Forest plot rows and SVG output."""

    def test_rows_carry_intervals(self):
        (row,) = forest_rows([CausalEstimate(0.2, 0.05, "ivw")], ["ivw"])
        assert row.lower == pytest.approx(0.102, abs=1e-3)
        assert row.upper == pytest.approx(0.298, abs=1e-3)

    def test_non_finite_se_drops_interval(self):
        (row,) = forest_rows([CausalEstimate(0.2, math.nan, "tsls")], ["tsls"])
        assert not row.has_interval

    def test_empty_input(self):
        with pytest.raises(DomainError):
            forest_rows([], [])

    def test_label_count_must_match(self):
        with pytest.raises(DomainError):
            forest_rows([CausalEstimate(0.2, 0.05, "ivw")], ["a", "b"])

    def test_svg_is_reproducible(self, tmp_path):
        estimates = [CausalEstimate(0.2, 0.05, "cca"), CausalEstimate(0.15, math.nan, "ttw")]
        first = emit_forest_plot(estimates, ["cca", "ttw"], tmp_path / "a.svg", ["Z1", "Z2"])
        second = emit_forest_plot(estimates, ["cca", "ttw"], tmp_path / "b.svg", ["Z1", "Z2"])
        text = first.read_text(encoding="utf-8")
        assert "<svg" in text
        assert "SE not finite" in text
        assert text == second.read_text(encoding="utf-8")
