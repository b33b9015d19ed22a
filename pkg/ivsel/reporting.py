"""Result tables (CSV, JSON, Markdown) and forest plots."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .errors import DomainError  # noqa: E402
from .io import SCHEMA_VERSION, frame_to_csv, write_text_atomic  # noqa: E402
from .mr import CausalEstimate  # noqa: E402
from .study import SimulationReport  # noqa: E402

LOGGER = logging.getLogger(__name__)

_LOCATION = {False: ("mean", "mean_se"), True: ("median", "median_se")}
_HEADERS = {
    "mean": "Mean",
    "median": "Median",
    "emp_sd": "Emp SD",
    "mean_se": "StdErr",
    "median_se": "StdErr",
    "coverage": "Cover",
    "rejection_rate": "Power",
    "n_failed": "Failed",
}


def report_table(reports: Sequence[SimulationReport], median: bool = False) -> pd.DataFrame:
    """One row per (scenario, method) with the location columns chosen by ``median``."""
    location, scale = _LOCATION[median]
    frames = [report.to_frame() for report in reports]
    if not frames:
        return pd.DataFrame(columns=["scenario", "method", location, "emp_sd", scale])
    frame = pd.concat(frames, ignore_index=True)
    sweep_columns = [c for c in frame.columns if c not in _all_summary_columns()]
    columns = [
        *sweep_columns,
        "method",
        location,
        "emp_sd",
        scale,
        "coverage",
        "rejection_rate",
        "n_converged",
        "n_failed",
        "flagged",
    ]
    return frame[columns]


def _all_summary_columns() -> List[str]:
    return [
        "method",
        "replications",
        "n_converged",
        "n_failed",
        "mean",
        "median",
        "emp_sd",
        "mean_se",
        "median_se",
        "coverage",
        "rejection_rate",
        "flagged",
    ]


def render_csv(reports: Sequence[SimulationReport], median: bool = False) -> str:
    return frame_to_csv(report_table(reports, median))


def render_json(reports: Sequence[SimulationReport]) -> Dict[str, Any]:
    return {"schema_version": SCHEMA_VERSION, "reports": [report.to_dict() for report in reports]}


def _cell(value: Any) -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return "-----"
    if isinstance(value, bool):
        return "yes" if value else ""
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def render_markdown(reports: Sequence[SimulationReport], median: bool = False) -> str:
    location, scale = _LOCATION[median]
    columns = [location, "emp_sd", scale, "coverage", "rejection_rate", "n_failed"]
    blocks: List[str] = []
    for report in reports:
        title = f"### {report.scenario}"
        if report.sweep_parameter is not None:
            title += f" ({report.sweep_parameter} = {report.sweep_value:g})"
        header = "| Method | " + " | ".join(_HEADERS[c] for c in columns) + " |"
        rule = "|---" * (len(columns) + 1) + "|"
        lines = [title, "", header, rule]
        for item in report.summaries:
            values = item.to_dict()
            label = item.method + (" *" if item.flagged else "")
            lines.append("| " + " | ".join([label, *(_cell(values[c]) for c in columns)]) + " |")
        lines.append("")
        lines.append(f"{report.replications} replications; true {report.target_name} = {report.target:g}.")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


# ---------------------------------------------------------------------------
# Forest plot
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForestRow:
    label: str
    instrument: str
    estimate: float
    lower: Optional[float]
    upper: Optional[float]

    @property
    def has_interval(self) -> bool:
        return self.lower is not None and self.upper is not None


def forest_rows(
    estimates: Sequence[CausalEstimate],
    labels: Sequence[str],
    instruments: Optional[Sequence[str]] = None,
) -> List[ForestRow]:
    if not estimates:
        raise DomainError("a forest plot needs at least one estimate")
    if len(labels) != len(estimates):
        raise DomainError("one label per estimate is required")
    instruments = list(instruments) if instruments is not None else ["none"] * len(estimates)
    if len(instruments) != len(estimates):
        raise DomainError("one instrument label per estimate is required")

    rows = []
    for estimate, label, instrument in zip(estimates, labels, instruments):
        if not math.isfinite(estimate.theta_hat):
            raise DomainError(f"estimate {label!r} is not finite")
        lower, upper = estimate.ci95
        if math.isfinite(estimate.se):
            rows.append(ForestRow(label, instrument, estimate.theta_hat, lower, upper))
        else:
            rows.append(ForestRow(label, instrument, estimate.theta_hat, None, None))
    return rows


def emit_forest_plot(
    estimates: Sequence[CausalEstimate],
    labels: Sequence[str],
    out_path: str | Path,
    instruments: Optional[Sequence[str]] = None,
) -> Path:
    """SVG with one row per estimate: point, 95% whisker and a dashed zero line.

    Rows are coloured by instrument label. An estimate without a finite
    standard error is drawn as a bare point with a note.
    """
    rows = forest_rows(estimates, labels, instruments)
    palette = plt.get_cmap("tab10")
    keys = list(dict.fromkeys(row.instrument for row in rows))
    colours = {key: palette(i % 10) for i, key in enumerate(keys)}

    lows = [row.lower if row.has_interval else row.estimate for row in rows]
    highs = [row.upper if row.has_interval else row.estimate for row in rows]
    lo, hi = min(min(lows), 0.0), max(max(highs), 0.0)
    pad = 0.05 * (hi - lo) if hi > lo else 0.1

    with plt.rc_context({"svg.hashsalt": "ivsel", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.0, 1.5 + 0.45 * len(rows)))
        positions = list(range(len(rows) - 1, -1, -1))
        for y, row in zip(positions, rows):
            colour = colours[row.instrument]
            if row.has_interval:
                assert row.lower is not None and row.upper is not None
                ax.errorbar(
                    row.estimate,
                    y,
                    xerr=[[row.estimate - row.lower], [row.upper - row.estimate]],
                    fmt="o",
                    color=colour,
                    capsize=3,
                    gid=f"estimate-{y}",
                )
            else:
                ax.plot(row.estimate, y, "o", color=colour, gid=f"estimate-{y}")
                ax.annotate(
                    "SE not finite",
                    (row.estimate, y),
                    xytext=(6, 4),
                    textcoords="offset points",
                    fontsize=8,
                )
        ax.axvline(0.0, color="grey", linestyle="--", linewidth=1)
        ax.set_yticks(positions)
        ax.set_yticklabels([row.label for row in rows])
        ax.set_xlim(lo - pad, hi + pad)
        ax.set_ylim(-0.75, len(rows) - 0.25)
        ax.set_xlabel("causal effect estimate (95% CI)")
        if len(keys) > 1:
            handles = [plt.Line2D([], [], marker="o", linestyle="", color=colours[k]) for k in keys]
            ax.legend(handles, keys, title="instrument", fontsize=8, loc="best")
        fig.tight_layout()
        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
        plt.close(fig)

    written = write_text_atomic(out_path, buffer.getvalue())
    LOGGER.info("forest plot written", extra={"path": str(written)})
    return written


__all__ = [
    "report_table",
    "render_csv",
    "render_json",
    "render_markdown",
    "ForestRow",
    "forest_rows",
    "emit_forest_plot",
]
