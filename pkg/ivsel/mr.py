"""Mendelian-randomization estimators with selection adjustment.

Variant associations with a partially observed exposure or outcome are
estimated with one of the adjusters (complete cases, inverse-probability
weighting, Heckman, TTW, or the unmasked oracle) and combined by the Wald
ratio, two-stage least squares or the inverse-variance-weighted formula.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import config
from .data import Z95, Dataset, FitResult
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DatasetError,
    DomainError,
    IvselError,
    SampleOverlapWarning,
    UnreliableBootstrapWarning,
    WaldRatioError,
    WeakDenominatorWarning,
    emit,
)
from .glm import fit_cca, fit_ipw, fit_ols, fit_oracle, fit_selection_model
from .heckman import heckman_mle
from .numkit import RngStream, least_squares
from .ttw import ttw_linear

LOGGER = logging.getLogger(__name__)

Adjuster = Literal["cca", "ipw", "heckman", "ttw", "oracle"]
Variable = Literal["exposure", "outcome"]

ADJUSTERS: Tuple[str, ...] = ("cca", "ipw", "heckman", "ttw", "oracle")
BOOTSTRAP_FAILURE_LIMIT = 0.20
FITTED_EXPOSURE = "_fitted_exposure"


@dataclass(frozen=True)
class CausalEstimate:
    theta_hat: float
    se: float
    method: str
    n_bootstrap: Optional[int] = None
    warnings: Tuple[str, ...] = ()
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def ci95(self) -> Tuple[float, float]:
        return self.theta_hat - Z95 * self.se, self.theta_hat + Z95 * self.se

    def to_dict(self) -> Dict[str, Any]:
        def clean(value: float) -> Optional[float]:
            return float(value) if math.isfinite(value) else None

        lo, hi = self.ci95
        return {
            "method": self.method,
            "theta_hat": clean(self.theta_hat),
            "se": clean(self.se),
            "ci95": [clean(lo), clean(hi)],
            "n_bootstrap": self.n_bootstrap,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class SummaryStats:
    """Per-variant exposure and outcome associations."""

    variants: Tuple[str, ...]
    bx: np.ndarray
    sx: np.ndarray
    by: np.ndarray
    sy: np.ndarray
    provenance: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        k = len(self.variants)
        if k < 1:
            raise DomainError("summary statistics need at least one variant")
        for name in ("bx", "sx", "by", "sy"):
            values = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if values.shape != (k,) or not np.all(np.isfinite(values)):
                raise DomainError(f"{name} must hold {k} finite values")
            object.__setattr__(self, name, values)
        if np.any(self.sx < 0):
            raise DomainError("exposure standard errors must be non-negative")
        if np.any(self.sy <= 0):
            raise DomainError("outcome standard errors must be positive")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"variant": list(self.variants), "bx": self.bx, "sx": self.sx, "by": self.by, "sy": self.sy}
        )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, provenance: Optional[Dict[str, str]] = None) -> "SummaryStats":
        missing = [c for c in ("variant", "bx", "sx", "by", "sy") if c not in frame.columns]
        if missing:
            raise DatasetError(f"summary statistics are missing columns {missing}")
        return cls(
            tuple(str(v) for v in frame["variant"]),
            frame["bx"].to_numpy(dtype=float),
            frame["sx"].to_numpy(dtype=float),
            frame["by"].to_numpy(dtype=float),
            frame["sy"].to_numpy(dtype=float),
            dict(provenance or {}),
        )


# ---------------------------------------------------------------------------
# Wald ratio and IVW
# ---------------------------------------------------------------------------


def wald_ratio(bx: float, sx: float, by: float, sy: float, method: str = "wald") -> CausalEstimate:
    """Ratio estimate with the second-order standard error."""
    if bx == 0:
        raise WaldRatioError("Wald ratio is undefined for a zero exposure association")
    theta = by / bx
    se = math.sqrt(sy**2 / bx**2 + by**2 * sx**2 / bx**4)
    notes: Tuple[str, ...] = ()
    if abs(bx) < 2.0 * sx:
        notes = (
            emit(
                WeakDenominatorWarning,
                f"exposure association {bx:.4g} is within two standard errors ({sx:.4g}) of zero",
            ),
        )
    return CausalEstimate(theta, se, method, warnings=notes)


def ivw(stats: SummaryStats, method: str = "ivw") -> CausalEstimate:
    """Inverse-variance-weighted estimate with the first-order standard error."""
    precision = stats.sy**-2.0
    denominator = float(np.sum(stats.bx**2 * precision))
    if denominator == 0:
        raise WaldRatioError("all exposure associations are zero")
    theta = float(np.sum(stats.bx * stats.by * precision)) / denominator
    return CausalEstimate(theta, 1.0 / math.sqrt(denominator), method)


# ---------------------------------------------------------------------------
# Adjusted associations
# ---------------------------------------------------------------------------


def _target(data: Dataset, variable: Variable) -> str:
    if variable == "exposure":
        if not data.exposure:
            raise DatasetError("dataset has no exposure column")
        return data.exposure
    if variable == "outcome":
        return data.outcome
    raise ConfigurationError(f"unknown variable {variable!r}", field="variable")


def _is_missing(data: Dataset, column: str) -> bool:
    return column in data.missing_on and data.has_missing


def _complete_analysis_columns(data: Dataset, exclude: Sequence[str]) -> List[str]:
    candidates = [data.exposure, data.outcome]
    return [
        c
        for c in dict.fromkeys(c for c in candidates if c)
        if c not in exclude and c not in data.missing_on and not data.frame[c].isna().any()
    ]


def _adjusted_fit(view: Dataset, adjuster: str, weight_columns: Sequence[str]) -> FitResult:
    if adjuster == "cca":
        return fit_cca(view, "linear")
    if adjuster == "ipw":
        return fit_ipw(view, "linear", weight_covariates=weight_columns)
    if adjuster in ("heckman", "ttw") and not view.selection_instruments:
        raise ConfigurationError(
            f"adjuster {adjuster!r} needs a selection instrument", field="selection_instruments"
        )
    if adjuster == "heckman":
        return heckman_mle(view)
    if adjuster == "ttw":
        return ttw_linear(view)
    raise ConfigurationError(f"unknown adjuster {adjuster!r}", field="adjuster")


def association_fit(
    data: Dataset,
    variable: Variable,
    variant: str,
    adjuster: Adjuster,
    adjust_for: Sequence[str] = (),
) -> FitResult:
    """Regression of the exposure or outcome on a variant under an adjuster.

    A target with no missing values is fitted by plain OLS whatever the
    adjuster. ``adjust_for`` adds further variant columns to the model.
    """
    if adjuster not in ADJUSTERS:
        raise ConfigurationError(f"unknown adjuster {adjuster!r}", field="adjuster")
    target = _target(data, variable)
    columns = (variant, *adjust_for)
    for column in columns:
        if column not in data.frame.columns:
            raise DatasetError(f"variant column {column!r} not found")
    view = data.view(outcome=target, covariates=columns)

    if adjuster == "oracle":
        if data.oracle is not None:
            return fit_oracle(view)
        if _is_missing(data, target):
            raise DatasetError(f"oracle fit of {target!r} needs its values before masking")
        return fit_ols(view, subset=np.ones(view.n, dtype=bool), method="oracle")
    if not _is_missing(data, target):
        return fit_ols(view, subset=np.ones(view.n, dtype=bool))

    weight_columns = [*columns, *_complete_analysis_columns(data, exclude=(target,))]
    fit = _adjusted_fit(view, adjuster, weight_columns)
    if not fit.converged:
        raise ConvergenceError(f"{adjuster} fit of {target} on {variant} did not converge")
    return fit


def adjusted_association(
    data: Dataset,
    variable: Variable,
    variant: str,
    adjuster: Adjuster,
    adjust_for: Sequence[str] = (),
) -> Tuple[float, float]:
    fit = association_fit(data, variable, variant, adjuster, adjust_for)
    return fit.coef(variant), fit.se(variant)


def selection_adjusted_summary_stats(
    data_x: Dataset,
    data_y: Optional[Dataset],
    adjuster: Adjuster,
    adjust_for_correlated: bool = False,
) -> SummaryStats:
    """Variant-by-variant adjusted associations for the IVW formula.

    ``data_y=None`` (or the same object) is the one-sample route, which
    warns about sample overlap.
    """
    one_sample = data_y is None or data_y is data_x
    if one_sample:
        emit(SampleOverlapWarning, "exposure and outcome associations come from the same sample", 2)
        data_y = data_x
    assert data_y is not None
    variants = tuple(data_x.genetic_instruments)
    if not variants:
        raise DatasetError("no genetic instruments declared")
    if set(variants) != set(data_y.genetic_instruments):
        raise DatasetError(
            f"variant mismatch between samples: {sorted(set(variants) ^ set(data_y.genetic_instruments))}"
        )

    bx, sx, by, sy = [], [], [], []
    for variant in variants:
        others = tuple(v for v in variants if v != variant) if adjust_for_correlated else ()
        b, s = adjusted_association(data_x, "exposure", variant, adjuster, others)
        bx.append(b)
        sx.append(s)
        b, s = adjusted_association(data_y, "outcome", variant, adjuster, others)
        by.append(b)
        sy.append(s)
    return SummaryStats(
        variants,
        np.array(bx),
        np.array(sx),
        np.array(by),
        np.array(sy),
        provenance={"exposure": adjuster, "outcome": adjuster, "design": "one_sample" if one_sample else "two_sample"},
    )


# ---------------------------------------------------------------------------
# Two-stage least squares
# ---------------------------------------------------------------------------


def _closed_form_tsls(
    G: np.ndarray, x: np.ndarray, y: np.ndarray, weights: Optional[np.ndarray], names: List[str]
) -> Tuple[float, float]:
    first = least_squares(G, x, weights=weights, column_names=names)
    x_hat = G @ first.coef
    design_hat = np.column_stack([np.ones_like(x_hat), x_hat])
    second = least_squares(design_hat, y, weights=weights, column_names=["const", "exposure"])
    theta = float(second.coef[1])
    resid = y - second.coef[0] - theta * x
    if weights is None:
        sigma2 = float(resid @ resid) / (len(y) - design_hat.shape[1])
        variance = sigma2 * float(second.bread[1, 1])
    else:
        scores = design_hat * (weights * resid)[:, None]
        cov = second.bread @ (scores.T @ scores) @ second.bread
        variance = float(cov[1, 1])
    return theta, math.sqrt(variance)


def _tsls_point(data: Dataset, adjuster: str) -> float:
    """Two-stage point estimate with the adjusted stage(s) where values are missing."""
    variants = list(data.genetic_instruments)
    exposure = data.exposure
    assert exposure is not None
    G, _ = data.design(variants)

    if _is_missing(data, exposure):
        first = association_fit(data, "exposure", variants[0], adjuster, variants[1:])
        coef = first.estimates[["const", *variants]].to_numpy()
    else:
        first_ls = least_squares(G, data.column(exposure), column_names=["const", *variants])
        coef = first_ls.coef
    frame = data.frame.copy()
    frame[FITTED_EXPOSURE] = G @ coef
    staged = data.view(frame=frame, oracle=data.oracle)

    if _is_missing(data, data.outcome):
        second = association_fit(staged, "outcome", FITTED_EXPOSURE, adjuster)
        return second.coef(FITTED_EXPOSURE)
    second_ls = least_squares(
        np.column_stack([np.ones(data.n), frame[FITTED_EXPOSURE].to_numpy()]),
        data.column(data.outcome),
    )
    return float(second_ls.coef[1])


def tsls(
    data: Dataset,
    adjuster: Adjuster,
    n_bootstrap: Optional[int] = None,
    stream: Optional[RngStream] = None,
) -> CausalEstimate:
    """Selection-adjusted two-stage least squares.

    ``cca``, ``ipw`` and ``oracle`` use the closed form with the usual
    first-stage-aware standard error (HC0 sandwich for IPW). ``heckman`` and
    ``ttw`` replace the stage whose response is missing and take the standard
    deviation of ``n_bootstrap`` resampled re-fits as the standard error;
    resampling happens before any missingness filtering.
    """
    if adjuster not in ADJUSTERS:
        raise ConfigurationError(f"unknown adjuster {adjuster!r}", field="adjuster")
    variants = list(data.genetic_instruments)
    if not variants or not data.exposure:
        raise DatasetError("two-stage least squares needs genetic instruments and an exposure")
    exposure = data.exposure
    names = ["const", *variants]

    if adjuster in ("cca", "ipw", "oracle"):
        source = data.unmasked() if adjuster == "oracle" and data.has_missing else data
        rows = np.ones(source.n, dtype=bool)
        weights = None
        if adjuster != "oracle" and source.has_missing:
            rows = source.observed
            if adjuster == "ipw":
                columns = [*variants, *_complete_analysis_columns(source, exclude=())]
                _, probabilities = fit_selection_model(source, columns, link="logit")
                weights = 1.0 / probabilities[rows]
        G, _ = source.design(variants, rows)
        theta, se = _closed_form_tsls(
            G, source.column(exposure, rows), source.column(source.outcome, rows), weights, names
        )
        return CausalEstimate(theta, se, f"tsls_{adjuster}")

    if stream is None:
        raise ConfigurationError("bootstrap standard errors need a random stream", field="stream")
    replicates = config.settings.bootstrap_size if n_bootstrap is None else int(n_bootstrap)
    if replicates < 2:
        raise ConfigurationError("at least two bootstrap replicates are needed", field="n_bootstrap")

    theta = _tsls_point(data, adjuster)
    draws: List[float] = []
    failures = 0
    for j in range(replicates):
        child = stream.child(j)
        rows = np.minimum((child.uniform(data.n) * data.n).astype(np.int64), data.n - 1)
        try:
            draws.append(_tsls_point(data.take(rows), adjuster))
        except (IvselError, np.linalg.LinAlgError) as exc:
            failures += 1
            LOGGER.debug("bootstrap replicate failed: %s", exc, extra={"method": adjuster, "replication": j})

    notes: Tuple[str, ...] = ()
    if failures > BOOTSTRAP_FAILURE_LIMIT * replicates:
        notes = (
            emit(
                UnreliableBootstrapWarning,
                f"{failures} of {replicates} bootstrap replicates failed",
                2,
            ),
        )
    se = float(np.std(draws, ddof=1)) if len(draws) >= 2 else float("nan")
    return CausalEstimate(
        theta,
        se,
        f"tsls_{adjuster}",
        n_bootstrap=replicates,
        warnings=notes,
        extras={"bootstrap_failures": failures},
    )


__all__ = [
    "ADJUSTERS",
    "CausalEstimate",
    "SummaryStats",
    "wald_ratio",
    "ivw",
    "association_fit",
    "adjusted_association",
    "selection_adjusted_summary_stats",
    "tsls",
]
