"""Baseline regression fits: OLS, logistic, Poisson and probit.

These serve as the complete-case, inverse-probability-weighted and oracle
estimators, and supply starting values for the selection-adjusted models.
"""

from __future__ import annotations

import logging
import warnings
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
import statsmodels.api as sm
from statsmodels.tools.sm_exceptions import PerfectSeparationError

from . import metrics
from .data import Dataset, FitResult
from .errors import (
    DatasetError,
    InsufficientDataError,
    SeparationError,
    UnstableWeightsError,
)
from .numkit import check_rank, least_squares

LOGGER = logging.getLogger(__name__)

ModelKind = Literal["linear", "logistic", "poisson", "probit"]

SEPARATION_BOUND = 30.0
MIN_PROPENSITY = 1e-6
IRLS_TOL = 1e-10
IRLS_MAXITER = 100


def _subset_mask(data: Dataset, subset: Optional[np.ndarray]) -> np.ndarray:
    if subset is None:
        return data.response_present()
    mask = np.asarray(subset, dtype=bool)
    if mask.shape != (data.n,):
        raise ValueError("subset mask must have one entry per row")
    if np.any(~data.response_present()[mask]):
        raise DatasetError(f"response {data.outcome!r} is missing on the requested subset")
    return mask


def fit_ols(
    data: Dataset,
    subset: Optional[np.ndarray] = None,
    weights: Optional[np.ndarray] = None,
    method: str = "ols",
) -> FitResult:
    """OLS with classical standard errors, or the HC0 sandwich when weighted."""
    mask = _subset_mask(data, subset)
    X, names = data.design(data.covariates, mask)
    y = data.column(data.outcome, mask)
    fit = least_squares(X, y, weights=weights, column_names=names)
    covariance = fit.cov_classical if weights is None else fit.cov_sandwich
    n_used = int(mask.sum())
    sigma2_ml = float(np.mean(fit.residuals**2)) if weights is None else fit.sigma2
    loglik = -0.5 * n_used * (np.log(2 * np.pi * sigma2_ml) + 1.0)
    metrics.record_fit(method, True)
    return FitResult.from_covariance(
        names,
        fit.coef,
        covariance,
        loglik=float(loglik),
        converged=True,
        method=method,
        n_used=n_used,
        extras={"sigma2": fit.sigma2},
    )


def _family(kind: ModelKind) -> sm.families.Family:
    if kind == "logistic":
        return sm.families.Binomial()
    if kind == "probit":
        return sm.families.Binomial(link=sm.families.links.Probit())
    if kind == "poisson":
        return sm.families.Poisson()
    raise ValueError(f"no GLM family for model kind {kind!r}")


def _check_response(y: np.ndarray, kind: ModelKind, name: str) -> None:
    if kind in ("logistic", "probit") and not np.isin(y, (0.0, 1.0)).all():
        raise DatasetError(f"{kind} response {name!r} must be 0/1")
    if kind == "poisson" and np.any(y < 0):
        raise DatasetError(f"poisson response {name!r} must be non-negative")


def _fit_glm_arrays(
    y: np.ndarray,
    X: np.ndarray,
    names: Sequence[str],
    kind: ModelKind,
    weights: Optional[np.ndarray],
    method: str,
):
    check_rank(X, names)
    model = sm.GLM(y, X, family=_family(kind), var_weights=weights)
    cov_type = "nonrobust" if weights is None else "HC0"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = model.fit(method="IRLS", tol=IRLS_TOL, maxiter=IRLS_MAXITER, cov_type=cov_type)
    except PerfectSeparationError as exc:
        metrics.record_fit(method, False)
        raise SeparationError(f"{method}: perfect separation detected") from exc

    params = np.asarray(result.params, dtype=float)
    if kind in ("logistic", "probit") and np.max(np.abs(params)) > SEPARATION_BOUND:
        metrics.record_fit(method, False)
        raise SeparationError(
            f"{method}: coefficient magnitude {np.max(np.abs(params)):.1f} exceeds "
            f"{SEPARATION_BOUND:g}; the response is (quasi-)separated"
        )
    return result


def _glm_fit_result(result, names, method: str, n_used: int) -> FitResult:
    converged = bool(getattr(result, "converged", True))
    history = getattr(result, "fit_history", {}) or {}
    iterations = int(history.get("iteration", 0))
    metrics.record_fit(method, converged)
    return FitResult.from_covariance(
        names,
        result.params,
        result.cov_params(),
        loglik=float(result.llf),
        converged=converged,
        method=method,
        n_used=n_used,
        iterations=iterations,
    )


def fit_glm(
    data: Dataset,
    kind: ModelKind,
    subset: Optional[np.ndarray] = None,
    weights: Optional[np.ndarray] = None,
    method: Optional[str] = None,
) -> FitResult:
    """IRLS fit of a binary or count response; HC0 covariance when weighted."""
    mask = _subset_mask(data, subset)
    X, names = data.design(data.covariates, mask)
    y = data.column(data.outcome, mask)
    _check_response(y, kind, data.outcome)
    if weights is not None and np.any(np.asarray(weights) <= 0):
        raise ValueError("weights must be positive")
    tag = method or kind
    result = _fit_glm_arrays(y, X, names, kind, weights, tag)
    return _glm_fit_result(result, names, tag, int(mask.sum()))


def fit_logistic(data, subset=None, weights=None) -> FitResult:
    return fit_glm(data, "logistic", subset, weights)


def fit_poisson(data, subset=None, weights=None) -> FitResult:
    return fit_glm(data, "poisson", subset, weights)


def fit_probit(data, subset=None) -> FitResult:
    return fit_glm(data, "probit", subset)


def fit_model(
    data: Dataset,
    kind: ModelKind,
    subset: Optional[np.ndarray] = None,
    weights: Optional[np.ndarray] = None,
    method: Optional[str] = None,
) -> FitResult:
    if kind == "linear":
        return fit_ols(data, subset, weights, method=method or "ols")
    return fit_glm(data, kind, subset, weights, method)


def fit_selection_model(
    data: Dataset,
    columns: Sequence[str],
    link: Literal["logit", "probit"] = "logit",
) -> Tuple[FitResult, np.ndarray]:
    """Binary regression of the selection indicator on ``columns`` over all rows.

    Returns the fit and the fitted selection probabilities.
    """
    X, names = data.design(columns)
    r = data.column(data.selection)
    kind: ModelKind = "logistic" if link == "logit" else "probit"
    result = _fit_glm_arrays(r, X, names, kind, None, f"selection_{link}")
    fit = _glm_fit_result(result, names, f"selection_{link}", data.n)
    return fit, np.asarray(result.fittedvalues, dtype=float)


def _min_rows(data: Dataset) -> int:
    return len(data.covariates) + 1 + 2


def fit_cca(data: Dataset, model_kind: ModelKind = "linear") -> FitResult:
    """Complete-case fit on rows with ``R == 1``."""
    mask = data.observed & data.response_present()
    if int(mask.sum()) < _min_rows(data):
        raise InsufficientDataError(
            f"complete-case fit needs at least {_min_rows(data)} complete rows, got {int(mask.sum())}"
        )
    return fit_model(data, model_kind, subset=mask, method="cca")


def fit_ipw(
    data: Dataset,
    model_kind: ModelKind = "linear",
    weight_covariates: Optional[Sequence[str]] = None,
    include_instrument: bool = False,
) -> FitResult:
    """Inverse-probability-weighted complete-case fit.

    The weight model is a logistic regression of the selection indicator on
    ``weight_covariates`` (the outcome covariates by default). Standard errors
    are HC0 sandwich with the weights treated as known.
    """
    columns = list(weight_covariates if weight_covariates is not None else data.covariates)
    if include_instrument:
        columns += [z for z in data.selection_instruments if z not in columns]
    for column in columns:
        if data.frame[column].isna().any():
            raise DatasetError(f"weight covariate {column!r} must be fully observed")

    observed = data.observed
    if int(observed.sum()) < _min_rows(data):
        raise InsufficientDataError("too few selected rows for an inverse-probability fit")

    if observed.all():
        probabilities = np.ones(data.n)
    else:
        _, probabilities = fit_selection_model(data, columns, link="logit")

    selected = probabilities[observed]
    min_prob = float(selected.min())
    if min_prob < MIN_PROPENSITY:
        metrics.record_fit("ipw", False)
        raise UnstableWeightsError(min_prob)

    weights = 1.0 / selected
    fit = fit_model(data, model_kind, subset=observed, weights=weights, method="ipw")
    LOGGER.debug("ipw fit", extra={"method": "ipw", "iterations": fit.iterations})
    return fit


def fit_oracle(data: Dataset, model_kind: ModelKind = "linear") -> FitResult:
    """Benchmark fit on the data before missingness was applied."""
    full = data.unmasked()
    return fit_model(full, model_kind, subset=np.ones(full.n, dtype=bool), method="oracle")


__all__ = [
    "ModelKind",
    "fit_ols",
    "fit_glm",
    "fit_logistic",
    "fit_poisson",
    "fit_probit",
    "fit_model",
    "fit_selection_model",
    "fit_cca",
    "fit_ipw",
    "fit_oracle",
]
