"""Heckman sample-selection estimators.

The outcome equation is ``Y = X'beta + e`` and units are selected when
``S'gamma + u > 0`` with ``(e, u)`` bivariate normal, ``Var(u) = 1`` and
correlation ``rho``. ``S`` holds the outcome covariates plus at least one
selection instrument that is excluded from the outcome equation.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import List, Optional, Sequence

import numpy as np
from scipy import special

from .bivariate import log_bivariate_normal_cdf
from .data import Dataset, FitResult
from .errors import (
    BoundaryWarning,
    ConfigurationError,
    DegenerateSelectionWarning,
    SingularDesignError,
    emit,
)
from .glm import fit_cca, fit_ols, fit_selection_model
from .mle import finish_mle
from .numkit import LOG_SQRT_2PI, OptimSettings, inverse_mills, least_squares, minimize

LOGGER = logging.getLogger(__name__)

RHO_START_BOUND = 0.95
ATANH_RHO_BOUNDARY = 5.0
LOGIT_PROBIT_SCALE = 1.6
SELECTION_PREFIX = "sel_"


def selection_columns(
    data: Dataset, selection_covariates: Optional[Sequence[str]] = None
) -> List[str]:
    """Selection-equation columns, defaulting to outcome covariates plus instruments."""
    clash = [z for z in data.selection_instruments if z in data.covariates]
    if clash:
        raise SingularDesignError(
            clash[0],
            f"selection instrument {clash[0]!r} also appears in the outcome equation; "
            "the selection model is then identified only through functional form",
        )
    if selection_covariates is None:
        columns = list(data.covariates) + list(data.selection_instruments)
    else:
        columns = list(selection_covariates)
    if not any(z in columns for z in data.selection_instruments):
        raise ConfigurationError(
            "selection model needs a selection instrument", field="selection_instruments"
        )
    return columns


def _degenerate(data: Dataset, method: str, kind: str = "linear") -> FitResult:
    note = emit(
        DegenerateSelectionWarning,
        "every unit is selected; falling back to the complete-case fit",
        stacklevel=4,
    )
    fit = fit_cca(data, kind) if kind != "linear" else fit_ols(data, data.observed)
    return dataclasses.replace(fit, method=method).with_warnings(note)


def heckman_two_step(
    data: Dataset, selection_covariates: Optional[Sequence[str]] = None
) -> FitResult:
    """Probit selection model, then OLS on the covariates plus the inverse Mills ratio.

    Standard errors are the naive second-stage ones; the fit is mainly a
    start point for :func:`heckman_mle`.
    """
    columns = selection_columns(data, selection_covariates)
    observed = data.observed
    if observed.all():
        return _degenerate(data, "heckman_two_step")

    selection_fit, _ = fit_selection_model(data, columns, link="probit")
    S, _ = data.design(columns)
    gamma = selection_fit.estimates.to_numpy()
    index = S @ gamma
    mills = inverse_mills(-index)

    X, names = data.design(data.covariates, observed)
    y = data.column(data.outcome, observed)
    design = np.column_stack([X, mills[observed]])
    try:
        ls = least_squares(design, y, column_names=[*names, "lambda"])
    except SingularDesignError as exc:
        if exc.column != "lambda":
            raise
        note = emit(
            DegenerateSelectionWarning,
            "inverse Mills ratio is collinear with the covariates; dropped",
            stacklevel=3,
        )
        return fit_ols(data, observed, method="heckman_two_step").with_warnings(note)

    lambda_coef = float(ls.coef[-1])
    delta = mills[observed] * (mills[observed] + index[observed])
    sigma2 = float(np.mean(ls.residuals**2) + lambda_coef**2 * np.mean(delta))
    sigma = float(np.sqrt(max(sigma2, 1e-12)))
    rho = float(np.clip(lambda_coef / sigma, -1.0, 1.0))

    return FitResult.from_covariance(
        [*names, "lambda"],
        ls.coef,
        ls.cov_classical,
        loglik=None,
        converged=selection_fit.converged,
        method="heckman_two_step",
        n_used=data.n,
        extras={
            "lambda": lambda_coef,
            "sigma": sigma,
            "rho": rho,
            "gamma": selection_fit.estimates.rename(lambda c: SELECTION_PREFIX + c),
        },
    )


def heckman_mle(
    data: Dataset,
    selection_covariates: Optional[Sequence[str]] = None,
    fix_rho: Optional[float] = None,
    settings: Optional[OptimSettings] = None,
) -> FitResult:
    """Full-information maximum likelihood for a continuous outcome.

    Optimises over ``(beta, gamma, log sigma, atanh rho)`` and maps the
    covariance back with the delta method. ``fix_rho`` holds the
    correlation at a given value and drops it from the parameter vector.
    """
    columns = selection_columns(data, selection_covariates)
    observed = data.observed
    if observed.all():
        return _degenerate(data, "heckman")
    if fix_rho is not None and not -1.0 < fix_rho < 1.0:
        raise ConfigurationError("fixed rho must lie strictly inside (-1, 1)", field="fix_rho")

    start_fit = heckman_two_step(data, columns)
    X_obs, names = data.design(data.covariates, observed)
    y_obs = data.column(data.outcome, observed)
    S, selection_names = data.design(columns)
    S_obs, S_mis = S[observed], S[~observed]
    p, q = X_obs.shape[1], S.shape[1]

    beta0 = start_fit.estimates[names].to_numpy()
    gamma0 = start_fit.extras["gamma"].to_numpy() if "gamma" in start_fit.extras else np.zeros(q)
    sigma0 = start_fit.extras.get("sigma", float(np.std(y_obs - X_obs @ beta0)))
    rho0 = start_fit.extras.get("rho", 0.0)
    start = [*beta0, *gamma0, np.log(sigma0)]
    if fix_rho is None:
        start.append(np.arctanh(np.clip(rho0, -RHO_START_BOUND, RHO_START_BOUND)))
    fixed_atanh = None if fix_rho is None else float(np.arctanh(fix_rho))

    def negloglik(theta: np.ndarray) -> float:
        beta = theta[:p]
        gamma = theta[p : p + q]
        log_sigma = theta[p + q]
        a = theta[p + q + 1] if fixed_atanh is None else fixed_atanh
        sigma = np.exp(log_sigma)
        resid = (y_obs - X_obs @ beta) / sigma
        # (index + rho * resid) / sqrt(1 - rho^2), with sqrt(1 - tanh^2) = 1 / cosh
        arg = (S_obs @ gamma) * np.cosh(a) + np.sinh(a) * resid
        ll_obs = -0.5 * resid**2 - LOG_SQRT_2PI - log_sigma + special.log_ndtr(arg)
        ll_mis = special.log_ndtr(-(S_mis @ gamma))
        return -float(np.sum(ll_obs) + np.sum(ll_mis))

    start = np.asarray(start, dtype=float)
    opt = minimize(negloglik, start, settings)
    theta = opt.argmin
    sigma = float(np.exp(theta[p + q]))
    out_names = [*names, *(SELECTION_PREFIX + c for c in selection_names), "sigma"]
    natural = [*theta[: p + q], sigma]
    jacobian = [*np.ones(p + q), sigma]
    notes: List[str] = []
    if fixed_atanh is None:
        a = float(theta[p + q + 1])
        rho = float(np.tanh(a))
        out_names.append("rho")
        natural.append(rho)
        jacobian.append(1.0 - rho**2)
        if abs(a) > ATANH_RHO_BOUNDARY:
            notes.append(
                emit(BoundaryWarning, f"correlation estimate {rho:.6f} is at the boundary", 2)
            )
    else:
        rho = float(fix_rho)

    fit = finish_mle(
        opt,
        out_names,
        np.asarray(natural),
        np.asarray(jacobian),
        method="heckman",
        n_used=data.n,
        warnings=notes,
        extras={
            "rho": rho,
            "sigma": sigma,
            "two_step": start_fit.estimates,
            "start_loglik": -negloglik(start),
        },
    )
    if not fit.converged:
        LOGGER.warning("heckman fit did not converge", extra={"method": "heckman"})
    return fit


def heckman_binary_mle(
    data: Dataset,
    selection_covariates: Optional[Sequence[str]] = None,
    fix_rho: Optional[float] = None,
    logit_scale: bool = False,
    settings: Optional[OptimSettings] = None,
) -> FitResult:
    """Bivariate probit with sample selection for a 0/1 outcome.

    Selected units with ``Y = 1`` contribute ``Phi2(x'beta, s'gamma; rho)``,
    those with ``Y = 0`` contribute ``Phi2(-x'beta, s'gamma; -rho)`` and the
    unselected ``Phi(-s'gamma)``. ``logit_scale`` multiplies the outcome
    coefficients (and their errors) by 1.6.
    """
    columns = selection_columns(data, selection_covariates)
    observed = data.observed
    if observed.all():
        return _degenerate(data, "heckman", kind="probit")
    if fix_rho is not None and not -1.0 < fix_rho < 1.0:
        raise ConfigurationError("fixed rho must lie strictly inside (-1, 1)", field="fix_rho")

    X_obs, names = data.design(data.covariates, observed)
    y_obs = data.column(data.outcome, observed)
    S, selection_names = data.design(columns)
    S_obs, S_mis = S[observed], S[~observed]
    p, q = X_obs.shape[1], S.shape[1]
    ones = y_obs == 1.0

    outcome_start = fit_cca(data, "probit").estimates[names].to_numpy()
    selection_start, _ = fit_selection_model(data, columns, link="probit")
    start = [*outcome_start, *selection_start.estimates.to_numpy()]
    if fix_rho is None:
        start.append(0.0)
    fixed_rho = None if fix_rho is None else float(fix_rho)

    def negloglik(theta: np.ndarray) -> float:
        xb = X_obs @ theta[:p]
        gamma = theta[p : p + q]
        rho = np.tanh(theta[p + q]) if fixed_rho is None else fixed_rho
        index = S_obs @ gamma
        sign = np.where(ones, 1.0, -1.0)
        ll_obs = log_bivariate_normal_cdf(sign * xb, index, sign * rho)
        ll_mis = special.log_ndtr(-(S_mis @ gamma))
        return -float(np.sum(ll_obs) + np.sum(ll_mis))

    start = np.asarray(start, dtype=float)
    opt = minimize(negloglik, start, settings)
    theta = opt.argmin
    scale = LOGIT_PROBIT_SCALE if logit_scale else 1.0
    out_names = [*names, *(SELECTION_PREFIX + c for c in selection_names)]
    natural = [*(scale * theta[:p]), *theta[p : p + q]]
    jacobian = [*np.full(p, scale), *np.ones(q)]
    notes: List[str] = []
    if fixed_rho is None:
        a = float(theta[p + q])
        rho = float(np.tanh(a))
        out_names.append("rho")
        natural.append(rho)
        jacobian.append(1.0 - rho**2)
        if abs(a) > ATANH_RHO_BOUNDARY:
            notes.append(
                emit(BoundaryWarning, f"correlation estimate {rho:.6f} is at the boundary", 2)
            )
    else:
        rho = fixed_rho

    return finish_mle(
        opt,
        out_names,
        np.asarray(natural),
        np.asarray(jacobian),
        method="heckman",
        n_used=data.n,
        warnings=notes,
        extras={"rho": rho, "start_loglik": -negloglik(start)},
    )


__all__ = ["selection_columns", "heckman_two_step", "heckman_mle", "heckman_binary_mle"]
