"""Maximum-likelihood estimators under homogeneous selection bias.

The difference between selected and unselected units (a mean shift for
linear outcomes, a log-odds ratio for binary outcomes, a rate ratio for
counts) is assumed to depend on the covariates only, never on the selection
instrument. That restriction identifies the outcome regression from the
selected units together with the selection indicator of everyone.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np
from scipy import special

from .data import Dataset, FitResult
from .errors import ConfigurationError, IdentificationWarning, OverflowGuardError, emit
from .glm import fit_cca, fit_selection_model
from .mle import finish_mle
from .numkit import LOG_SQRT_2PI, OptimSettings, minimize

LOGGER = logging.getLogger(__name__)

Link = Literal["logit", "probit"]
Mode = Literal["partial", "full"]

LINEAR_PREDICTOR_CAP = 30.0
IDENTIFICATION_SD = 1e-3
ETA_PREFIX = "eta_"
PS_PREFIX = "ps_"
LAMBDA_PREFIX = "lambda_"


def _log_link(link: Link) -> Callable[[np.ndarray], np.ndarray]:
    """log F(t) for the propensity link; log(1 - F(t)) is the same call at -t."""
    if link == "logit":
        return special.log_expit
    if link == "probit":
        return special.log_ndtr
    raise ConfigurationError(f"unknown propensity link {link!r}", field="link")


def _propensity_columns(data: Dataset) -> List[str]:
    if not data.selection_instruments:
        raise ConfigurationError(
            "homogeneous-selection fits need a selection instrument", field="selection_instruments"
        )
    return [*data.covariates, *(z for z in data.selection_instruments if z not in data.covariates)]


def _bernoulli_loglik(r: np.ndarray, log_p: np.ndarray, log_q: np.ndarray) -> float:
    return float(np.sum(np.where(r > 0, log_p, log_q)))


# ---------------------------------------------------------------------------
# Linear outcome
# ---------------------------------------------------------------------------


def ttw_linear(
    data: Dataset,
    mode: Mode = "partial",
    link: Link = "logit",
    fix_eta_zero: bool = False,
    settings: Optional[OptimSettings] = None,
) -> FitResult:
    """Linear regression with selection bias ``delta(X) = X'eta``.

    Among selected units ``E(Y | X, Z) = X'beta + X'eta (1 - pi(X, Z))``.
    Partial mode plugs in the propensity from a first-stage binary
    regression and reports standard errors from the second stage alone; the
    reported log-likelihood still includes the first-stage term so that it
    is comparable with full mode. Full mode optimises everything jointly,
    starting from the partial solution.
    """
    if mode not in ("partial", "full"):
        raise ConfigurationError(f"unknown mode {mode!r}", field="mode")
    log_f = _log_link(link)
    observed = data.observed
    r = observed.astype(float)
    X, names = data.design(data.covariates)
    A, ps_names = data.design(_propensity_columns(data))
    X_obs = X[observed]
    y_obs = data.column(data.outcome, observed)
    p = X.shape[1]
    n_eta = 0 if fix_eta_zero else p

    cca = fit_cca(data, "linear")
    stage1, pi_hat = fit_selection_model(data, _propensity_columns(data), link)
    alpha_hat = stage1.estimates.to_numpy()

    notes: List[str] = []
    spread = float(np.std(1.0 - pi_hat[observed]))
    if spread < IDENTIFICATION_SD:
        notes.append(
            emit(
                IdentificationWarning,
                f"selection probabilities barely vary (sd {spread:.2e}); "
                "the bias function is confounded with the intercept",
                2,
            )
        )

    def outcome_negll(theta: np.ndarray, one_minus_pi: np.ndarray) -> float:
        beta = theta[:p]
        eta = theta[p : p + n_eta]
        log_s2 = theta[p + n_eta]
        mean = X_obs @ beta
        if n_eta:
            mean = mean + (X_obs @ eta) * one_minus_pi
        resid = y_obs - mean
        return float(
            np.sum(LOG_SQRT_2PI + 0.5 * log_s2 + 0.5 * resid**2 * np.exp(-log_s2))
        )

    def selection_negll(alpha: np.ndarray) -> float:
        lin = A @ alpha
        return -_bernoulli_loglik(r, log_f(lin), log_f(-lin))

    start = np.array(
        [*cca.estimates.to_numpy(), *np.zeros(n_eta), np.log(cca.extras["sigma2"])], dtype=float
    )
    one_minus_hat = 1.0 - pi_hat[observed]
    opt = minimize(lambda th: outcome_negll(th, one_minus_hat), start, settings)

    out_names = [*names, *(ETA_PREFIX + c for c in names[:n_eta]), "sigma2"]
    stage1_loglik = -selection_negll(alpha_hat)

    if mode == "partial":
        theta = opt.argmin
        sigma2 = float(np.exp(theta[p + n_eta]))
        natural = np.array([*theta[: p + n_eta], sigma2])
        jacobian = np.array([*np.ones(p + n_eta), sigma2])
        fit = finish_mle(
            opt,
            out_names,
            natural,
            jacobian,
            "ttw",
            data.n,
            notes,
            extras={"mode": mode, "propensity": alpha_hat},
        )
        return dataclasses.replace(fit, loglik=fit.loglik + stage1_loglik)

    k = p + n_eta + 1

    def joint_negll(theta: np.ndarray) -> float:
        alpha = theta[k:]
        lin = A @ alpha
        one_minus_pi = np.exp(log_f(-lin[observed]))
        return outcome_negll(theta[:k], one_minus_pi) + selection_negll(alpha)

    joint_start = np.concatenate([opt.argmin, alpha_hat])
    joint = minimize(joint_negll, joint_start, settings)
    theta = joint.argmin
    sigma2 = float(np.exp(theta[p + n_eta]))
    natural = np.array([*theta[: p + n_eta], sigma2, *theta[k:]])
    jacobian = np.array([*np.ones(p + n_eta), sigma2, *np.ones(len(ps_names))])
    return finish_mle(
        joint,
        [*out_names, *(PS_PREFIX + c for c in ps_names)],
        natural,
        jacobian,
        "ttw",
        data.n,
        notes,
        extras={"mode": mode},
    )


# ---------------------------------------------------------------------------
# Binary outcome
# ---------------------------------------------------------------------------


def logistic_selected_logodds(xb, omega, log_lam, log_one_minus_lam) -> np.ndarray:
    """Log-odds of ``Y = 1`` among selected units."""
    return xb + omega - np.logaddexp(omega + log_lam, log_one_minus_lam)


def logistic_log_propensity(xb, omega, log_lam, log_one_minus_lam) -> Tuple[np.ndarray, np.ndarray]:
    """``(log pi, log(1 - pi))`` with ``pi = (1 - p) lam + p expit(omega + logit lam)``."""
    shifted = omega + log_lam - log_one_minus_lam
    log_pi = np.logaddexp(special.log_expit(-xb) + log_lam, special.log_expit(xb) + special.log_expit(shifted))
    log_not = np.logaddexp(
        special.log_expit(-xb) + log_one_minus_lam,
        special.log_expit(xb) + special.log_expit(-shifted),
    )
    return log_pi, log_not


def ttw_logistic(
    data: Dataset,
    link: Link = "logit",
    fix_eta_zero: bool = False,
    settings: Optional[OptimSettings] = None,
) -> FitResult:
    """Logistic regression with a log-odds-ratio selection function ``omega(X) = X'eta``.

    ``lambda(X, Z) = P(R = 1 | X, Z, Y = 0)`` carries the link. All
    parameters are estimated jointly since the outcome coefficients enter
    both the outcome and the selection factors.
    """
    log_f = _log_link(link)
    observed = data.observed
    r = observed.astype(float)
    X, names = data.design(data.covariates)
    ps_columns = _propensity_columns(data)
    A, ps_names = data.design(ps_columns)
    y_obs = data.column(data.outcome, observed)
    p, m = X.shape[1], A.shape[1]
    n_eta = 0 if fix_eta_zero else p

    beta0 = fit_cca(data, "logistic").estimates.to_numpy()
    stage1, _ = fit_selection_model(data, ps_columns, link)
    start = np.array([*beta0, *np.zeros(n_eta), *stage1.estimates.to_numpy()], dtype=float)

    def parts(theta: np.ndarray):
        xb = X @ theta[:p]
        omega = X @ theta[p : p + n_eta] if n_eta else np.zeros_like(xb)
        lin = A @ theta[p + n_eta :]
        return xb, omega, log_f(lin), log_f(-lin)

    def negll(theta: np.ndarray) -> float:
        xb, omega, log_lam, log_not_lam = parts(theta)
        lo = logistic_selected_logodds(
            xb[observed], omega[observed], log_lam[observed], log_not_lam[observed]
        )
        ll_y = _bernoulli_loglik(y_obs, special.log_expit(lo), special.log_expit(-lo))
        log_pi, log_not_pi = logistic_log_propensity(xb, omega, log_lam, log_not_lam)
        return -(ll_y + _bernoulli_loglik(r, log_pi, log_not_pi))

    opt = minimize(negll, start, settings)
    out_names = [*names, *(ETA_PREFIX + c for c in names[:n_eta]), *(LAMBDA_PREFIX + c for c in ps_names)]
    log_pi, _ = logistic_log_propensity(*parts(opt.argmin))
    return finish_mle(
        opt,
        out_names,
        opt.argmin.copy(),
        np.ones(p + n_eta + m),
        "ttw",
        data.n,
        extras={"link": link, "mean_propensity": float(np.mean(np.exp(log_pi)))},
    )


# ---------------------------------------------------------------------------
# Count outcome
# ---------------------------------------------------------------------------


def poisson_selected_log_mean(xb, log_nu, log_pi, log_one_minus_pi) -> np.ndarray:
    """``log E(Y | X, Z, R = 1) = X'beta + log nu - log(nu pi + 1 - pi)``."""
    return xb + log_nu - np.logaddexp(log_nu + log_pi, log_one_minus_pi)


def ttw_poisson(
    data: Dataset,
    link: Link = "logit",
    fix_eta_zero: bool = False,
    settings: Optional[OptimSettings] = None,
) -> FitResult:
    """Poisson regression with a rate-ratio selection function ``log nu(X) = X'eta``.

    The log mean is capped at 30 inside the likelihood;
    :class:`OverflowGuardError` is raised when the cap binds at the optimum.
    """
    log_f = _log_link(link)
    observed = data.observed
    r = observed.astype(float)
    X, names = data.design(data.covariates)
    ps_columns = _propensity_columns(data)
    A, ps_names = data.design(ps_columns)
    X_obs, A_obs = X[observed], A[observed]
    y_obs = data.column(data.outcome, observed)
    log_y_factorial = special.gammaln(y_obs + 1.0)
    p, m = X.shape[1], A.shape[1]
    n_eta = 0 if fix_eta_zero else p

    beta0 = fit_cca(data, "poisson").estimates.to_numpy()
    stage1, _ = fit_selection_model(data, ps_columns, link)
    start = np.array([*beta0, *np.zeros(n_eta), *stage1.estimates.to_numpy()], dtype=float)

    def log_mean(theta: np.ndarray) -> np.ndarray:
        xb = X_obs @ theta[:p]
        log_nu = X_obs @ theta[p : p + n_eta] if n_eta else np.zeros_like(xb)
        lin = A_obs @ theta[p + n_eta :]
        return poisson_selected_log_mean(xb, log_nu, log_f(lin), log_f(-lin))

    def negll(theta: np.ndarray) -> float:
        eta_lin = np.minimum(log_mean(theta), LINEAR_PREDICTOR_CAP)
        ll_y = float(np.sum(y_obs * eta_lin - np.exp(eta_lin) - log_y_factorial))
        lin = A @ theta[p + n_eta :]
        return -(ll_y + _bernoulli_loglik(r, log_f(lin), log_f(-lin)))

    opt = minimize(negll, start, settings)
    peak = float(np.max(log_mean(opt.argmin))) if y_obs.size else 0.0
    if peak > LINEAR_PREDICTOR_CAP:
        raise OverflowGuardError(
            f"log mean {peak:.1f} exceeds the cap {LINEAR_PREDICTOR_CAP:g} at the optimum"
        )

    out_names = [*names, *(ETA_PREFIX + c for c in names[:n_eta]), *(PS_PREFIX + c for c in ps_names)]
    return finish_mle(
        opt,
        out_names,
        opt.argmin.copy(),
        np.ones(p + n_eta + m),
        "ttw",
        data.n,
        extras={"link": link},
    )


__all__ = [
    "ttw_linear",
    "ttw_logistic",
    "ttw_poisson",
    "logistic_selected_logodds",
    "logistic_log_propensity",
    "poisson_selected_log_mean",
]
