"""Turn a likelihood optimum into a :class:`FitResult`."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from . import metrics
from .data import FitResult
from .numkit import OptimResult, delta_method, invert_hessian

LOGGER = logging.getLogger(__name__)


def finish_mle(
    opt: OptimResult,
    names: Sequence[str],
    natural: np.ndarray,
    jacobian_diagonal: np.ndarray,
    method: str,
    n_used: int,
    warnings: Sequence[str] = (),
    extras: dict | None = None,
) -> FitResult:
    """Covariance from the inverse Hessian of the negative log-likelihood.

    ``natural`` holds the estimates on the reported scale and
    ``jacobian_diagonal`` the derivatives of that map at the optimum.
    A Hessian that is not positive definite marks the fit unconverged.
    """
    notes = list(warnings)
    converged = opt.converged
    inverse = invert_hessian(opt.hessian)
    if inverse is None:
        covariance = None
        if converged:
            notes.append("Hessian at the optimum is not positive definite")
        converged = False
    else:
        covariance = delta_method(inverse, jacobian_diagonal)

    if not opt.converged:
        notes.append(f"optimizer did not converge: {opt.message}")

    metrics.record_fit(method, converged)
    LOGGER.debug(
        "likelihood fit finished",
        extra={"method": method, "iterations": opt.iterations},
    )
    return FitResult.from_covariance(
        names,
        natural,
        covariance,
        loglik=-float(opt.objective_value),
        converged=converged,
        method=method,
        n_used=n_used,
        iterations=opt.iterations,
        warnings=tuple(notes),
        extras=dict(extras or {}, gradient_norm=opt.gradient_norm, argmin=opt.argmin),
    )


__all__ = ["finish_mle"]
