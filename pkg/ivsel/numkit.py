"""Numerical building blocks shared by every estimator.

Special functions, reproducible random streams, an unconstrained quasi-Newton
minimiser with finite-difference derivatives and a dense least-squares solver.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize, special, stats
from statsmodels.tools.numdiff import approx_fprime, approx_hess3

from . import metrics
from .errors import ConfigurationError, DomainError, InsufficientDataError, SingularDesignError

LOGGER = logging.getLogger(__name__)

MACHINE_EPS = float(np.finfo(float).eps)
GRADIENT_STEP = MACHINE_EPS ** (1.0 / 3.0)
HESSIAN_STEP = MACHINE_EPS**0.25
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Uniform draws live on a 2**-52 grid shifted by half a cell, so 0 and 1 never occur.
_UNIFORM_GRID = float(2**52)


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - LOG_SQRT_2PI)


def normal_cdf(x):
    return special.ndtr(np.asarray(x, dtype=float))


def log_normal_cdf(x):
    return special.log_ndtr(np.asarray(x, dtype=float))


def normal_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("normal_quantile requires 0 < p < 1")
    return special.ndtri(p)


def inverse_mills(capital_lambda):
    """Hazard of the standard normal, phi(L) / (1 - Phi(L)).

    Evaluated in log space, which stays finite deep into both tails.
    """
    value = np.asarray(capital_lambda, dtype=float)
    return np.exp(-0.5 * value * value - LOG_SQRT_2PI - special.log_ndtr(-value))


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


class RngStream:
    """Deterministic random source keyed by ``(base_seed, stream_index)``.

    ``numpy.random.SeedSequence`` mixes the index into the generator state, so
    streams with distinct indices are independent. ``child`` derives further
    substreams (bootstrap replicates, calibration draws) without touching the
    parent's sequence.
    """

    def __init__(self, base_seed: int, stream_index: int = 0, path: Tuple[int, ...] = ()) -> None:
        if base_seed < 0 or stream_index < 0 or any(p < 0 for p in path):
            raise ConfigurationError("seeds and stream indices must be non-negative")
        self.base_seed = int(base_seed)
        self.stream_index = int(stream_index)
        self.path = tuple(int(p) for p in path)
        sequence = np.random.SeedSequence(
            entropy=self.base_seed, spawn_key=(self.stream_index, *self.path)
        )
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.base_seed, self.stream_index, (*self.path, index))

    def uniform(self, size: int | Tuple[int, ...]) -> np.ndarray:
        """Uniform draws on the open interval (0, 1)."""
        raw = self._generator.random(size)
        return (np.floor(raw * _UNIFORM_GRID) + 0.5) / _UNIFORM_GRID

    def __repr__(self) -> str:
        return f"RngStream(base_seed={self.base_seed}, stream_index={self.stream_index}, path={self.path})"


def sample_uniform(stream: RngStream, lo: float, hi: float, n: int | None = None):
    if not hi > lo:
        raise ConfigurationError(f"uniform bounds must satisfy lo < hi (got {lo}, {hi})")
    u = stream.uniform(1 if n is None else n)
    draws = lo + (hi - lo) * u
    return float(draws[0]) if n is None else draws


def sample_normal(stream: RngStream, n: int, mean: float = 0.0, sd: float = 1.0) -> np.ndarray:
    if sd <= 0:
        raise ConfigurationError(f"normal sd must be positive (got {sd})")
    return mean + sd * special.ndtri(stream.uniform(n))


def sample_bernoulli(stream: RngStream, p) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise ConfigurationError("bernoulli probabilities must lie in [0, 1]")
    return (stream.uniform(p.shape) < p).astype(np.int64)


def sample_binomial2(stream: RngStream, f, n: int) -> np.ndarray:
    """Allele counts in {0, 1, 2} for frequency ``f`` (scalar or per-unit)."""
    f = np.broadcast_to(np.asarray(f, dtype=float), (n,))
    if np.any(f < 0.0) or np.any(f > 1.0):
        raise ConfigurationError("allele frequency must lie in [0, 1]")
    first = stream.uniform(n) < f
    second = stream.uniform(n) < f
    return first.astype(np.int64) + second.astype(np.int64)


def sample_t(stream: RngStream, df: float, n: int) -> np.ndarray:
    if df <= 0:
        raise ConfigurationError(f"t degrees of freedom must be positive (got {df})")
    return special.stdtrit(df, stream.uniform(n))


def sample_lognormal(stream: RngStream, mu: float, sigma2: float, n: int) -> np.ndarray:
    if sigma2 <= 0:
        raise ConfigurationError(f"log-normal sigma2 must be positive (got {sigma2})")
    return np.exp(mu + math.sqrt(sigma2) * special.ndtri(stream.uniform(n)))


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean: float
    sd: float


def sample_normal_mixture(
    stream: RngStream, components: Sequence[MixtureComponent], n: int
) -> np.ndarray:
    if not components:
        raise ConfigurationError("mixture needs at least one component")
    weights = np.array([c.weight for c in components], dtype=float)
    if np.any(weights < 0) or not math.isclose(weights.sum(), 1.0, abs_tol=1e-9):
        raise ConfigurationError("mixture weights must be non-negative and sum to 1")
    if any(c.sd <= 0 for c in components):
        raise ConfigurationError("mixture component sd must be positive")

    chooser = stream.uniform(n)
    noise = special.ndtri(stream.uniform(n))
    edges = np.cumsum(weights)
    edges[-1] = 1.0
    index = np.searchsorted(edges, chooser, side="right")
    means = np.array([c.mean for c in components])[index]
    sds = np.array([c.sd for c in components])[index]
    return means + sds * noise


def sample_poisson(stream: RngStream, rate) -> np.ndarray:
    rate = np.atleast_1d(np.asarray(rate, dtype=float))
    if np.any(~np.isfinite(rate)) or np.any(rate < 0):
        raise ConfigurationError("poisson rate must be finite and non-negative")
    return stats.poisson.ppf(stream.uniform(rate.shape), rate).astype(np.int64)


def sample_truncated_normal(
    stream: RngStream, mean: float, sd: float, lower: float, n: int
) -> np.ndarray:
    """Normal draws left-truncated at ``lower``, by inverse CDF."""
    if sd <= 0:
        raise ConfigurationError(f"truncated normal sd must be positive (got {sd})")
    a = (lower - mean) / sd
    return stats.truncnorm.ppf(stream.uniform(n), a, np.inf, loc=mean, scale=sd)


# ---------------------------------------------------------------------------
# Optimisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimSettings:
    gradient_tol: float = 1e-6
    step_tol: float = 1e-9
    max_iterations: int = 500
    restart: bool = True
    polish_steps: int = 3


@dataclass(frozen=True)
class OptimResult:
    argmin: np.ndarray
    objective_value: float
    hessian: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float
    message: str = ""
    restarts: int = 0
    gradient: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _relative_steps(x: np.ndarray, base: float) -> np.ndarray:
    return base * np.maximum(1.0, np.abs(x))


def numerical_gradient(objective: Callable[[np.ndarray], float], x) -> np.ndarray:
    """Central-difference gradient with step cbrt(eps) * max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    grad = approx_fprime(x, objective, epsilon=_relative_steps(x, GRADIENT_STEP), centered=True)
    return np.asarray(grad, dtype=float).reshape(x.shape)


def numerical_hessian(objective: Callable[[np.ndarray], float], x) -> np.ndarray:
    """Symmetrised central second differences with step eps**0.25 * max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    hess = approx_hess3(x, objective, epsilon=_relative_steps(x, HESSIAN_STEP))
    hess = np.asarray(hess, dtype=float).reshape(x.size, x.size)
    return 0.5 * (hess + hess.T)


def _guarded(objective: Callable[[np.ndarray], float], ceiling: float):
    # Non-finite values become a large finite ceiling so the line search backtracks.
    def wrapped(x: np.ndarray) -> float:
        value = float(objective(x))
        if not math.isfinite(value):
            return ceiling
        return value

    return wrapped


def _newton_polish(f, x: np.ndarray, value: float, steps: int) -> Tuple[np.ndarray, float]:
    for _ in range(steps):
        grad = numerical_gradient(f, x)
        hess = numerical_hessian(f, x)
        try:
            factor = linalg.cho_factor(hess)
        except linalg.LinAlgError:
            break
        candidate = x - linalg.cho_solve(factor, grad)
        candidate_value = f(candidate)
        if not candidate_value < value:
            break
        x, value = candidate, candidate_value
    return x, value


def minimize(
    objective: Callable[[np.ndarray], float],
    start,
    settings: Optional[OptimSettings] = None,
) -> OptimResult:
    """Minimise a smooth objective with BFGS and finite-difference derivatives.

    Converged means the final gradient norm is at most
    ``gradient_tol * (1 + |f|)``. One restart from a perturbed point is made
    when the first pass stalls short of that.
    """
    settings = settings or OptimSettings()
    x0 = np.atleast_1d(np.asarray(start, dtype=float)).copy()
    f0 = float(objective(x0))
    if not math.isfinite(f0):
        raise DomainError("objective is not finite at the starting point")

    f = _guarded(objective, abs(f0) * 1e6 + 1e10)

    def jac(x: np.ndarray) -> np.ndarray:
        return numerical_gradient(f, x)

    iterations = 0
    restarts = 0
    message = ""
    x, value = x0, f0
    point = x0
    for attempt in range(2 if settings.restart else 1):
        result = optimize.minimize(
            f,
            point,
            jac=jac,
            method="BFGS",
            options={
                "gtol": settings.gradient_tol,
                "maxiter": max(settings.max_iterations - iterations, 1),
                "xrtol": settings.step_tol,
            },
        )
        iterations += int(result.nit)
        message = str(result.message)
        if float(result.fun) <= value:
            x, value = np.asarray(result.x, dtype=float), float(result.fun)

        x, value = _newton_polish(f, x, value, settings.polish_steps)
        gradient = jac(x)
        gradient_norm = float(np.linalg.norm(gradient))
        if gradient_norm <= settings.gradient_tol * (1.0 + abs(value)):
            break
        if iterations >= settings.max_iterations or attempt == 1 or not settings.restart:
            break
        restarts += 1
        point = x * 1.01 + 0.01
        LOGGER.debug("optimizer restart: %s", message, extra={"iterations": iterations})

    gradient = jac(x)
    gradient_norm = float(np.linalg.norm(gradient))
    converged = (
        gradient_norm <= settings.gradient_tol * (1.0 + abs(value))
        and iterations <= settings.max_iterations
        and value < abs(f0) * 1e6 + 1e10
    )
    if not converged:
        message = f"{message} (gradient norm {gradient_norm:.3g})"

    hessian = numerical_hessian(f, x)
    metrics.record_iterations(iterations)
    return OptimResult(
        argmin=x,
        objective_value=value,
        hessian=hessian,
        converged=bool(converged),
        iterations=iterations,
        gradient_norm=gradient_norm,
        message=message,
        restarts=restarts,
        gradient=gradient,
    )


def invert_hessian(hessian: np.ndarray) -> Optional[np.ndarray]:
    """Inverse of a positive-definite Hessian, or None when it is not positive definite."""
    try:
        factor = linalg.cho_factor(hessian)
    except (linalg.LinAlgError, ValueError):
        return None
    inverse = linalg.cho_solve(factor, np.eye(hessian.shape[0]))
    return 0.5 * (inverse + inverse.T)


def delta_method(covariance: np.ndarray, jacobian_diagonal: np.ndarray) -> np.ndarray:
    """Covariance of an elementwise reparametrisation with the given derivatives."""
    scale = np.asarray(jacobian_diagonal, dtype=float)
    return covariance * np.outer(scale, scale)


# ---------------------------------------------------------------------------
# Least squares
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LeastSquaresResult:
    coef: np.ndarray
    cov_classical: np.ndarray
    cov_sandwich: np.ndarray
    residuals: np.ndarray
    sigma2: float
    bread: np.ndarray


def check_rank(design: np.ndarray, column_names: Sequence[str] | None = None) -> None:
    """Raise :class:`SingularDesignError` if ``design`` lacks full column rank."""
    n, p = design.shape
    _, r, pivots = linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = (diag[0] if diag.size else 0.0) * max(n, p) * MACHINE_EPS
    rank = int(np.sum(diag > tol))
    if rank < p:
        offending = int(pivots[rank])
        name = column_names[offending] if column_names is not None else f"column {offending}"
        raise SingularDesignError(str(name))


def least_squares(
    design,
    response,
    weights=None,
    column_names: Sequence[str] | None = None,
) -> LeastSquaresResult:
    """(Weighted) least squares with classical and HC0 sandwich covariances.

    The sandwich is ``(X'WX)^-1 X'W diag(e^2) W X (X'WX)^-1`` with residuals
    on the original scale.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("design must be n x p and response length n")
    n, p = X.shape
    if n <= p:
        raise InsufficientDataError(f"least squares needs n > p (n={n}, p={p})")

    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,) or np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise DomainError("weights must be positive and finite")

    root_w = np.sqrt(w)
    Xw = X * root_w[:, None]
    check_rank(Xw, column_names)

    coef, *_ = linalg.lstsq(Xw, y * root_w)
    residuals = y - X @ coef

    xtwx = Xw.T @ Xw
    bread = linalg.inv(xtwx)
    bread = 0.5 * (bread + bread.T)
    sigma2 = float(np.sum(w * residuals**2) / (n - p))
    cov_classical = sigma2 * bread

    scores = X * (w * residuals)[:, None]
    cov_sandwich = bread @ (scores.T @ scores) @ bread
    cov_sandwich = 0.5 * (cov_sandwich + cov_sandwich.T)

    return LeastSquaresResult(
        coef=coef,
        cov_classical=cov_classical,
        cov_sandwich=cov_sandwich,
        residuals=residuals,
        sigma2=sigma2,
        bread=bread,
    )


__all__ = [
    "MACHINE_EPS",
    "normal_pdf",
    "normal_cdf",
    "log_normal_cdf",
    "normal_quantile",
    "inverse_mills",
    "RngStream",
    "sample_uniform",
    "sample_normal",
    "sample_bernoulli",
    "sample_binomial2",
    "sample_t",
    "sample_lognormal",
    "MixtureComponent",
    "sample_normal_mixture",
    "sample_poisson",
    "sample_truncated_normal",
    "OptimSettings",
    "OptimResult",
    "numerical_gradient",
    "numerical_hessian",
    "minimize",
    "invert_hessian",
    "delta_method",
    "LeastSquaresResult",
    "check_rank",
    "least_squares",
]
