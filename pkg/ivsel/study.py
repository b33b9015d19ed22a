"""Monte-Carlo replication engine, metric aggregation and parameter sweeps."""

from __future__ import annotations

import dataclasses
import functools
import logging
import math
import multiprocessing as mp
import os
import time
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import config, metrics
from .data import Z95, Dataset, FitResult
from .dgp import generate, selection_intercept, variant_names
from .errors import ConfigurationError, IvselError, IvselWarning
from .glm import fit_cca, fit_ipw, fit_oracle
from .heckman import heckman_binary_mle, heckman_mle
from .mr import (
    CausalEstimate,
    adjusted_association,
    ivw,
    selection_adjusted_summary_stats,
    tsls,
    wald_ratio,
)
from .numkit import RngStream
from .scenarios import ScenarioConfig, scenario_payload
from .ttw import ttw_linear, ttw_logistic, ttw_poisson

LOGGER = logging.getLogger(__name__)

FAILURE_FLAG_FRACTION = 0.05
SWEEP_SEED_STRIDE = 1_000_000
_BOOTSTRAP_SLOT = 100

_FIT_FAILURES = (IvselError, ValueError, ArithmeticError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class MethodOutcome:
    method: str
    estimate: float
    se: float
    converged: bool
    error: Optional[str] = None


@dataclass(frozen=True)
class ReplicationResult:
    index: int
    outcomes: Tuple[MethodOutcome, ...]
    elapsed_s: float


@dataclass(frozen=True)
class MethodSummary:
    method: str
    replications: int
    n_converged: int
    n_failed: int
    mean: Optional[float]
    median: Optional[float]
    emp_sd: Optional[float]
    mean_se: Optional[float]
    median_se: Optional[float]
    coverage: Optional[float]
    rejection_rate: Optional[float]
    flagged: bool

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SimulationReport:
    scenario: str
    target_name: str
    target: float
    replications: int
    alpha_R: float
    summaries: Tuple[MethodSummary, ...]
    config: Dict[str, Any] = field(default_factory=dict)
    sweep_parameter: Optional[str] = None
    sweep_value: Optional[float] = None
    elapsed_s: float = field(default=0.0, compare=False)

    def summary(self, method: str) -> MethodSummary:
        for item in self.summaries:
            if item.method == method:
                return item
        raise KeyError(method)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for item in self.summaries:
            row: Dict[str, Any] = {"scenario": self.scenario}
            if self.sweep_parameter is not None:
                row[self.sweep_parameter] = self.sweep_value
            row.update(item.to_dict())
            rows.append(row)
        return pd.DataFrame(rows)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "target_name": self.target_name,
            "target": self.target,
            "replications": self.replications,
            "alpha_R": self.alpha_R,
            "sweep_parameter": self.sweep_parameter,
            "sweep_value": self.sweep_value,
            "methods": [item.to_dict() for item in self.summaries],
            "config": self.config,
        }


# ---------------------------------------------------------------------------
# Fitting one method on one replication
# ---------------------------------------------------------------------------


def _regression_fit(scenario: ScenarioConfig, data: Dataset, method: str) -> FitResult:
    family = scenario.outcome_family
    if method == "cca":
        return fit_cca(data, family)
    if method == "ipw":
        return fit_ipw(data, family)
    if method == "oracle":
        return fit_oracle(data, family)
    if method == "heckman":
        if family == "logistic":
            return heckman_binary_mle(data)
        return heckman_mle(data)
    if family == "logistic":
        return ttw_logistic(data)
    if family == "poisson":
        return ttw_poisson(data)
    return ttw_linear(data)


def _mr_estimate(scenario: ScenarioConfig, data, method: str, stream: RngStream) -> CausalEstimate:
    mr = scenario.mr
    assert mr is not None
    if mr.design == "two_sample":
        data_x, data_y = data
    else:
        data_x = data_y = data

    if mr.estimator == "wald":
        (variant,) = variant_names(1)
        bx, sx = adjusted_association(data_x, "exposure", variant, method)
        by, sy = adjusted_association(data_y, "outcome", variant, method)
        return wald_ratio(bx, sx, by, sy, method=f"wald_{method}")
    if mr.estimator == "tsls":
        return tsls(data_x, method, n_bootstrap=mr.n_bootstrap, stream=stream)
    stats = selection_adjusted_summary_stats(
        data_x,
        None if mr.design == "one_sample" else data_y,
        method,
        adjust_for_correlated=mr.adjust_for_correlated,
    )
    return ivw(stats, method=f"ivw_{method}")


def fit_method(scenario: ScenarioConfig, data, method: str, stream: RngStream) -> MethodOutcome:
    """Estimate the scenario's target with one method; failures are recorded, not raised."""
    try:
        if scenario.kind == "regression":
            fit = _regression_fit(scenario, data, method)
            return MethodOutcome(method, fit.coef("X"), fit.se("X"), fit.converged)
        estimate = _mr_estimate(scenario, data, method, stream)
        return MethodOutcome(method, estimate.theta_hat, estimate.se, True)
    except _FIT_FAILURES as exc:
        return MethodOutcome(method, math.nan, math.nan, False, f"{type(exc).__name__}: {exc}")


def run_replication(
    scenario: ScenarioConfig, alpha_r: float, methods: Tuple[str, ...], index: int
) -> ReplicationResult:
    start = time.perf_counter()
    stream = RngStream(scenario.base_seed, index)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IvselWarning)
        try:
            data = generate(scenario, stream, alpha_r)
        except _FIT_FAILURES as exc:
            note = f"{type(exc).__name__}: {exc}"
            outcomes = tuple(MethodOutcome(m, math.nan, math.nan, False, note) for m in methods)
        else:
            bootstrap = stream.child(_BOOTSTRAP_SLOT)
            outcomes = tuple(fit_method(scenario, data, m, bootstrap) for m in methods)
    for outcome in outcomes:
        if outcome.error:
            LOGGER.debug(
                "fit failed: %s",
                outcome.error,
                extra={"scenario": scenario.name, "replication": index, "method": outcome.method},
            )
    return ReplicationResult(index, outcomes, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def _optional(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None


def summarize(method: str, outcomes: Sequence[MethodOutcome], target: float) -> MethodSummary:
    """Aggregate one method's replications.

    Only converged fits with a finite estimate enter the metrics; coverage
    and rejection additionally need a finite standard error.
    """
    total = len(outcomes)
    usable = [o for o in outcomes if o.converged and math.isfinite(o.estimate)]
    n_used = len(usable)
    n_failed = total - n_used
    flagged = n_failed > FAILURE_FLAG_FRACTION * total
    if n_used == 0:
        return MethodSummary(method, total, 0, n_failed, None, None, None, None, None, None, None, flagged)

    estimates = np.array([o.estimate for o in usable])
    ses = np.array([o.se for o in usable])
    has_se = np.isfinite(ses)
    emp_sd = float(np.std(estimates, ddof=1)) if n_used >= 2 else None

    coverage = rejection = mean_se = median_se = None
    if has_se.any():
        est, se = estimates[has_se], ses[has_se]
        mean_se = float(np.mean(se))
        median_se = float(np.median(se))
        coverage = float(np.mean((est - Z95 * se <= target) & (target <= est + Z95 * se)))
        with np.errstate(divide="ignore", invalid="ignore"):
            rejection = float(np.mean(np.abs(est / se) > Z95))

    return MethodSummary(
        method=method,
        replications=total,
        n_converged=n_used,
        n_failed=n_failed,
        mean=_optional(float(np.mean(estimates))),
        median=_optional(float(np.median(estimates))),
        emp_sd=emp_sd,
        mean_se=mean_se,
        median_se=median_se,
        coverage=coverage,
        rejection_rate=rejection,
        flagged=flagged,
    )


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------


def _pool_context() -> mp.context.BaseContext:
    return mp.get_context("fork" if os.name == "posix" else "spawn")


def run_study(
    scenario: ScenarioConfig,
    methods: Optional[Sequence[str]] = None,
    parallelism: Optional[int] = None,
) -> SimulationReport:
    """Run every replication of ``scenario`` and aggregate per method.

    Replication ``r`` draws from substream ``r`` of the scenario seed, so the
    report does not depend on ``parallelism``.
    """
    chosen = tuple(methods) if methods is not None else tuple(scenario.methods)
    if not chosen:
        raise ConfigurationError("at least one method is required", field="methods")
    if methods is not None:
        scenario = scenario.with_value("methods", list(chosen))
    workers = config.settings.parallelism if parallelism is None else int(parallelism)
    if workers < 1:
        raise ConfigurationError("parallelism must be at least 1", field="parallelism")

    start = time.perf_counter()
    alpha_r = selection_intercept(scenario)
    LOGGER.info(
        "study started: %d replications, methods %s",
        scenario.replications,
        ",".join(chosen),
        extra={"scenario": scenario.name},
    )
    task = functools.partial(run_replication, scenario, alpha_r, chosen)
    indices = range(scenario.replications)
    if workers == 1:
        results = [task(i) for i in indices]
    else:
        chunksize = max(1, scenario.replications // (workers * 4))
        with _pool_context().Pool(processes=workers) as pool:
            results = list(pool.imap(task, indices, chunksize=chunksize))

    for result in results:
        metrics.record_replication(scenario.name, result.elapsed_s)

    summaries = tuple(
        summarize(m, [r.outcomes[k] for r in results], scenario.target) for k, m in enumerate(chosen)
    )
    elapsed = time.perf_counter() - start
    for item in summaries:
        if item.flagged:
            LOGGER.warning(
                "%d of %d fits failed",
                item.n_failed,
                item.replications,
                extra={"scenario": scenario.name, "method": item.method},
            )
    LOGGER.info("study finished", extra={"scenario": scenario.name, "elapsed_s": round(elapsed, 3)})
    return SimulationReport(
        scenario=scenario.name,
        target_name=scenario.target_name,
        target=scenario.target,
        replications=scenario.replications,
        alpha_R=alpha_r,
        summaries=summaries,
        config=scenario_payload(scenario),
        elapsed_s=elapsed,
    )


def sweep(
    base: ScenarioConfig,
    parameter: str,
    values: Sequence[float],
    methods: Optional[Sequence[str]] = None,
    parallelism: Optional[int] = None,
) -> List[SimulationReport]:
    """One study per value of the dotted ``parameter`` path.

    Value ``i`` runs with seed ``base_seed + i * 1_000_000``.
    """
    base.numeric_value(parameter)
    reports: List[SimulationReport] = []
    for i, value in enumerate(values):
        scenario = base.with_value(parameter, value)
        scenario = scenario.model_copy(
            update={
                "base_seed": base.base_seed + i * SWEEP_SEED_STRIDE,
                "name": f"{base.name}[{parameter}={value}]",
            }
        )
        report = run_study(scenario, methods, parallelism)
        reports.append(
            dataclasses.replace(report, sweep_parameter=parameter, sweep_value=float(value))
        )
    return reports


__all__ = [
    "MethodOutcome",
    "MethodSummary",
    "SimulationReport",
    "fit_method",
    "run_replication",
    "summarize",
    "run_study",
    "sweep",
]
