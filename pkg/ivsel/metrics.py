"""Prometheus metrics for estimator fits and simulation runs."""

from __future__ import annotations

from prometheus_client import CollectorRegistry, Counter, Histogram, generate_latest

from . import config

REGISTRY = CollectorRegistry()

FITS_TOTAL = Counter(
    "ivsel_fits_total",
    "Estimator fits by method and outcome status",
    labelnames=("method", "status"),
    registry=REGISTRY,
)

REPLICATIONS_TOTAL = Counter(
    "ivsel_replications_total",
    "Simulation replications completed",
    labelnames=("scenario",),
    registry=REGISTRY,
)

OPTIMIZER_ITERATIONS = Histogram(
    "ivsel_optimizer_iterations",
    "Quasi-Newton iterations per minimisation",
    buckets=(1, 5, 10, 25, 50, 100, 200, 500, 1000),
    registry=REGISTRY,
)

REPLICATION_LATENCY = Histogram(
    "ivsel_replication_seconds",
    "Wall-clock time per simulation replication",
    buckets=(0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0, 60.0),
    registry=REGISTRY,
)


def record_fit(method: str, converged: bool) -> None:
    if config.settings.metrics_enabled:
        FITS_TOTAL.labels(method=method, status="converged" if converged else "failed").inc()


def record_iterations(iterations: int) -> None:
    if config.settings.metrics_enabled:
        OPTIMIZER_ITERATIONS.observe(iterations)


def record_replication(scenario: str, elapsed_s: float) -> None:
    if config.settings.metrics_enabled:
        REPLICATIONS_TOTAL.labels(scenario=scenario).inc()
        REPLICATION_LATENCY.observe(elapsed_s)


def collect_metrics() -> bytes:
    """Render metrics in Prometheus exposition format."""
    return generate_latest(REGISTRY)


__all__ = [
    "REGISTRY",
    "record_fit",
    "record_iterations",
    "record_replication",
    "collect_metrics",
]
