"""Command-line entry point: ``ivsel simulate|sweep|fit|mr``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

from . import config, metrics
from .data import Dataset
from .errors import ConfigurationError, DatasetError, IvselError
from .glm import fit_cca, fit_ipw
from .heckman import heckman_binary_mle, heckman_mle
from .io import (
    RunManifest,
    config_hash,
    read_dataset,
    read_summary_stats,
    write_json_atomic,
    write_summary_stats,
    write_text_atomic,
)
from .logging_utils import configure_logging
from .mr import (
    ADJUSTERS,
    CausalEstimate,
    adjusted_association,
    ivw,
    selection_adjusted_summary_stats,
    tsls,
    wald_ratio,
)
from .numkit import RngStream
from .reporting import emit_forest_plot, render_csv, render_json, render_markdown
from .scenarios import apply_seed_override, load_scenario, scenario_payload
from .study import SimulationReport, run_study, sweep
from .ttw import ttw_linear, ttw_logistic, ttw_poisson

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

_FIT_ADJUSTERS = ("cca", "ipw", "heckman", "ttw")
_SUFFIX = {"csv": "csv", "json": "json", "md": "md"}


class UsageError(Exception):
    """Flag combination the parser cannot reject on its own."""


def _split(value: Optional[str]) -> List[str]:
    if not value:
        return []
    return [part.strip() for part in value.split(",") if part.strip()]


def _parse_values(raw: str) -> List[float]:
    try:
        return [float(v) for v in _split(raw)]
    except ValueError as exc:
        raise UsageError(f"--values must be comma-separated numbers: {exc}") from exc


def _args_hash(args: argparse.Namespace) -> str:
    payload = {k: v for k, v in vars(args).items() if k != "handler"}
    return config_hash(payload)


# ---------------------------------------------------------------------------
# simulate / sweep
# ---------------------------------------------------------------------------


def _write_reports(
    reports: Sequence[SimulationReport], out_dir: Path, fmt: str, median: bool, manifest: RunManifest
) -> None:
    target = out_dir / f"report.{_SUFFIX[fmt]}"
    if fmt == "csv":
        write_text_atomic(target, render_csv(reports, median))
    elif fmt == "json":
        write_json_atomic(target, render_json(reports))
    else:
        write_text_atomic(target, render_markdown(reports, median))
    manifest.add_output(target)


def _finish(manifest: RunManifest, out_dir: Path, metrics_out: Optional[str]) -> None:
    if metrics_out:
        path = write_text_atomic(metrics_out, metrics.collect_metrics().decode("utf-8"))
        manifest.add_output(path)
    manifest.finish().write(out_dir / "manifest.json")


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = apply_seed_override(load_scenario(args.config))
    if args.replications is not None:
        scenario = scenario.with_value("replications", args.replications)
    out_dir = Path(args.out)
    manifest = RunManifest("simulate", config_hash(scenario_payload(scenario)), scenario.base_seed)
    report = run_study(scenario, parallelism=args.parallelism)
    _write_reports([report], out_dir, args.format, args.median, manifest)
    LOGGER.info(
        "simulation written",
        extra={"scenario": scenario.name, "path": str(out_dir), "elapsed_s": round(report.elapsed_s, 3)},
    )
    _finish(manifest, out_dir, args.metrics_out)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    scenario = apply_seed_override(load_scenario(args.config))
    values = _parse_values(args.values)
    out_dir = Path(args.out)
    payload = {"scenario": scenario_payload(scenario), "parameter": args.parameter, "values": values}
    manifest = RunManifest("sweep", config_hash(payload), scenario.base_seed)
    reports = sweep(scenario, args.parameter, values, parallelism=args.parallelism)
    _write_reports(reports, out_dir, args.format, args.median, manifest)
    _finish(manifest, out_dir, args.metrics_out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _fit(data: Dataset, model: str, adjuster: str):
    if adjuster == "cca":
        return fit_cca(data, model)
    if adjuster == "ipw":
        return fit_ipw(data, model)
    if adjuster == "heckman":
        if model == "poisson":
            raise UsageError("heckman has no count-outcome model; use --adjuster ttw")
        if model == "logistic":
            return heckman_binary_mle(data)
        return heckman_mle(data)
    if model == "logistic":
        return ttw_logistic(data)
    if model == "poisson":
        return ttw_poisson(data)
    return ttw_linear(data)


def cmd_fit(args: argparse.Namespace) -> int:
    instruments = _split(args.selection_instrument)
    if args.adjuster in ("heckman", "ttw") and not instruments:
        raise UsageError(f"--adjuster {args.adjuster} needs --selection-instrument")
    data = read_dataset(
        args.data,
        outcome=args.outcome,
        covariates=_split(args.covariates),
        selection_instruments=instruments,
        missing_on=[args.outcome],
    )
    fit = _fit(data, args.model, args.adjuster)
    out = Path(args.out)
    write_json_atomic(out, fit.to_dict())
    manifest = RunManifest("fit", _args_hash(args), None)
    manifest.add_output(out)
    manifest.finish().write(out.with_name(out.stem + ".manifest.json"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# mr
# ---------------------------------------------------------------------------


def _mr_estimates(args: argparse.Namespace, adjusters: Sequence[str]) -> List[CausalEstimate]:
    if args.mode == "ivw":
        if not args.summary_stats:
            raise UsageError("--mode ivw needs --summary-stats")
        return [ivw(read_summary_stats(args.summary_stats))]

    if not args.data:
        raise UsageError(f"--mode {args.mode} needs --data")
    variants = _split(args.variants)
    if not variants:
        raise UsageError("--variants is required with individual-level data")
    instruments = _split(args.selection_instrument)
    if any(a in ("heckman", "ttw") for a in adjusters) and not instruments:
        raise UsageError("heckman and ttw adjusters need --selection-instrument")
    data = read_dataset(
        args.data,
        outcome=args.outcome,
        covariates=(),
        selection_instruments=instruments,
        genetic_instruments=variants,
        exposure=args.exposure,
    )

    estimates = []
    for adjuster in adjusters:
        if args.mode == "wald":
            if len(variants) != 1:
                raise UsageError("--mode wald takes exactly one variant")
            bx, sx = adjusted_association(data, "exposure", variants[0], adjuster)
            by, sy = adjusted_association(data, "outcome", variants[0], adjuster)
            estimates.append(wald_ratio(bx, sx, by, sy, method=f"wald_{adjuster}"))
        elif args.mode == "tsls":
            stream = RngStream(args.seed)
            estimates.append(tsls(data, adjuster, n_bootstrap=args.bootstrap, stream=stream))
        else:
            stats = selection_adjusted_summary_stats(data, None, adjuster)
            if args.stats_out:
                target = Path(args.stats_out)
                if len(adjusters) > 1:
                    target = target.with_name(f"{target.stem}_{adjuster}{target.suffix}")
                write_summary_stats(stats, target)
            estimates.append(ivw(stats, method=f"ivw_{adjuster}"))
    return estimates


def cmd_mr(args: argparse.Namespace) -> int:
    adjusters = _split(args.adjuster) or ["cca"]
    unknown = [a for a in adjusters if a not in ADJUSTERS]
    if unknown:
        raise UsageError(f"unknown adjusters {unknown}; choose from {list(ADJUSTERS)}")
    estimates = _mr_estimates(args, adjusters)
    out = Path(args.out)
    write_json_atomic(out, {"estimates": [e.to_dict() for e in estimates]})
    manifest = RunManifest("mr", _args_hash(args), args.seed)
    manifest.add_output(out)
    if len(estimates) > 1 or args.plot:
        plot = Path(args.plot) if args.plot else out.with_suffix(".svg")
        labels = [e.method for e in estimates]
        instruments = [args.selection_instrument or "none"] * len(estimates)
        manifest.add_output(emit_forest_plot(estimates, labels, plot, instruments))
    manifest.finish().write(out.with_name(out.stem + ".manifest.json"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return number


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivsel",
        description="Selection-bias adjustment with instruments for selection, for regression and MR.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_study_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", help="scenario YAML file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--parallelism", type=_positive_int, default=None)
        p.add_argument("--format", choices=sorted(_SUFFIX), default="csv")
        p.add_argument("--median", action="store_true", help="report medians instead of means")
        p.add_argument("--metrics-out", default=None, help="write a Prometheus metrics snapshot")

    simulate = sub.add_parser("simulate", help="run one simulation scenario")
    add_study_flags(simulate)
    simulate.add_argument("--replications", type=int, default=None)
    simulate.set_defaults(handler=cmd_simulate)

    sweep_parser = sub.add_parser("sweep", help="run a scenario over a grid of one parameter")
    add_study_flags(sweep_parser)
    sweep_parser.add_argument("--parameter", required=True, help="dotted field, e.g. selection.gamma_R")
    sweep_parser.add_argument("--values", required=True, help="comma-separated values")
    sweep_parser.set_defaults(handler=cmd_sweep)

    fit = sub.add_parser("fit", help="fit a selection-adjusted regression to a CSV")
    fit.add_argument("data")
    fit.add_argument("--model", choices=["linear", "logistic", "poisson"], default="linear")
    fit.add_argument("--adjuster", choices=_FIT_ADJUSTERS, default="cca")
    fit.add_argument("--selection-instrument", default=None, help="comma-separated columns")
    fit.add_argument("--outcome", default="Y")
    fit.add_argument("--covariates", default="X", help="comma-separated columns")
    fit.add_argument("--out", required=True)
    fit.set_defaults(handler=cmd_fit)

    mr = sub.add_parser("mr", help="Mendelian-randomization estimates")
    mr.add_argument("--mode", choices=["wald", "tsls", "ivw", "summary"], required=True)
    mr.add_argument("--data", default=None)
    mr.add_argument("--summary-stats", default=None)
    mr.add_argument("--adjuster", default="cca", help="one or more comma-separated adjusters")
    mr.add_argument("--exposure", default="X")
    mr.add_argument("--outcome", default="Y")
    mr.add_argument("--variants", default=None, help="comma-separated variant columns")
    mr.add_argument("--selection-instrument", default=None)
    mr.add_argument("--bootstrap", type=int, default=None)
    mr.add_argument("--seed", type=int, default=0)
    mr.add_argument("--stats-out", default=None)
    mr.add_argument("--plot", default=None, help="forest plot SVG path")
    mr.add_argument("--out", required=True)
    mr.set_defaults(handler=cmd_mr)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(stream=sys.stderr)
    started = time.perf_counter()
    try:
        code = args.handler(args)
    except (UsageError, ConfigurationError, DatasetError) as exc:
        print(f"ivsel {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IvselError, OSError, ArithmeticError, ValueError) as exc:
        LOGGER.error("command failed: %s", exc, exc_info=config.settings.log_level == "DEBUG")
        print(f"ivsel {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    LOGGER.debug("command finished", extra={"elapsed_s": round(time.perf_counter() - started, 3)})
    return code


__all__ = ["main", "build_parser", "cmd_simulate", "cmd_sweep", "cmd_fit", "cmd_mr"]
