"""Selection-bias adjustment with instruments for selection, for regression and Mendelian randomization."""

__version__ = "0.4.0"

from .data import Dataset, FitResult
from .glm import fit_cca, fit_ipw, fit_oracle
from .heckman import heckman_binary_mle, heckman_mle, heckman_two_step
from .mr import CausalEstimate, SummaryStats, ivw, selection_adjusted_summary_stats, tsls, wald_ratio
from .scenarios import ScenarioConfig, load_scenario
from .study import SimulationReport, run_study, sweep
from .ttw import ttw_linear, ttw_logistic, ttw_poisson

__all__ = [
    "__version__",
    "Dataset",
    "FitResult",
    "fit_cca",
    "fit_ipw",
    "fit_oracle",
    "heckman_two_step",
    "heckman_mle",
    "heckman_binary_mle",
    "ttw_linear",
    "ttw_logistic",
    "ttw_poisson",
    "CausalEstimate",
    "SummaryStats",
    "wald_ratio",
    "ivw",
    "selection_adjusted_summary_stats",
    "tsls",
    "ScenarioConfig",
    "load_scenario",
    "SimulationReport",
    "run_study",
    "sweep",
]
