"""Data-generating processes for the simulation scenarios.

Every draw goes through :class:`~ivsel.numkit.RngStream`. Each role (the
instrument, the covariate, the noise terms, selection) reads from its own
child stream, so switching one ingredient off leaves the other draws
unchanged.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import optimize, special

from . import config
from .data import Dataset
from .errors import ConfigurationError
from .numkit import (
    MixtureComponent,
    RngStream,
    sample_bernoulli,
    sample_binomial2,
    sample_lognormal,
    sample_normal,
    sample_normal_mixture,
    sample_poisson,
    sample_t,
    sample_truncated_normal,
    sample_uniform,
)
from .scenarios import SINGLE_INSTRUMENT_BETA_X, ScenarioConfig

LOGGER = logging.getLogger(__name__)

CALIBRATION_STREAM = 2**32 - 1
CALIBRATION_TOLERANCE = 0.002
CALIBRATION_BRACKET = (-20.0, 20.0)

LOGNORMAL_SIGMA2 = (1.0 + 5.0**0.5) / 2.0
MIXTURE = (MixtureComponent(0.25, -2.0, 0.5), MixtureComponent(0.75, 2.0, 0.5))

# child stream slots
_Z, _X, _NOISE, _Y, _V, _R, _G, _U, _NOISE_X, _PARAMS = range(10)

Population = Dict[str, np.ndarray]


def variant_names(k: int) -> Tuple[str, ...]:
    return ("G",) if k == 1 else tuple(f"G{j + 1}" for j in range(k))


def _errors(scenario: ScenarioConfig, stream: RngStream, n: int) -> np.ndarray:
    dist = scenario.error_dist
    if dist == "normal":
        return sample_normal(stream, n)
    if dist == "t4":
        return sample_t(stream, 4.0, n)
    if dist == "lognormal":
        return sample_lognormal(stream, 0.0, LOGNORMAL_SIGMA2, n)
    return sample_normal_mixture(stream, MIXTURE, n)


def _regression_population(scenario: ScenarioConfig, stream: RngStream, n: int) -> Population:
    if scenario.instrument_form == "binary":
        z = sample_bernoulli(stream.child(_Z), np.full(n, 0.5)).astype(float)
    else:
        z = sample_normal(stream.child(_Z), n)

    if scenario.covariate_form == "binary":
        x = sample_bernoulli(stream.child(_X), special.expit(scenario.zx_effect * z)).astype(float)
    else:
        x = scenario.zx_effect * z + sample_normal(stream.child(_X), n)

    confounder = scenario.confounder
    v = sample_normal(stream.child(_V), n) if confounder is not None else np.zeros(n)
    lambda_y = confounder.lambda_Y if confounder is not None else 0.0

    linear = scenario.alpha + scenario.beta * x + scenario.zy_effect * z + lambda_y * v
    family = scenario.outcome_family
    if family == "linear":
        y = linear + _errors(scenario, stream.child(_NOISE), n)
    elif family == "logistic":
        y = sample_bernoulli(stream.child(_Y), special.expit(linear)).astype(float)
    else:
        y = sample_poisson(stream.child(_Y), np.exp(linear)).astype(float)
    return {"Z": z, "X": x, "Y": y, "V": v}


@dataclass(frozen=True)
class _VariantEffects:
    beta_x: np.ndarray
    allele_freq: np.ndarray
    allele_freq_second: np.ndarray


def _variant_effects(scenario: ScenarioConfig, stream: RngStream) -> _VariantEffects:
    mr = scenario.mr
    assert mr is not None
    k = mr.K
    if mr.beta_X is not None:
        beta_x = np.full(k, mr.beta_X)
    elif k == 1:
        beta_x = np.array([SINGLE_INSTRUMENT_BETA_X])
    else:
        beta_x = sample_truncated_normal(
            stream.child(0), mr.beta_X_mean, mr.beta_X_sd, mr.beta_X_lower, k
        )
    lo, hi = mr.allele_freq
    freq = sample_uniform(stream.child(1), lo, hi, k)
    freq_second = sample_uniform(stream.child(2), lo, hi, k) if mr.populations == "different" else freq
    return _VariantEffects(beta_x, freq, freq_second)


def _mr_population(
    scenario: ScenarioConfig,
    stream: RngStream,
    n: int,
    effects: _VariantEffects,
    second: bool = False,
) -> Population:
    mr = scenario.mr
    assert mr is not None
    names = variant_names(mr.K)
    different = second and mr.populations == "different"

    genotypes: Dict[str, np.ndarray] = {}
    for j, name in enumerate(names):
        g_stream = stream.child(_G).child(j)
        if mr.genotype_model == "normal":
            genotypes[name] = sample_t(g_stream, 4.0, n) if different else sample_normal(g_stream, n)
        else:
            freq = effects.allele_freq_second if different else effects.allele_freq
            genotypes[name] = sample_binomial2(g_stream, freq[j], n).astype(float)
    G = np.column_stack([genotypes[name] for name in names])

    z = sample_normal(stream.child(_Z), n)
    u = sample_normal(stream.child(_U), n)
    x = (
        mr.alpha_X
        + G @ effects.beta_x
        + mr.quadratic_effect * np.sum(G**2, axis=1)
        + mr.gamma_X * u
        + scenario.zx_effect * z
        + sample_normal(stream.child(_NOISE_X), n)
    )
    y = (
        mr.alpha_Y
        + mr.theta * x
        + mr.gamma_Y * u
        + scenario.zy_effect * z
        + sample_normal(stream.child(_NOISE), n)
    )
    return {**genotypes, "Z": z, "X": x, "Y": y}


def _selection_index(scenario: ScenarioConfig, population: Population) -> np.ndarray:
    """Logit of the selection probability without the intercept."""
    sel = scenario.selection
    index = sel.beta_R * population["X"] + sel.gamma_R * population["Z"] + sel.delta_R * population["Y"]
    if scenario.confounder is not None:
        index = index + scenario.confounder.lambda_R * population["V"]
    return index


# ---------------------------------------------------------------------------
# Intercept calibration
# ---------------------------------------------------------------------------


def _calibration_population(scenario: ScenarioConfig, size: int) -> Population:
    stream = RngStream(scenario.base_seed, CALIBRATION_STREAM)
    if scenario.mr is None:
        return _regression_population(scenario, stream, size)
    effects = _variant_effects(scenario, stream.child(_PARAMS))
    return _mr_population(scenario, stream, size, effects)


def calibrate_alpha_r(scenario: ScenarioConfig, target: float, size: Optional[int] = None) -> float:
    """Selection intercept giving an expected observed fraction of ``target``.

    The fraction is averaged over a calibration draw from a stream reserved
    for the purpose, so the result depends only on the scenario and its seed.
    """
    if not 0.0 < target < 1.0:
        raise ConfigurationError("target observed fraction must lie in (0, 1)", field="target_observed_fraction")
    size = config.settings.calibration_size if size is None else int(size)
    population = _calibration_population(scenario, size)
    index = _selection_index(scenario, population)

    def gap(alpha_r: float) -> float:
        return float(np.mean(special.expit(alpha_r + index))) - target

    lo, hi = CALIBRATION_BRACKET
    if gap(lo) > 0 or gap(hi) < 0:
        raise ConfigurationError(
            f"observed fraction {target} is unattainable with alpha_R in [{lo}, {hi}]",
            field="target_observed_fraction",
        )
    alpha_r = float(optimize.bisect(gap, lo, hi, xtol=1e-8))
    if abs(gap(alpha_r)) >= CALIBRATION_TOLERANCE:
        raise ConfigurationError(
            f"calibration missed observed fraction {target}", field="target_observed_fraction"
        )
    LOGGER.info("calibrated selection intercept", extra={"scenario": scenario.name})
    return alpha_r


@functools.lru_cache(maxsize=64)
def _cached_intercept(payload: str, size: int) -> float:
    scenario = ScenarioConfig.model_validate_json(payload)
    assert scenario.target_observed_fraction is not None
    return calibrate_alpha_r(scenario, scenario.target_observed_fraction, size)


def selection_intercept(scenario: ScenarioConfig) -> float:
    """``alpha_R`` as given, or calibrated from the target observed fraction."""
    if scenario.selection.alpha_R is not None:
        return float(scenario.selection.alpha_R)
    return _cached_intercept(scenario.model_dump_json(), config.settings.calibration_size)


def _select(scenario: ScenarioConfig, population: Population, alpha_r: float, stream: RngStream) -> np.ndarray:
    probability = special.expit(alpha_r + _selection_index(scenario, population))
    return sample_bernoulli(stream.child(_R), probability)


def _masked_dataset(
    population: Population,
    r: np.ndarray,
    governed: Tuple[str, ...],
    **roles,
) -> Dataset:
    frame = pd.DataFrame({k: v for k, v in population.items() if k != "V"})
    frame["R"] = r
    oracle = frame[list(governed)].copy() if governed else None
    missing = r == 0
    for column in governed:
        frame.loc[missing, column] = np.nan
    return Dataset(frame, missing_on=governed, oracle=oracle, **roles)


# ---------------------------------------------------------------------------
# Public generators
# ---------------------------------------------------------------------------


def generate_regression(
    scenario: ScenarioConfig, stream: RngStream, alpha_r: Optional[float] = None
) -> Dataset:
    """One regression dataset with the outcome missing where ``R == 0``."""
    if scenario.kind != "regression":
        raise ConfigurationError("scenario is not a regression scenario", field="kind")
    alpha_r = selection_intercept(scenario) if alpha_r is None else alpha_r
    population = _regression_population(scenario, stream, scenario.n)
    r = _select(scenario, population, alpha_r, stream)
    return _masked_dataset(
        population,
        r,
        ("Y",),
        outcome="Y",
        covariates=("X",),
        selection_instruments=("Z",),
    )


def generate_mr(
    scenario: ScenarioConfig, stream: RngStream, alpha_r: Optional[float] = None
) -> Union[Dataset, Tuple[Dataset, Dataset]]:
    """One MR dataset, or an (exposure sample, outcome sample) pair for two-sample designs.

    In a two-sample design the first sample supplies variant-exposure
    associations and has the exposure masked when it is governed by
    selection; the second sample supplies variant-outcome associations and
    has the outcome masked likewise.
    """
    mr = scenario.mr
    if mr is None:
        raise ConfigurationError("scenario has no mr block", field="mr")
    alpha_r = selection_intercept(scenario) if alpha_r is None else alpha_r
    effects = _variant_effects(scenario, stream.child(_PARAMS))
    names = variant_names(mr.K)
    roles = dict(
        outcome="Y",
        covariates=(),
        selection_instruments=("Z",),
        genetic_instruments=names,
        exposure="X",
    )

    if mr.design == "one_sample":
        population = _mr_population(scenario, stream, scenario.n, effects)
        r = _select(scenario, population, alpha_r, stream)
        return _masked_dataset(population, r, mr.governed, **roles)

    samples = []
    for position, masked in ((0, "X"), (1, "Y")):
        sub = stream.child(_PARAMS + 1 + position)
        population = _mr_population(scenario, sub, scenario.n, effects, second=position == 1)
        r = _select(scenario, population, alpha_r, sub)
        governed = (masked,) if masked in mr.governed else ()
        samples.append(_masked_dataset(population, r, governed, **roles))
    return samples[0], samples[1]


def generate(scenario: ScenarioConfig, stream: RngStream, alpha_r: Optional[float] = None):
    if scenario.kind == "regression":
        return generate_regression(scenario, stream, alpha_r)
    return generate_mr(scenario, stream, alpha_r)


__all__ = [
    "variant_names",
    "calibrate_alpha_r",
    "selection_intercept",
    "generate_regression",
    "generate_mr",
    "generate",
]
