"""Scenario configuration schema for simulation studies.

Scenarios are YAML files validated by pydantic models. Validation problems
surface as :class:`ConfigurationError` carrying the dotted field path and,
when the value came from a file, the YAML line it sits on.
"""

from __future__ import annotations

import copy
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import config
from .errors import ConfigurationError

Kind = Literal["regression", "mr_single", "mr_multi"]
Form = Literal["continuous", "binary"]
Family = Literal["linear", "logistic", "poisson"]
ErrorDist = Literal["normal", "t4", "lognormal", "mixture"]

METHODS: Tuple[str, ...] = ("cca", "ipw", "heckman", "ttw", "oracle")
SINGLE_INSTRUMENT_BETA_X = math.sqrt(2.0 / 19.0)
DEFAULT_QUADRATIC_BETA_X2 = 0.5
ALIAS_FILE = "aliases.yaml"


class _FieldProblem(ValueError):
    """Cross-field validation failure pinned to one field."""

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(message)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", str_strip_whitespace=True)


class SelectionModel(StrictModel):
    """Logistic selection model coefficients.

    ``alpha_R`` may be left out when the scenario gives a target observed
    fraction instead; the intercept is then calibrated.
    """

    alpha_R: Optional[float] = None
    beta_R: float = 0.0
    gamma_R: float = 0.0
    delta_R: float = 0.0


class Confounder(StrictModel):
    """Unmeasured ``V`` affecting the outcome and selection."""

    lambda_Y: float = 0.0
    lambda_R: float = 0.0


class MrSettings(StrictModel):
    K: int = Field(default=1, ge=1)
    theta: float = 0.2
    alpha_X: float = 0.0
    alpha_Y: float = 0.0
    beta_X: Optional[float] = None
    beta_X_mean: float = 0.0
    beta_X_sd: float = Field(default=0.05, gt=0.0)
    beta_X_lower: float = 0.15
    allele_freq: Tuple[float, float] = (0.1, 0.9)
    genotype: Optional[Literal["normal", "binomial"]] = None
    gamma_X: float = 1.0
    gamma_Y: float = 1.0
    missing_on: Literal["exposure", "outcome", "both"] = "outcome"
    design: Literal["one_sample", "two_sample"] = "one_sample"
    first_stage: Literal["linear", "quadratic"] = "linear"
    beta_X2: Optional[float] = None
    populations: Literal["same", "different"] = "same"
    estimator: Literal["wald", "tsls", "summary"] = "wald"
    n_bootstrap: Optional[int] = Field(default=None, ge=2)
    adjust_for_correlated: bool = False

    @field_validator("allele_freq")
    @classmethod
    def check_allele_freq(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        lo, hi = value
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError("allele_freq must satisfy 0 <= lo < hi <= 1")
        return value

    @property
    def genotype_model(self) -> str:
        if self.genotype is not None:
            return self.genotype
        return "normal" if self.K == 1 else "binomial"

    @property
    def quadratic_effect(self) -> float:
        if self.first_stage == "linear":
            return 0.0
        return DEFAULT_QUADRATIC_BETA_X2 if self.beta_X2 is None else self.beta_X2

    @property
    def governed(self) -> Tuple[str, ...]:
        return {"exposure": ("X",), "outcome": ("Y",), "both": ("X", "Y")}[self.missing_on]


class ScenarioConfig(StrictModel):
    name: str = Field(min_length=1)
    kind: Kind = "regression"
    n: int = Field(default=10_000, ge=10)
    replications: int = Field(default=1000, ge=1)
    base_seed: int = Field(default=0, ge=0)
    methods: List[str] = Field(default_factory=lambda: list(METHODS))
    alpha: float = 1.0
    beta: float = 0.1
    instrument_form: Form = "continuous"
    covariate_form: Form = "continuous"
    outcome_family: Family = "linear"
    error_dist: ErrorDist = "normal"
    zx_effect: float = 0.0
    zy_effect: float = 0.0
    confounder: Optional[Confounder] = None
    selection: SelectionModel = Field(default_factory=SelectionModel)
    target_observed_fraction: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    mr: Optional[MrSettings] = None

    @field_validator("methods")
    @classmethod
    def check_methods(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one method is required")
        unknown = [m for m in value if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if len(set(value)) != len(value):
            raise ValueError("methods must not repeat")
        return value

    @model_validator(mode="after")
    def check_consistency(self) -> "ScenarioConfig":
        has_intercept = self.selection.alpha_R is not None
        has_target = self.target_observed_fraction is not None
        if has_intercept == has_target:
            raise _FieldProblem(
                "selection.alpha_R",
                "give exactly one of selection.alpha_R and target_observed_fraction",
            )

        if self.kind == "regression":
            if self.mr is not None:
                raise _FieldProblem("mr", "the mr block only applies to MR scenarios")
            if self.outcome_family == "poisson" and "heckman" in self.methods:
                raise _FieldProblem("methods", "heckman has no count-outcome model")
            return self

        mr = self.mr
        if mr is None:
            raise _FieldProblem("mr", f"kind {self.kind!r} needs an mr block")
        if self.outcome_family != "linear" or self.error_dist != "normal":
            raise _FieldProblem("outcome_family", "MR scenarios use a normal linear outcome")
        if self.kind == "mr_single" and mr.K != 1:
            raise _FieldProblem("mr.K", "mr_single scenarios have exactly one variant")
        if self.kind == "mr_multi" and mr.K < 2:
            raise _FieldProblem("mr.K", "mr_multi scenarios need at least two variants")
        if self.kind == "mr_single" and mr.estimator == "summary":
            raise _FieldProblem("mr.estimator", "summary statistics need several variants")
        if self.kind == "mr_multi" and mr.estimator == "wald":
            raise _FieldProblem("mr.estimator", "the Wald ratio takes a single variant")
        if mr.design == "two_sample" and mr.estimator == "tsls":
            raise _FieldProblem("mr.estimator", "two-stage least squares needs one sample")
        if mr.populations == "different" and mr.design != "two_sample":
            raise _FieldProblem("mr.populations", "different populations need two samples")
        if mr.first_stage == "linear" and mr.beta_X2 not in (None, 0.0):
            raise _FieldProblem("mr.beta_X2", "beta_X2 needs first_stage: quadratic")
        return self

    # -- derived values -----------------------------------------------------

    @property
    def target(self) -> float:
        """True value of the parameter every method estimates."""
        return self.mr.theta if self.mr is not None else self.beta

    @property
    def target_name(self) -> str:
        return "theta" if self.mr is not None else "beta"

    def with_value(self, path: str, value: Any) -> "ScenarioConfig":
        """Copy with the dotted field ``path`` replaced, revalidated."""
        payload = self.model_dump()
        parts = path.split(".")
        node: Any = payload
        for part in parts[:-1]:
            if not isinstance(node, dict) or node.get(part) is None:
                raise ConfigurationError(f"unknown parameter {path!r}", field=path)
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigurationError(f"unknown parameter {path!r}", field=path)
        node[parts[-1]] = value
        if path == "target_observed_fraction":
            payload["selection"]["alpha_R"] = None
        elif path == "selection.alpha_R":
            payload["target_observed_fraction"] = None
        return validate_scenario(payload)

    def numeric_value(self, path: str) -> Optional[float]:
        payload: Any = self.model_dump()
        for part in path.split("."):
            if not isinstance(payload, dict) or part not in payload:
                raise ConfigurationError(f"unknown parameter {path!r}", field=path)
            payload = payload[part]
        if payload is not None and (isinstance(payload, bool) or not isinstance(payload, (int, float))):
            raise ConfigurationError(f"parameter {path!r} is not numeric", field=path)
        return payload


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _node_lines(node: yaml.Node, prefix: str, lines: Dict[str, int]) -> None:
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            lines[path] = key_node.start_mark.line + 1
            _node_lines(value_node, path, lines)
    elif isinstance(node, yaml.SequenceNode):
        for index, item in enumerate(node.value):
            path = f"{prefix}.{index}"
            lines[path] = item.start_mark.line + 1
            _node_lines(item, path, lines)


def _line_for(path: str, lines: Dict[str, int]) -> Optional[int]:
    parts = path.split(".")
    while parts:
        candidate = ".".join(parts)
        if candidate in lines:
            return lines[candidate]
        parts.pop()
    return None


def _first_problem(exc: ValidationError) -> Tuple[str, str]:
    error = exc.errors()[0]
    cause = (error.get("ctx") or {}).get("error")
    if isinstance(cause, _FieldProblem):
        return cause.field, str(cause)
    path = ".".join(str(part) for part in error["loc"]) or "(root)"
    message = error["msg"].removeprefix("Value error, ")
    return path, message


def validate_scenario(payload: Any, lines: Optional[Dict[str, int]] = None) -> ScenarioConfig:
    if not isinstance(payload, dict):
        raise ConfigurationError("scenario must be a mapping of fields", field="(root)", line=1)
    try:
        return ScenarioConfig.model_validate(payload)
    except ValidationError as exc:
        path, message = _first_problem(exc)
        raise ConfigurationError(message, field=path, line=_line_for(path, lines or {})) from exc


def parse_scenario(text: str) -> ScenarioConfig:
    try:
        payload = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigurationError(f"malformed YAML: {exc}", field="(root)", line=line) from exc
    lines: Dict[str, int] = {}
    if root is not None:
        _node_lines(root, "", lines)
    return validate_scenario(payload, lines)


def _aliases(config_dir: Path) -> Dict[str, str]:
    path = config_dir / ALIAS_FILE
    if not path.is_file():
        return {}
    try:
        payload = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot read scenario aliases {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigurationError(f"scenario aliases in {path} must be a mapping")
    return {str(k): str(v) for k, v in payload.items()}


def resolve_scenario_path(ref: str | Path) -> Path:
    """Map a file path or the name of a bundled scenario to a file.

    Existing paths win. A bare name is looked up in the config directory,
    first as ``<name>.yaml`` and then through its alias table.
    """
    path = Path(ref)
    if path.is_file() or len(path.parts) != 1:
        return path
    name = path.stem if path.suffix in (".yaml", ".yml") else path.name
    config_dir = Path(config.settings.config_dir)
    bundled = config_dir / f"{name}.yaml"
    if bundled.is_file() and name != Path(ALIAS_FILE).stem:
        return bundled
    target = _aliases(config_dir).get(name)
    if target is not None:
        return config_dir / f"{target}.yaml"
    return path


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Load a scenario from a YAML file or a bundled scenario name."""
    resolved = resolve_scenario_path(path)
    try:
        text = resolved.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario(text)


def apply_seed_override(scenario: ScenarioConfig) -> ScenarioConfig:
    """Honour ``IVSEL_SEED`` when it is set."""
    seed = config.settings.seed_override
    if seed is None:
        return scenario
    if seed < 0:
        raise ConfigurationError("IVSEL_SEED must be non-negative", field="base_seed")
    return scenario.model_copy(update={"base_seed": seed})


def scenario_payload(scenario: ScenarioConfig) -> Dict[str, Any]:
    return copy.deepcopy(scenario.model_dump(mode="json"))


__all__ = [
    "METHODS",
    "SINGLE_INSTRUMENT_BETA_X",
    "SelectionModel",
    "Confounder",
    "MrSettings",
    "ScenarioConfig",
    "validate_scenario",
    "parse_scenario",
    "ALIAS_FILE",
    "resolve_scenario_path",
    "load_scenario",
    "apply_seed_override",
    "scenario_payload",
]
