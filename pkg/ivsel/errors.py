"""Exception and warning types raised by ivsel estimators and tooling."""

from __future__ import annotations

import warnings


class IvselError(Exception):
    """Base class for every error raised by ivsel."""


class ConfigurationError(IvselError, ValueError):
    """Invalid scenario configuration or distribution parameters."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None) -> None:
        self.field = field
        self.line = line
        location = ""
        if field:
            location = f" [field {field}" + (f", line {line}]" if line else "]")
        super().__init__(f"{message}{location}")


class DomainError(IvselError, ValueError):
    """Argument outside the mathematical domain of a function."""


class DatasetError(IvselError, ValueError):
    """Dataset fails a structural or missingness-consistency check."""


class SingularDesignError(IvselError, ValueError):
    """Design matrix is rank deficient."""

    def __init__(self, column: str, message: str | None = None) -> None:
        self.column = column
        super().__init__(message or f"design matrix is singular; column {column!r} is collinear")


class InsufficientDataError(IvselError, ValueError):
    """Too few usable rows for the requested fit."""


class SeparationError(IvselError, RuntimeError):
    """Perfect or quasi-perfect separation in a binary-response fit."""


class UnstableWeightsError(IvselError, RuntimeError):
    """Inverse-probability weights explode because some fitted probability is tiny."""

    def __init__(self, min_probability: float) -> None:
        self.min_probability = min_probability
        super().__init__(
            f"unstable inverse-probability weights: min fitted probability {min_probability:.3g}"
        )


class ConvergenceError(IvselError, RuntimeError):
    """An iterative fit did not converge."""


class OverflowGuardError(IvselError, RuntimeError):
    """A capped linear predictor is active at the optimum."""


class WaldRatioError(IvselError, ZeroDivisionError):
    """Wald ratio with a zero denominator."""


class IvselWarning(UserWarning):
    """Base class for ivsel warnings."""


class WeakDenominatorWarning(IvselWarning):
    pass


class BoundaryWarning(IvselWarning):
    pass


class IdentificationWarning(IvselWarning):
    pass


class SampleOverlapWarning(IvselWarning):
    pass


class UnreliableBootstrapWarning(IvselWarning):
    pass


class DegenerateSelectionWarning(IvselWarning):
    pass


def emit(category: type[IvselWarning], message: str, stacklevel: int = 3) -> str:
    """Issue ``message`` as a warning and hand it back for attaching to a result."""
    warnings.warn(message, category, stacklevel=stacklevel)
    return f"{category.__name__}: {message}"


__all__ = [
    "emit",
    "IvselError",
    "ConfigurationError",
    "DomainError",
    "DatasetError",
    "SingularDesignError",
    "InsufficientDataError",
    "SeparationError",
    "UnstableWeightsError",
    "ConvergenceError",
    "OverflowGuardError",
    "WaldRatioError",
    "IvselWarning",
    "WeakDenominatorWarning",
    "BoundaryWarning",
    "IdentificationWarning",
    "SampleOverlapWarning",
    "UnreliableBootstrapWarning",
    "DegenerateSelectionWarning",
]
