"""Dataset container and the common fit-result record."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import DatasetError

Z95 = 1.959963984540054
INTERCEPT = "const"


@dataclass(frozen=True)
class Dataset:
    """Columnar observations with the roles each column plays.

    ``missing_on`` lists the columns governed by the selection indicator: a unit
    with ``R == 0`` has every one of them missing, a unit with ``R == 1`` has
    none missing. ``oracle`` optionally carries those columns before masking,
    which simulation uses for the full-data benchmark.
    """

    frame: pd.DataFrame
    outcome: str = "Y"
    covariates: Tuple[str, ...] = ("X",)
    selection_instruments: Tuple[str, ...] = ("Z",)
    genetic_instruments: Tuple[str, ...] = ()
    exposure: Optional[str] = None
    selection: str = "R"
    missing_on: Tuple[str, ...] = ("Y",)
    confounders: Tuple[str, ...] = ()
    oracle: Optional[pd.DataFrame] = None

    def __post_init__(self) -> None:
        for name in ("covariates", "selection_instruments", "genetic_instruments", "missing_on", "confounders"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self._validate()

    # -- validation -------------------------------------------------------

    def _validate(self) -> None:
        frame = self.frame
        needed = [self.outcome, self.selection, *self.covariates, *self.selection_instruments]
        needed += [*self.genetic_instruments, *self.missing_on]
        if self.exposure:
            needed.append(self.exposure)
        missing = [c for c in dict.fromkeys(needed) if c not in frame.columns]
        if missing:
            raise DatasetError(
                f"dataset is missing columns {missing}; available: {list(frame.columns)}"
            )

        r = frame[self.selection]
        if r.isna().any() or not set(np.unique(r.to_numpy())).issubset({0, 1}):
            raise DatasetError(f"selection column {self.selection!r} must be 0/1 without gaps")
        observed = r.to_numpy().astype(bool)

        for column in self.missing_on:
            absent = frame[column].isna().to_numpy()
            if np.any(absent == observed):
                bad = int(np.flatnonzero(absent == observed)[0])
                raise DatasetError(
                    f"column {column!r} disagrees with {self.selection!r} at row {bad}: "
                    "values must be missing exactly where the indicator is 0"
                )

        governed = set(self.missing_on)
        always_present = [
            c
            for c in (*self.selection_instruments, *self.genetic_instruments, *self.covariates)
            if c not in governed
        ]
        for column in always_present:
            if frame[column].isna().any():
                raise DatasetError(f"column {column!r} must be fully observed")

        if self.oracle is not None and len(self.oracle) != len(frame):
            raise DatasetError("oracle frame must have one row per unit")

    # -- accessors --------------------------------------------------------

    @property
    def n(self) -> int:
        return int(len(self.frame))

    @property
    def observed(self) -> np.ndarray:
        return self.frame[self.selection].to_numpy().astype(bool)

    @property
    def has_missing(self) -> bool:
        return bool(self.missing_on) and not bool(self.observed.all())

    def column(self, name: str, subset: Optional[np.ndarray] = None) -> np.ndarray:
        values = self.frame[name].to_numpy(dtype=float)
        return values if subset is None else values[subset]

    def design(
        self,
        columns: Sequence[str],
        subset: Optional[np.ndarray] = None,
        intercept: bool = True,
    ) -> Tuple[np.ndarray, List[str]]:
        names = [INTERCEPT] if intercept else []
        names += list(columns)
        parts = [np.ones(self.n)] if intercept else []
        parts += [self.frame[c].to_numpy(dtype=float) for c in columns]
        matrix = np.column_stack(parts) if parts else np.empty((self.n, 0))
        if subset is not None:
            matrix = matrix[subset]
        return matrix, names

    def response_present(self, name: Optional[str] = None) -> np.ndarray:
        return ~self.frame[name or self.outcome].isna().to_numpy()

    # -- derived datasets -------------------------------------------------

    def view(self, **roles: Any) -> "Dataset":
        """Same rows with some roles reassigned."""
        return dataclasses.replace(self, **roles)

    def take(self, rows: Iterable[int]) -> "Dataset":
        """Rows by position, used for bootstrap resampling."""
        index = np.asarray(list(rows) if not isinstance(rows, np.ndarray) else rows)
        frame = self.frame.iloc[index].reset_index(drop=True)
        oracle = None if self.oracle is None else self.oracle.iloc[index].reset_index(drop=True)
        return dataclasses.replace(self, frame=frame, oracle=oracle)

    def unmasked(self) -> "Dataset":
        """Full data with the governed columns restored and nothing missing."""
        if self.oracle is None:
            raise DatasetError("dataset carries no oracle values")
        frame = self.frame.copy()
        for column in self.oracle.columns:
            frame[column] = self.oracle[column].to_numpy()
        frame[self.selection] = 1
        return dataclasses.replace(self, frame=frame, oracle=None)


@dataclass(frozen=True)
class FitResult:
    estimates: pd.Series
    std_errors: pd.Series
    covariance: Optional[pd.DataFrame]
    loglik: Optional[float]
    converged: bool
    method: str
    n_used: int
    iterations: int = 0
    warnings: Tuple[str, ...] = ()
    extras: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_covariance(
        cls,
        names: Sequence[str],
        estimates,
        covariance,
        **kwargs: Any,
    ) -> "FitResult":
        names = list(names)
        est = pd.Series(np.asarray(estimates, dtype=float), index=names, dtype=float)
        if covariance is None:
            return cls(est, pd.Series(np.nan, index=names), None, **kwargs)
        cov = np.asarray(covariance, dtype=float)
        diag = np.diag(cov)
        se = np.where(diag >= 0, np.sqrt(np.abs(diag)), np.nan)
        return cls(
            est,
            pd.Series(se, index=names, dtype=float),
            pd.DataFrame(cov, index=names, columns=names),
            **kwargs,
        )

    def coef(self, name: str) -> float:
        return float(self.estimates[name])

    def se(self, name: str) -> float:
        return float(self.std_errors[name])

    def ci95(self, name: str) -> Tuple[float, float]:
        est, se = self.coef(name), self.se(name)
        return est - Z95 * se, est + Z95 * se

    def with_warnings(self, *messages: str) -> "FitResult":
        return dataclasses.replace(self, warnings=self.warnings + tuple(messages))

    def to_dict(self) -> Dict[str, Any]:
        def clean(value: float) -> Optional[float]:
            return float(value) if math.isfinite(value) else None

        return {
            "method": self.method,
            "estimates": {k: clean(v) for k, v in self.estimates.items()},
            "std_errors": {k: clean(v) for k, v in self.std_errors.items()},
            "ci95": {
                k: [clean(lo), clean(hi)]
                for k in self.estimates.index
                for lo, hi in [self.ci95(k)]
            },
            "loglik": None if self.loglik is None else clean(self.loglik),
            "converged": self.converged,
            "n_used": self.n_used,
            "iterations": self.iterations,
            "warnings": list(self.warnings),
        }


__all__ = ["Z95", "INTERCEPT", "Dataset", "FitResult"]
