"""CSV and JSON input/output plus the run manifest written beside every result."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .data import Dataset
from .errors import DatasetError
from .mr import SummaryStats

LOGGER = logging.getLogger(__name__)

SCHEMA_VERSION = 1
NA_VALUES = ["", "NA"]
FLOAT_FORMAT = "%.17g"


# ---------------------------------------------------------------------------
# Atomic writes
# ---------------------------------------------------------------------------


def _fsync_directory(directory: Path) -> None:
    if not hasattr(os, "O_DIRECTORY"):
        return
    try:
        dir_fd = os.open(str(directory), os.O_DIRECTORY)
    except (FileNotFoundError, NotADirectoryError, PermissionError):
        return
    try:
        os.fsync(dir_fd)
    finally:
        os.close(dir_fd)


def write_text_atomic(path: str | Path, text: str) -> Path:
    """Write through a temporary file, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_suffix(path.suffix + ".tmp")
    with open(tmp_path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(tmp_path, path)
    _fsync_directory(path.parent)
    return path


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json_atomic(path: str | Path, payload: Dict[str, Any]) -> Path:
    body = dict(_json_safe(payload))
    body.setdefault("schema_version", SCHEMA_VERSION)
    return write_text_atomic(path, json.dumps(body, indent=2, sort_keys=True) + "\n")


def canonical_json(payload: Any) -> str:
    return json.dumps(_json_safe(payload), sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


def read_frame(path: str | Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, na_values=NA_VALUES, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError as exc:
        raise DatasetError(f"data file not found: {path}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DatasetError(f"cannot parse {path} as CSV: {exc}") from exc


def read_dataset(
    path: str | Path,
    outcome: str = "Y",
    covariates: Sequence[str] = ("X",),
    selection_instruments: Sequence[str] = (),
    genetic_instruments: Sequence[str] = (),
    exposure: Optional[str] = None,
    selection: str = "R",
    missing_on: Optional[Sequence[str]] = None,
) -> Dataset:
    """Load a CSV into a :class:`Dataset`.

    ``missing_on`` defaults to whichever of the outcome and exposure have
    gaps. Without a selection column the indicator is derived from those
    gaps.
    """
    frame = read_frame(path)
    roles = [outcome, *covariates, *selection_instruments, *genetic_instruments]
    if exposure:
        roles.append(exposure)
    absent = [c for c in dict.fromkeys(roles) if c not in frame.columns]
    if absent:
        raise DatasetError(f"columns {absent} not found; available: {list(frame.columns)}")
    for column in dict.fromkeys(roles):
        if not pd.api.types.is_numeric_dtype(frame[column]):
            raise DatasetError(f"column {column!r} must be numeric, found {frame[column].dtype}")

    if missing_on is None:
        candidates = [c for c in (outcome, exposure) if c]
        missing_on = [c for c in candidates if frame[c].isna().any()]
    governed = list(missing_on)
    if selection not in frame.columns:
        present = np.ones(len(frame), dtype=bool)
        for column in governed:
            present &= frame[column].notna().to_numpy()
        frame = frame.assign(**{selection: present.astype(np.int64)})

    return Dataset(
        frame,
        outcome=outcome,
        covariates=tuple(covariates),
        selection_instruments=tuple(selection_instruments),
        genetic_instruments=tuple(genetic_instruments),
        exposure=exposure,
        selection=selection,
        missing_on=tuple(governed),
    )


def frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, na_rep="NA", float_format=FLOAT_FORMAT, lineterminator="\n")


def write_dataset(data: Dataset, path: str | Path) -> Path:
    return write_text_atomic(path, frame_to_csv(data.frame))


def read_summary_stats(path: str | Path) -> SummaryStats:
    frame = read_frame(path)
    return SummaryStats.from_frame(frame, provenance={"source": str(path)})


def write_summary_stats(stats: SummaryStats, path: str | Path) -> Path:
    return write_text_atomic(path, frame_to_csv(stats.to_frame()))


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def tool_version() -> str:
    from . import __version__

    return __version__


@dataclass
class RunManifest:
    command: str
    config_hash: str
    base_seed: Optional[int]
    tool_version: str = field(default_factory=tool_version)
    started_at: str = field(default_factory=_now)
    finished_at: Optional[str] = None
    outputs: List[str] = field(default_factory=list)

    def add_output(self, path: str | Path) -> None:
        self.outputs.append(str(path))

    def finish(self) -> "RunManifest":
        self.finished_at = _now()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config_hash": self.config_hash,
            "base_seed": self.base_seed,
            "tool_version": self.tool_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "outputs": list(self.outputs),
        }

    def write(self, path: str | Path) -> Path:
        written = write_json_atomic(path, self.to_dict())
        LOGGER.info("manifest written", extra={"path": str(written)})
        return written


__all__ = [
    "SCHEMA_VERSION",
    "write_text_atomic",
    "write_json_atomic",
    "canonical_json",
    "config_hash",
    "read_frame",
    "read_dataset",
    "frame_to_csv",
    "write_dataset",
    "read_summary_stats",
    "write_summary_stats",
    "RunManifest",
]
