"""Runtime configuration for the ivsel library and command-line tool."""

from __future__ import annotations

from dataclasses import dataclass
import os
from pathlib import Path
from typing import Optional

_BUNDLED_CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _to_bool(value: Optional[str], default: bool) -> bool:
    if value is None:
        return default
    value = value.strip().lower()
    if value in {"1", "true", "t", "yes", "on", "y"}:
        return True
    if value in {"0", "false", "f", "no", "off", "n"}:
        return False
    return default


def _to_int(value: Optional[str], default: int) -> int:
    if value is None:
        return default
    try:
        return int(value.strip())
    except (ValueError, TypeError):
        return default


def _to_optional_int(value: Optional[str]) -> Optional[int]:
    if value is None or not value.strip():
        return None
    try:
        return int(value.strip())
    except ValueError:
        return None


@dataclass(frozen=True)
class Settings:
    seed_override: Optional[int]
    parallelism: int
    bootstrap_size: int
    calibration_size: int
    log_level: str
    structured_logging: bool
    metrics_enabled: bool
    config_dir: Path


def _build_settings() -> Settings:
    seed_override = _to_optional_int(os.getenv("IVSEL_SEED"))
    parallelism = max(1, _to_int(os.getenv("IVSEL_PARALLELISM"), 1))
    bootstrap_size = max(2, _to_int(os.getenv("IVSEL_BOOTSTRAP"), 100))
    calibration_size = max(1000, _to_int(os.getenv("IVSEL_CALIBRATION_SIZE"), 200_000))

    log_level = os.getenv("LOG_LEVEL", "INFO").strip().upper() or "INFO"
    structured_logging = _to_bool(os.getenv("STRUCTURED_LOGGING"), True)
    metrics_enabled = _to_bool(os.getenv("METRICS_ENABLED"), True)
    config_dir = Path(os.getenv("IVSEL_CONFIG_DIR") or _BUNDLED_CONFIGS)

    return Settings(
        seed_override=seed_override,
        parallelism=parallelism,
        bootstrap_size=bootstrap_size,
        calibration_size=calibration_size,
        log_level=log_level,
        structured_logging=structured_logging,
        metrics_enabled=metrics_enabled,
        config_dir=config_dir,
    )


settings = _build_settings()


def reload_settings() -> Settings:
    global settings  # type: ignore[global-variable-not-assigned]
    settings = _build_settings()
    return settings


__all__ = ["Settings", "settings", "reload_settings"]
