"""Structured logging utilities for ivsel."""

from __future__ import annotations

import json
import logging
import socket
import sys
import time
from typing import Any, Dict, TextIO

from . import config

_CONTEXT_KEYS = ("scenario", "replication", "method", "iterations", "elapsed_s", "path")


class JsonFormatter(logging.Formatter):
    """Format log records as single-line JSON objects."""

    def format(self, record: logging.LogRecord) -> str:  # noqa: D401
        payload: Dict[str, Any] = {
            "ts": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(record.created)),
            "lvl": record.levelname,
            "logger": record.name,
            "host": socket.gethostname(),
            "event": record.getMessage(),
        }

        if record.exc_info:
            payload["exc_info"] = self.formatException(record.exc_info)

        for key in _CONTEXT_KEYS:
            if hasattr(record, key):
                payload[key] = getattr(record, key)

        return json.dumps(payload, ensure_ascii=False, default=str)


def configure_logging(stream: TextIO | None = None, level_name: str | None = None) -> None:
    """Configure root logging; the CLI passes stderr so result output stays clean."""

    settings = config.settings
    level_name = (level_name or settings.log_level).upper()
    level = getattr(logging, level_name, logging.INFO)

    root = logging.getLogger()
    root.setLevel(level)

    if settings.structured_logging:
        formatter: logging.Formatter = JsonFormatter()
    else:
        formatter = logging.Formatter(
            "%(asctime)s | %(levelname)s | %(name)s | %(message)s"
        )

    handler = logging.StreamHandler(stream or sys.stdout)
    handler.setLevel(level)
    handler.setFormatter(formatter)

    root.handlers = [handler]

    # Reduce overly chatty loggers
    for noisy in ("matplotlib", "matplotlib.font_manager", "numexpr", "PIL"):
        logging.getLogger(noisy).setLevel(max(level, logging.WARNING))


__all__ = ["JsonFormatter", "configure_logging"]
