"""
Structured logging: every line of <data-dir>/logs/engine.log.jsonl is one JSON
object with timestamp, level, logger, pipeline, stage, message and fields.
"""

import logging
import sys
import threading
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

from isthmus.settings.json import json_settings
from isthmus.utils.time import UTC, format_timestamp

LEVEL_NAMES = {
    logging.DEBUG: "debug",
    logging.INFO: "info",
    logging.WARNING: "warn",
    logging.ERROR: "error",
    logging.CRITICAL: "error",
}

ROOT_LOGGER_NAME = "isthmus"


def get_logger(name: str = "") -> logging.Logger:
    if not name:
        return logging.getLogger(ROOT_LOGGER_NAME)
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")


def log_extra(
    pipeline: Optional[str] = None, stage: Optional[str] = None, **fields: Any
) -> Dict[str, Any]:
    """Builds the `extra` argument carrying the structured context of a line."""
    return {"pipeline": pipeline, "stage": stage, "fields": fields}


class JSONLineFormatter(logging.Formatter):
    def __init__(self) -> None:
        super().__init__()
        self._last: Optional[datetime] = None
        self._lock = threading.Lock()

    def _timestamp(self, record: logging.LogRecord) -> str:
        value = datetime.fromtimestamp(record.created, UTC)
        with self._lock:
            # monotone per emitter even if the wall clock steps back
            if self._last is not None and value < self._last:
                value = self._last
            self._last = value
        return format_timestamp(value)

    def format(self, record: logging.LogRecord) -> str:
        fields = dict(getattr(record, "fields", None) or {})
        if record.exc_info:
            fields["exception"] = self.formatException(record.exc_info)
        event = {
            "timestamp": self._timestamp(record),
            "level": LEVEL_NAMES.get(record.levelno, "info"),
            "logger": record.name,
            "pipeline": getattr(record, "pipeline", None),
            "stage": getattr(record, "stage", None),
            "message": record.getMessage(),
            "fields": fields,
        }
        try:
            return json_settings.canonical_dumps(event)
        except TypeError:
            event["fields"] = {key: repr(value) for key, value in fields.items()}
            return json_settings.canonical_dumps(event)


class _EngineHandler(logging.FileHandler):
    """Marker type so that reconfiguration replaces only our own handlers."""


class _EngineStreamHandler(logging.StreamHandler):
    pass


def configure_logging(
    data_dir: Path, level: str = "INFO", *, stderr: bool = False
) -> Path:
    """
    Routes the `isthmus` loggers to <data-dir>/logs/engine.log.jsonl, replacing
    handlers installed by a previous call. Returns the log file path.
    """
    path = Path(data_dir) / "logs" / "engine.log.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)

    logger = get_logger()
    for handler in list(logger.handlers):
        if isinstance(handler, (_EngineHandler, _EngineStreamHandler)):
            logger.removeHandler(handler)
            handler.close()

    formatter = JSONLineFormatter()
    file_handler = _EngineHandler(path, encoding="utf8")
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)

    if stderr:
        stream_handler = _EngineStreamHandler(sys.stderr)
        stream_handler.setFormatter(formatter)
        logger.addHandler(stream_handler)

    logger.setLevel(level.upper())
    logger.propagate = False
    return path


def read_log_events(path: Path):
    with open(path, "r", encoding="utf8") as log_file:
        for line in log_file:
            line = line.strip()
            if line:
                yield json_settings.loads(line)
