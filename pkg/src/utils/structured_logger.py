"""
Structured logging for training, evaluation and data pipelines
"""

import functools
import inspect
import json
import logging
import os
import time
import traceback
from contextlib import contextmanager
from logging.handlers import RotatingFileHandler
from typing import Any, Dict, Iterator, Optional

import numpy as np

from config.settings import LOGGING_CONFIG


def _json_default(value: Any) -> Any:
    """Convert numpy values into something json can encode"""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        if value.size <= 8:
            return value.tolist()
        return f"ndarray{value.shape}"
    return str(value)


class StructuredLogger:
    """
    Logger that appends a JSON context block to every message,
    e.g. ``epoch finished | {"epoch": 3, "loss": 12.5}``.

    Bound context (see with_context) comes first, per-call fields after.
    """

    def __init__(self, name: str, context: Optional[Dict[str, Any]] = None):
        self.logger = logging.getLogger(name)
        self.context: Dict[str, Any] = dict(context or {})

    def with_context(self, **fields) -> "StructuredLogger":
        """Child logger with extra fields bound to every message."""
        return StructuredLogger(self.logger.name, {**self.context, **fields})

    def _format_message(self, msg: str, fields: Dict[str, Any]) -> str:
        merged = {**self.context, **fields}
        if not merged:
            return msg
        try:
            return f"{msg} | {json.dumps(merged, default=_json_default)}"
        except (TypeError, ValueError):
            return f"{msg} | {merged!r}"

    def _log(self, level: int, msg: str, fields: Dict[str, Any], exc_info: bool = False):
        if not self.logger.isEnabledFor(level):
            return
        if exc_info:
            fields["traceback"] = traceback.format_exc()
        self.logger.log(level, self._format_message(msg, fields))

    def debug(self, msg: str, **fields):
        self._log(logging.DEBUG, msg, fields)

    def info(self, msg: str, **fields):
        self._log(logging.INFO, msg, fields)

    def warning(self, msg: str, **fields):
        self._log(logging.WARNING, msg, fields)

    def error(self, msg: str, exc_info: bool = False, **fields):
        """Log at ERROR; exc_info attaches the active traceback as a field."""
        self._log(logging.ERROR, msg, fields, exc_info=exc_info)


def get_logger(name: str) -> StructuredLogger:
    """Structured logger for a module (pass __name__)."""
    return StructuredLogger(name)


def configure_logging(
    level: Optional[str] = None, log_file: Optional[str] = None
) -> None:
    """
    Configure the root logger with a rotating file handler and a
    console handler on stderr. Stdout stays free for command output.

    Args:
        level: Logging level name, defaults to LOGGING_CONFIG["level"]
        log_file: Log file path, defaults to LOGGING_CONFIG["file"];
            pass an empty string to disable file logging
    """
    level = (level or LOGGING_CONFIG["level"]).upper()
    log_file = LOGGING_CONFIG["file"] if log_file is None else log_file

    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    log_formatter = logging.Formatter(
        LOGGING_CONFIG["format"], LOGGING_CONFIG["date_format"]
    )

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=LOGGING_CONFIG["max_bytes"],
            backupCount=LOGGING_CONFIG["backup_count"],
        )
        file_handler.setFormatter(log_formatter)
        root_logger.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(log_formatter)
    root_logger.addHandler(console_handler)


@contextmanager
def log_duration(label: str, logger: Optional[StructuredLogger] = None,
                 **context) -> Iterator[None]:
    """
    Log the wall time spent inside the block

    Args:
        label: Stage name used in the log message
        logger: Logger to use, defaults to this module's logger
        **context: Extra context fields
    """
    logger = logger or get_logger(__name__)
    start = time.perf_counter()
    try:
        yield
    finally:
        logger.info(
            f"{label} finished",
            seconds=round(time.perf_counter() - start, 3),
            **context,
        )


def log_call(level: str = "DEBUG"):
    """
    Decorator to log function calls with args and results

    Args:
        level: Logging level to use
    """

    def decorator(func):
        logger = get_logger(func.__module__)

        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            fn_name = func.__name__
            log = getattr(logger, level.lower())

            if logger.logger.isEnabledFor(getattr(logging, level.upper())):
                arg_values = inspect.getcallargs(func, *args, **kwargs)
                arg_values.pop("self", None)
                # arrays are summarized by shape
                summary = {
                    k: (f"ndarray{v.shape}" if isinstance(v, np.ndarray) else str(v))
                    for k, v in arg_values.items()
                }
                log(f"Calling {fn_name}", function=fn_name, arguments=summary)

            try:
                result = func(*args, **kwargs)
            except Exception as e:
                logger.error(
                    f"{fn_name} raised exception",
                    function=fn_name,
                    exception=str(e),
                )
                raise

            if isinstance(result, (int, float, bool, str)) or result is None:
                log(f"{fn_name} returned", function=fn_name, result=str(result))
            else:
                log(
                    f"{fn_name} returned",
                    function=fn_name,
                    result_type=type(result).__name__,
                )
            return result

        return wrapper

    return decorator
