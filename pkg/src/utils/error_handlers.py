"""
Error hierarchy and decorators for standardized error management.
"""

import functools
from typing import Any, Dict, Optional

from src.utils.structured_logger import get_logger

logger = get_logger(__name__)


class DenetError(Exception):
    """Base exception for all toolkit errors"""

    def __init__(
        self,
        message: str,
        original_error: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.original_error = original_error
        self.details = details or {}
        super().__init__(self.message)

    def __str__(self):
        if self.original_error:
            return (
                f"{self.message} (Original error: {str(self.original_error)})"
            )
        return self.message


class ConfigError(DenetError):
    """Raised for invalid configuration or command-line usage"""

    pass


class ShapeError(DenetError, ValueError):
    """Raised when array shapes or dimensions do not agree"""

    pass


class DataError(DenetError, ValueError):
    """Raised for degenerate or invalid input data"""

    pass


class AudioFormatError(DataError):
    """Raised when a WAV file is not 16-bit PCM mono at the expected rate"""

    pass


class CheckpointError(DenetError):
    """Raised when a checkpoint cannot be written, read or validated"""

    pass


class TrainingError(DenetError):
    """Base exception for training-loop failures"""

    pass


class NonFiniteLossError(TrainingError):
    """Raised when a loss, gradient or parameter becomes NaN or Inf"""

    pass


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the command-line exit code"""
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    return EXIT_RUNTIME


def handle_pipeline_errors(stage: str):
    """
    Decorator for pipeline stages (corpus building, training, evaluation)

    Toolkit errors are logged with the stage name and re-raised as they
    are. Anything else is logged with its traceback and wrapped into a
    DenetError so callers only have to handle one hierarchy.

    Args:
        stage: Human readable stage name used in log messages
    """

    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except DenetError as e:
                logger.error(
                    f"{stage} failed in {func.__name__}: {e}",
                    stage=stage,
                    error_type=type(e).__name__,
                    **{k: v for k, v in e.details.items() if k != "stage"},
                )
                raise
            except OSError:
                logger.error(
                    f"{stage} I/O error in {func.__name__}", exc_info=True, stage=stage
                )
                raise
            except Exception as e:
                error_msg = f"Unexpected error in {stage} ({func.__name__})"
                logger.error(error_msg, exc_info=True, stage=stage)
                raise DenetError(error_msg, e, {"stage": stage}) from e

        return wrapper

    return decorator
