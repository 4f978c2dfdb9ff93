"""
Utility helpers: structured logging, errors, atomic writes, worker pools
"""

from .structured_logger import get_logger, configure_logging, log_call, log_duration
from .error_handlers import (
    DenetError,
    ConfigError,
    ShapeError,
    DataError,
    AudioFormatError,
    CheckpointError,
    TrainingError,
    NonFiniteLossError,
    exit_code_for,
    handle_pipeline_errors,
)

__all__ = [
    "get_logger",
    "configure_logging",
    "log_call",
    "log_duration",
    "DenetError",
    "ConfigError",
    "ShapeError",
    "DataError",
    "AudioFormatError",
    "CheckpointError",
    "TrainingError",
    "NonFiniteLossError",
    "exit_code_for",
    "handle_pipeline_errors",
]
