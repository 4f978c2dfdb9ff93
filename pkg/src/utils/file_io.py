"""
Atomic file writes for reports, manifests and checkpoints
"""

import os
import tempfile
from pathlib import Path
from typing import Union

from src.utils.error_handlers import DenetError
from src.utils.structured_logger import get_logger

logger = get_logger(__name__)


class FileOperationError(DenetError):
    """Raised when file operations (read/write) fail"""

    pass


def atomic_write_bytes(target_path: Union[str, Path], data: bytes) -> Path:
    """Write bytes to a temporary sibling file and rename it into place."""
    target_path = Path(target_path)
    target_path.parent.mkdir(parents=True, exist_ok=True)
    temp_file_path = None
    try:
        with tempfile.NamedTemporaryFile(
            mode="wb",
            delete=False,
            dir=target_path.parent,
            prefix=target_path.name + ".",
            suffix=".tmp",
        ) as tmp_f:
            temp_file_path = Path(tmp_f.name)
            tmp_f.write(data)

        os.replace(temp_file_path, target_path)
        logger.debug(f"Atomically wrote {len(data)} bytes to {target_path}")
        return target_path
    except Exception as e:
        error_msg = f"Error during atomic write to {target_path}"
        logger.error(error_msg, exc_info=True)
        if temp_file_path and temp_file_path.exists():
            try:
                temp_file_path.unlink()
            except Exception as cleanup_e:
                logger.error(f"Failed to cleanup temp file {temp_file_path}: {cleanup_e}")
        raise FileOperationError(error_msg, e, {"target_file": str(target_path)})


def atomic_write_text(target_path: Union[str, Path], text: str) -> Path:
    """UTF-8 text variant of atomic_write_bytes"""
    return atomic_write_bytes(target_path, text.encode("utf-8"))
