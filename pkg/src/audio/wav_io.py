"""
16-bit PCM mono WAV reading and writing
"""

from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf

from config.settings import STFT_CONFIG
from src.audio.dsp import Waveform
from src.utils.error_handlers import AudioFormatError
from src.utils.structured_logger import get_logger

logger = get_logger(__name__)

PCM_SUBTYPE = "PCM_16"
PCM_SCALE = 32768.0


def read_wav(
    path: Union[str, Path], expected_rate: int = STFT_CONFIG["sample_rate_hz"]
) -> Waveform:
    """
    Read a 16-bit PCM mono WAV file.

    Raises:
        AudioFormatError: file is not WAV, not PCM_16, not mono or at
            another sample rate
    """
    path = Path(path)
    try:
        info = sf.info(str(path))
    except RuntimeError as e:
        raise AudioFormatError(f"Cannot read {path} as audio", e, {"path": str(path)})

    problems = []
    if info.format != "WAV":
        problems.append(f"container {info.format} (expected WAV)")
    if info.subtype != PCM_SUBTYPE:
        problems.append(f"subtype {info.subtype} (expected {PCM_SUBTYPE})")
    if info.channels != 1:
        problems.append(f"{info.channels} channels (expected mono)")
    if info.samplerate != expected_rate:
        problems.append(f"{info.samplerate} Hz (expected {expected_rate} Hz)")
    if problems:
        raise AudioFormatError(
            f"Unsupported audio format in {path}: " + ", ".join(problems),
            details={"path": str(path)},
        )

    data, rate = sf.read(str(path), dtype="int16", always_2d=False)
    return Waveform(data.astype(np.float64) / PCM_SCALE, rate)


def write_wav(path: Union[str, Path], w: Waveform) -> Path:
    """Write a waveform as 16-bit PCM mono WAV, clipping to full scale."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(w.samples, -1.0, (PCM_SCALE - 1) / PCM_SCALE)
    if np.any(clipped != w.samples):
        logger.warning("Clipping samples outside full scale", path=str(path))
    pcm = np.round(clipped * PCM_SCALE).astype(np.int16)
    sf.write(str(path), pcm, w.sample_rate_hz, subtype=PCM_SUBTYPE, format="WAV")
    return path


def quantize(samples: np.ndarray) -> np.ndarray:
    """Values exactly representable in 16-bit PCM (what read_wav returns)"""
    clipped = np.clip(samples, -1.0, (PCM_SCALE - 1) / PCM_SCALE)
    return np.round(clipped * PCM_SCALE) / PCM_SCALE
