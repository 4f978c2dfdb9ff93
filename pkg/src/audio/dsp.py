"""
Waveform <-> time-frequency conversion and amplitude-threshold masks.

Spectrograms are plain numpy arrays laid out frequency-major, F x T.
"""

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.signal import get_window

from config.settings import STFT_CONFIG
from src.utils.error_handlers import DataError, ShapeError


@dataclass(frozen=True)
class Waveform:
    """Mono waveform with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: int = STFT_CONFIG["sample_rate_hz"]

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError(f"Waveform must be one-dimensional, got shape {samples.shape}")
        if self.sample_rate_hz <= 0:
            raise DataError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise DataError("Waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class StftConfig:
    """Frame layout; analysis and synthesis share the sqrt-Hann window."""

    win_len_samples: int = STFT_CONFIG["win_len_samples"]
    hop_samples: int = STFT_CONFIG["hop_samples"]
    window: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.win_len_samples < 2 or self.hop_samples < 1:
            raise DataError("win_len_samples must be >= 2 and hop_samples >= 1")
        if self.win_len_samples % self.hop_samples:
            raise DataError(
                f"hop {self.hop_samples} must divide window length {self.win_len_samples}"
            )
        # periodic Hann, so squared windows sum to one at 50% overlap
        window = np.sqrt(get_window("hann", self.win_len_samples, fftbins=True))
        window.setflags(write=False)
        object.__setattr__(self, "window", window)

    @property
    def num_freq(self) -> int:
        return self.win_len_samples // 2 + 1

    def num_frames(self, num_samples: int) -> int:
        """Frame count, keeping the zero-padded final partial frame."""
        extra = num_samples - self.win_len_samples
        return 1 + -(-extra // self.hop_samples)

    def output_length(self, num_frames: int) -> int:
        return self.win_len_samples + (num_frames - 1) * self.hop_samples


WaveLike = Union[Waveform, np.ndarray]


def _as_samples(w: WaveLike) -> np.ndarray:
    if isinstance(w, Waveform):
        return w.samples
    samples = np.asarray(w, dtype=np.float64)
    if samples.ndim != 1:
        raise ShapeError(f"Expected a one-dimensional waveform, got shape {samples.shape}")
    return samples


def stft(w: WaveLike, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """
    Short-time Fourier transform.

    Args:
        w: Waveform (or 1-D sample array)
        cfg: Frame layout

    Returns:
        Complex F x T spectrogram, F = win_len/2 + 1
    """
    samples = _as_samples(w)
    if samples.shape[0] < cfg.win_len_samples:
        raise DataError(
            "input too short",
            details={"samples": int(samples.shape[0]), "win_len": cfg.win_len_samples},
        )

    num_frames = cfg.num_frames(samples.shape[0])
    padded = np.zeros(cfg.output_length(num_frames))
    padded[: samples.shape[0]] = samples

    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.win_len_samples)
    frames = frames[:: cfg.hop_samples][:num_frames]
    return np.fft.rfft(frames * cfg.window, axis=-1).T


def istft(s: np.ndarray, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """
    Inverse STFT by weighted overlap-add with the sqrt-Hann synthesis window.

    Returns:
        Samples of length win_len + (T - 1) * hop
    """
    s = np.asarray(s)
    if s.ndim != 2 or s.shape[0] != cfg.num_freq:
        raise ShapeError(
            f"Spectrogram shape {s.shape} inconsistent with {cfg.num_freq} frequency bins"
        )

    num_frames = s.shape[1]
    hop = cfg.hop_samples
    ratio = cfg.win_len_samples // hop
    frames = np.fft.irfft(s.T, n=cfg.win_len_samples, axis=-1) * cfg.window

    blocks = np.zeros((num_frames + ratio - 1, hop))
    for j in range(ratio):
        blocks[j: j + num_frames] += frames[:, j * hop: (j + 1) * hop]
    return blocks.reshape(-1)


def magnitude(s: np.ndarray) -> np.ndarray:
    """Magnitude spectrogram of a complex spectrogram"""
    return np.abs(s)


def presence_mask(
    m: np.ndarray, threshold_db: float = STFT_CONFIG["presence_threshold_db"]
) -> np.ndarray:
    """
    Bins within threshold_db of the loudest bin.

    Args:
        m: Nonnegative magnitude spectrogram
        threshold_db: Amplitude threshold below the maximum

    Returns:
        Boolean mask of m's shape; all False when m is silent
    """
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        raise DataError("presence_mask needs a nonempty spectrogram")
    peak = m.max()
    if peak <= 0:
        return np.zeros(m.shape, dtype=bool)
    return m > peak * 10.0 ** (-threshold_db / 20.0)


def apply_mask(s: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Scale a complex spectrogram by a real mask, keeping mixture phase"""
    s = np.asarray(s)
    mask = np.asarray(mask, dtype=np.float64)
    if s.shape != mask.shape:
        raise ShapeError(f"Mask shape {mask.shape} does not match spectrogram {s.shape}")
    return s * mask


def resynthesize(s: np.ndarray, num_samples: int, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """istft trimmed (or zero-extended) to num_samples"""
    out = istft(s, cfg)
    if out.shape[0] >= num_samples:
        return out[:num_samples]
    return np.pad(out, (0, num_samples - out.shape[0]))
