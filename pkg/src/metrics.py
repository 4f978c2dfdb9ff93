"""
Separation quality metrics and oracle stream selection.

Both measures project the estimate onto the reference; values are capped
at +-EVAL_CONFIG["metric_cap_db"].
"""

from typing import Sequence, Tuple, Union

import numpy as np

from config.settings import EVAL_CONFIG
from src.audio.dsp import Waveform
from src.utils.error_handlers import DataError, ShapeError

WaveLike = Union[Waveform, np.ndarray]

CAP_DB = float(EVAL_CONFIG["metric_cap_db"])


def _samples(w: WaveLike) -> np.ndarray:
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def _projection_db(est: WaveLike, ref: WaveLike) -> float:
    est, ref = _samples(est), _samples(ref)
    if est.shape != ref.shape or est.ndim != 1:
        raise ShapeError(
            f"Estimate {est.shape} and reference {ref.shape} must be equal-length 1-D"
        )
    if est.size == 0:
        raise DataError("Cannot score empty signals")
    ref_power = float(ref @ ref)
    if ref_power == 0:
        raise DataError("Reference signal is all zeros")

    projected = (float(est @ ref) / ref_power) * ref
    residual = est - projected
    signal_power = float(projected @ projected)
    noise_power = float(residual @ residual)
    if noise_power == 0:
        return CAP_DB
    if signal_power == 0:
        return -CAP_DB
    return float(np.clip(10.0 * np.log10(signal_power / noise_power), -CAP_DB, CAP_DB))


def si_sdr(est: WaveLike, ref: WaveLike) -> float:
    """Scale-invariant SDR in dB."""
    return _projection_db(est, ref)


def sdr(est: WaveLike, ref: WaveLike) -> float:
    """
    Single-reference SDR in dB: target component is the orthogonal
    projection of est onto ref. With one reference this coincides with
    si_sdr.
    """
    return _projection_db(est, ref)


def oracle_select(streams: Sequence[WaveLike], ref: WaveLike) -> Tuple[int, WaveLike]:
    """Stream with the best SDR against ref; ties go to the lowest index."""
    if not len(streams):
        raise DataError("oracle_select needs at least one stream")
    scores = [sdr(s, ref) for s in streams]
    best = int(np.argmax(scores))
    return best, streams[best]
