"""
Inference paths of the trained variants.

    preset             denet: preset extractor in the canonical space
                       danet_anchor: preset extractor in the primary space
    oracle             denet: canonical extractor from the ideal membership
    oracle-membership  alias of oracle
    anchor             danet_anchor: the anchor's own extractor
    nearest            danet: fixed attractor closest to the anchor extractor
    danet-oracle       danet: both fixed-attractor masks, the better stream
                       picked against the reference
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.audio.dsp import (
    StftConfig,
    Waveform,
    apply_mask,
    magnitude,
    presence_mask,
    resynthesize,
    stft,
)
from src.core.checkpoint import Checkpoint
from src.metrics import oracle_select
from src.model.extractor import (
    anchor_extractor,
    canonical_extractor,
    ideal_membership,
    nearest_attractor,
    similarity_mask,
)
from src.model.lstm import lstm_step
from src.model.network import encode_primary, input_features, lstm_names, map_canonical
from src.utils.error_handlers import ConfigError
from src.utils.structured_logger import get_logger

logger = get_logger(__name__)

MODE_VARIANTS: Dict[str, Tuple[str, ...]] = {
    "preset": ("denet", "danet_anchor"),
    "oracle": ("denet",),
    "oracle-membership": ("denet",),
    "anchor": ("danet_anchor",),
    "nearest": ("danet",),
    "danet-oracle": ("danet",),
}
STREAMING_MODES = ("preset", "anchor", "nearest")

MaskResult = Union[np.ndarray, List[np.ndarray]]


def check_mode(checkpoint: Checkpoint, mode: str) -> None:
    """Raises ConfigError when the mode does not apply to the checkpoint's variant."""
    if mode not in MODE_VARIANTS:
        raise ConfigError(f"Unknown mode {mode!r}; expected one of {sorted(MODE_VARIANTS)}")
    if checkpoint.variant not in MODE_VARIANTS[mode]:
        raise ConfigError(
            f"Mode {mode!r} does not apply to {checkpoint.variant} checkpoints",
            details={"valid_variants": list(MODE_VARIANTS[mode])},
        )


def needs_anchor(checkpoint: Checkpoint, mode: str) -> bool:
    if mode == "danet-oracle":
        return False
    return not (mode == "preset" and checkpoint.variant == "danet_anchor")


def _anchor_vector(
    checkpoint: Checkpoint, anchor_mag: Optional[np.ndarray], mode: str
) -> np.ndarray:
    if anchor_mag is None:
        raise ConfigError(f"Mode {mode!r} needs an anchor utterance")
    v_anchor = encode_primary(checkpoint.params, anchor_mag)
    return anchor_extractor(v_anchor, presence_mask(anchor_mag))


def mode_extractor(
    checkpoint: Checkpoint, mode: str, anchor_mag: Optional[np.ndarray]
) -> np.ndarray:
    """The fixed extractor a non-oracle mode applies to every mixture bin."""
    if mode == "preset":
        return checkpoint.preset_extractor
    a = _anchor_vector(checkpoint, anchor_mag, mode)
    if mode == "nearest":
        return nearest_attractor(checkpoint.attractor_pair, a)
    return a


def estimate_mask(
    checkpoint: Checkpoint,
    mode: str,
    mixture_mag: np.ndarray,
    anchor_mag: Optional[np.ndarray] = None,
    membership: Optional[np.ndarray] = None,
) -> MaskResult:
    """
    F x T mask for the target speaker (a list of both stream masks in
    danet-oracle mode).

    Raises:
        ConfigError: mode/variant mismatch, or a required anchor or
            membership is missing
    """
    check_mode(checkpoint, mode)
    params = checkpoint.params
    v = encode_primary(params, mixture_mag)

    if mode == "danet-oracle":
        return [similarity_mask(a, v) for a in checkpoint.attractor_pair.as_list()]

    if checkpoint.variant != "denet":
        return similarity_mask(mode_extractor(checkpoint, mode, anchor_mag), v)

    vt = map_canonical(params, _anchor_vector(checkpoint, anchor_mag, mode), v)
    if mode == "preset":
        return similarity_mask(checkpoint.preset_extractor, vt)
    if membership is None:
        raise ConfigError("Oracle mode needs the ideal target membership")
    return similarity_mask(canonical_extractor(vt, membership), vt)


@dataclass
class Extraction:
    waveform: Waveform
    mask: np.ndarray
    selected_stream: Optional[int] = None


def extract_waveform(
    checkpoint: Checkpoint,
    mode: str,
    mixture: Waveform,
    anchor: Optional[Waveform] = None,
    target: Optional[Waveform] = None,
    interferers: Sequence[Waveform] = (),
    streaming: bool = False,
    stft_cfg: Optional[StftConfig] = None,
) -> Extraction:
    """
    Masked mixture resynthesized with the mixture phase, trimmed to the
    mixture length.

    Oracle modes need the target reference (and, for oracle membership,
    the interferer references).
    """
    cfg = stft_cfg or StftConfig()
    check_mode(checkpoint, mode)
    spec = stft(mixture, cfg)
    mixture_mag = magnitude(spec)
    anchor_mag = magnitude(stft(anchor, cfg)) if anchor is not None else None

    membership = None
    if mode in ("oracle", "oracle-membership"):
        if target is None or not interferers:
            raise ConfigError(f"Mode {mode!r} needs --target and at least one --interferer")
        membership = ideal_membership(
            magnitude(stft(target, cfg)),
            [magnitude(stft(w, cfg)) for w in interferers],
            mixture=mixture_mag,
        )
    if mode == "danet-oracle" and target is None:
        raise ConfigError("Mode 'danet-oracle' needs the target reference")

    if streaming:
        mask = StreamingExtractor(checkpoint, mode, anchor_mag).run(mixture_mag)
    else:
        mask = estimate_mask(checkpoint, mode, mixture_mag, anchor_mag, membership)
    logger.debug(
        "Mask estimated", mode=mode, streaming=streaming, frames=mixture_mag.shape[1]
    )

    n = len(mixture)
    if isinstance(mask, list):
        streams = [resynthesize(apply_mask(spec, m), n, cfg) for m in mask]
        index, _ = oracle_select(streams, target.samples[:n])
        return Extraction(Waveform(streams[index], mixture.sample_rate_hz), mask[index], index)
    return Extraction(
        Waveform(resynthesize(apply_mask(spec, mask), n, cfg), mixture.sample_rate_hz), mask
    )


class StreamingExtractor:
    """
    Frame-by-frame mask estimation, strictly left to right.

    Each LSTM layer carries its forward state across frames; the backward
    direction only sees the current frame (zero state). Input
    normalization uses the running maximum of the frames seen so far.
    """

    def __init__(
        self, checkpoint: Checkpoint, mode: str, anchor_mag: Optional[np.ndarray] = None
    ):
        check_mode(checkpoint, mode)
        if mode not in STREAMING_MODES:
            raise ConfigError(f"Streaming supports modes {STREAMING_MODES}, not {mode!r}")
        self.checkpoint = checkpoint
        self.params = checkpoint.params
        self.config = checkpoint.model_config
        self.mode = mode
        self.anchor_a: Optional[np.ndarray] = None
        if self.config.variant == "denet":
            self.anchor_a = _anchor_vector(checkpoint, anchor_mag, mode)
            self.extractor = checkpoint.preset_extractor
        else:
            self.extractor = mode_extractor(checkpoint, mode, anchor_mag)
        self.reset()

    def reset(self) -> None:
        hidden = self.config.rnn_hidden
        self._state = [
            (np.zeros((1, hidden)), np.zeros((1, hidden)))
            for _ in range(self.config.num_rnn_layers)
        ]
        self._peak = 0.0

    def _features(self, frame: np.ndarray) -> np.ndarray:
        if self.config.normalize_input:
            self._peak = max(self._peak, float(frame.max()))
        return input_features(self.config, frame, peak=self._peak)

    def push(self, frame: np.ndarray) -> np.ndarray:
        """Mask column (F,) for one magnitude frame (F,)."""
        frame = np.asarray(frame, dtype=np.float64)
        if frame.shape != (self.config.num_freq,):
            raise ConfigError(f"Frame shape {frame.shape} != ({self.config.num_freq},)")
        h = self._features(frame)[None, :]
        zeros = np.zeros((1, self.config.rnn_hidden))
        for layer in range(self.config.num_rnn_layers):
            fw = [self.params[n] for n in lstm_names(layer, "fw")]
            bw = [self.params[n] for n in lstm_names(layer, "bw")]
            h_prev, c_prev = self._state[layer]
            h_fw, c_fw, _, _ = lstm_step(h, h_prev, c_prev, *fw)
            h_bw, _, _, _ = lstm_step(h, zeros, zeros, *bw)
            self._state[layer] = (h_fw, c_fw)
            h = np.concatenate([h_fw, h_bw], axis=-1)

        emb = np.tanh(h @ self.params["proj.weight"] + self.params["proj.bias"])
        v = emb.reshape(self.config.num_freq, 1, self.config.embed_dim)
        if self.anchor_a is not None:
            v = map_canonical(self.params, self.anchor_a, v)
        return similarity_mask(self.extractor, v)[:, 0]

    def run(self, mixture_mag: np.ndarray) -> np.ndarray:
        """F x T mask of a whole spectrogram, fed one frame at a time."""
        self.reset()
        return np.stack([self.push(col) for col in np.asarray(mixture_mag).T], axis=1)
