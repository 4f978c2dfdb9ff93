"""
Training items: magnitude spectrograms and binary masks of one sample.
"""

from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from src.audio.dsp import StftConfig, magnitude, presence_mask, stft
from src.data.manifest import Manifest, SampleAudio
from src.model.extractor import ideal_membership
from src.utils.error_handlers import DataError
from src.utils.workers import parallel_map


@dataclass(frozen=True)
class TrainingItem:
    """
    Everything the objectives need for one sample.

    Multiple interferers are summed into one interfering source; the
    target membership still compares against each interferer separately.
    """

    id: str
    mixture_mag: np.ndarray  # F x T
    target_mag: np.ndarray  # F x T
    interferer_mag: np.ndarray  # F x T, summed interferers
    anchor_mag: np.ndarray  # F x Ta
    anchor_presence: np.ndarray  # F x Ta bool
    target_membership: np.ndarray  # F x T bool
    interferer_membership: np.ndarray  # F x T bool

    @property
    def num_frames(self) -> int:
        return self.mixture_mag.shape[1]

    def crop(self, start: int, frames: int) -> "TrainingItem":
        """Frames [start, start + frames) of the mixture-side arrays; the anchor is kept."""
        if frames >= self.num_frames:
            return self
        if not 0 <= start <= self.num_frames - frames:
            raise DataError(f"Crop start {start} out of range for {self.num_frames} frames")
        window = slice(start, start + frames)
        return replace(
            self,
            mixture_mag=self.mixture_mag[:, window],
            target_mag=self.target_mag[:, window],
            interferer_mag=self.interferer_mag[:, window],
            target_membership=self.target_membership[:, window],
            interferer_membership=self.interferer_membership[:, window],
        )


def item_from_spectra(
    item_id: str,
    mixture_mag: np.ndarray,
    target_mag: np.ndarray,
    interferer_mags: List[np.ndarray],
    anchor_mag: np.ndarray,
    interferer_sum_mag: Optional[np.ndarray] = None,
) -> TrainingItem:
    """
    Assemble an item from magnitude spectra.

    interferer_sum_mag is the magnitude of the summed interferer signal;
    without it the interferer magnitudes are added.
    """
    if interferer_sum_mag is None:
        interferer_sum_mag = np.sum(interferer_mags, axis=0)
    target_membership = ideal_membership(target_mag, interferer_mags, mixture=mixture_mag)
    return TrainingItem(
        id=item_id,
        mixture_mag=mixture_mag,
        target_mag=target_mag,
        interferer_mag=interferer_sum_mag,
        anchor_mag=anchor_mag,
        anchor_presence=presence_mask(anchor_mag),
        target_membership=target_membership,
        interferer_membership=presence_mask(mixture_mag) & ~target_membership,
    )


def prepare_item(sample: SampleAudio, stft_cfg: Optional[StftConfig] = None) -> TrainingItem:
    """STFT magnitudes and masks of one loaded sample"""
    cfg = stft_cfg or StftConfig()
    mixture_mag = magnitude(stft(sample.mixture, cfg))
    target_mag = magnitude(stft(sample.target, cfg))
    interferer_mags = [magnitude(stft(w, cfg)) for w in sample.interferers]
    interferer_sum = magnitude(stft(np.sum([w.samples for w in sample.interferers], axis=0), cfg))
    return item_from_spectra(
        sample.entry.id, mixture_mag, target_mag, interferer_mags,
        magnitude(stft(sample.anchor, cfg)), interferer_sum,
    )


def load_training_items(
    manifest: Manifest, stft_cfg: Optional[StftConfig] = None
) -> List[TrainingItem]:
    """Prepare every manifest entry (in parallel, manifest order kept)."""
    return parallel_map(lambda e: prepare_item(manifest.load_audio(e), stft_cfg), manifest.entries)
