from .dsp import Waveform, StftConfig, stft, istft, presence_mask

__all__ = ["Waveform", "StftConfig", "stft", "istft", "presence_mask"]
