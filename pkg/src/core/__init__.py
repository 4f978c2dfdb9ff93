from .checkpoint import Checkpoint, save_checkpoint, load_checkpoint
from .objectives import reconstruction_loss, compute_gradients
from .trainer import AdamState, train_step, train
from .inference import estimate_mask, extract_waveform, StreamingExtractor
from .evaluator import eval_report, write_report, compare_reports

__all__ = [
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "reconstruction_loss",
    "compute_gradients",
    "AdamState",
    "train_step",
    "train",
    "estimate_mask",
    "extract_waveform",
    "StreamingExtractor",
    "eval_report",
    "write_report",
    "compare_reports",
]
