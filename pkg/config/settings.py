import os

from dotenv import load_dotenv

"""
Toolkit configuration settings
"""

load_dotenv()

# Signal processing configuration
STFT_CONFIG = {
    "sample_rate_hz": 16000,
    "win_len_samples": 512,  # 32 ms at 16 kHz
    "hop_samples": 256,  # 16 ms at 16 kHz
    "presence_threshold_db": 40.0,  # bins more than 40 dB below max are ignored
}

# Network presets
MODEL_PRESETS = {
    "paper": {
        "num_rnn_layers": 4,
        "rnn_hidden": 600,
        "embed_dim": 40,
        "ff_hidden": 256,
        "num_freq": 257,
        "normalize_input": False,
        "log_compress": False,
    },
    "desk": {
        "num_rnn_layers": 2,
        "rnn_hidden": 64,
        "embed_dim": 20,
        "ff_hidden": 64,
        "num_freq": 257,
        "normalize_input": True,  # per-utterance max normalization
        "log_compress": True,  # 80 dB log range after normalization
    },
}

# Alternative preset names
PRESET_ALIASES = {"full": "paper"}

# Training configuration
TRAIN_CONFIG = {
    "variant": "denet",
    "preset": "desk",
    "epochs": 20,
    "batch_size": 4,
    "learning_rate": 1e-3,
    "grad_clip_norm": 5.0,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_eps": 1e-8,
    "curriculum": None,  # None -> per-variant default
    "curriculum_frames": (100, 400),
    "prefetch_batches": 2,
    "seed": 0,
}

# Default curriculum per model variant
VARIANT_CURRICULUM = {
    "denet": "none",  # utterance-level input
    "danet_anchor": "none",
    "danet": "frames_100_then_400",
}

# Toy corpus configuration
DATA_CONFIG = {
    "speakers": 8,
    "utts": 25,
    "sir_min": 0.0,
    "sir_max": 10.0,
    "interferers": 1,
    "test_speakers": 3,
    "test_utts": 8,
    "interferer_pool": 3,  # shared by the train and test splits
    "anchor_duration_s": 0.9,
    "mixture_duration_s": (1.0, 1.6),
    "peak_level": 0.5,
    "clip_level": 0.99,
    "seed": 0,
}

# Evaluation configuration
EVAL_CONFIG = {
    "metric_cap_db": 100.0,
    "modes": ("preset", "oracle", "oracle-membership", "anchor", "nearest", "danet-oracle"),
}

# System configuration
SYSTEM_CONFIG = {
    "threads": int(os.getenv("DXNET_THREADS", str(os.cpu_count() or 1))),
}

# Logging configuration
LOGGING_CONFIG = {
    "level": os.getenv("DXNET_LOG_LEVEL", "INFO"),
    "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    "date_format": "%Y-%m-%d %H:%M:%S",
    "file": os.getenv("DXNET_LOG_FILE", "logs/denet.log"),
    "max_bytes": 10 * 1024 * 1024,  # 10 MB
    "backup_count": 3,
}

# Default configuration
CONFIG = {
    "stft": STFT_CONFIG,
    "model_presets": MODEL_PRESETS,
    "train": TRAIN_CONFIG,
    "variant_curriculum": VARIANT_CURRICULUM,
    "data": DATA_CONFIG,
    "eval": EVAL_CONFIG,
    "system": SYSTEM_CONFIG,
    "logging": LOGGING_CONFIG,
}
