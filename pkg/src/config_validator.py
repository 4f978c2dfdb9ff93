from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Optional, Tuple

from config.settings import MODEL_PRESETS, PRESET_ALIASES, TRAIN_CONFIG, VARIANT_CURRICULUM
from src.utils.error_handlers import ConfigError

VARIANTS = ("denet", "danet", "danet_anchor")
CURRICULA = ("none", "frames_100_then_400")


@dataclass
class ModelConfig:
    """Network hyper-parameters; tensor shapes depend only on these."""

    variant: str
    num_rnn_layers: int
    rnn_hidden: int
    embed_dim: int
    ff_hidden: int
    num_freq: int
    normalize_input: bool = False
    log_compress: bool = False

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> "ModelConfig":
        return cls(
            variant=config["variant"],
            num_rnn_layers=int(config["num_rnn_layers"]),
            rnn_hidden=int(config["rnn_hidden"]),
            embed_dim=int(config["embed_dim"]),
            ff_hidden=int(config["ff_hidden"]),
            num_freq=int(config["num_freq"]),
            normalize_input=bool(config.get("normalize_input", False)),
            log_compress=bool(config.get("log_compress", False)),
        )

    @classmethod
    def from_preset(
        cls, preset: str, variant: str, num_freq: Optional[int] = None, **overrides
    ) -> "ModelConfig":
        """Build a config from a named preset in MODEL_PRESETS (or an alias)."""
        name = PRESET_ALIASES.get(preset, preset)
        if name not in MODEL_PRESETS:
            raise ConfigError(
                f"Unknown preset {preset!r}", details={"known": sorted(MODEL_PRESETS)}
            )
        values = {**MODEL_PRESETS[name], "variant": variant, **overrides}
        if num_freq is not None:
            values["num_freq"] = num_freq
        return cls.from_dict(values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def has_canonical_mapper(self) -> bool:
        return self.variant == "denet"

    def validate(self) -> Tuple[bool, Optional[str]]:
        """
        Validate the model configuration.

        Returns:
            Tuple[bool, Optional[str]]: validity flag and an optional
                error message.
        """
        if self.variant not in VARIANTS:
            return False, f"Unknown variant {self.variant!r}; expected one of {VARIANTS}"
        if self.num_rnn_layers < 1:
            return False, "num_rnn_layers must be at least 1"
        if self.rnn_hidden < 1:
            return False, "rnn_hidden must be at least 1"
        if self.embed_dim < 1:
            return False, "embed_dim (K) must be at least 1"
        if self.ff_hidden < 1:
            return False, "ff_hidden must be at least 1"
        if self.num_freq < 2:
            return False, "num_freq must be at least 2"
        return True, None


@dataclass
class TrainConfig:
    """Optimizer and schedule settings for one training run."""

    variant: str = TRAIN_CONFIG["variant"]
    preset: str = TRAIN_CONFIG["preset"]
    epochs: int = TRAIN_CONFIG["epochs"]
    batch_size: int = TRAIN_CONFIG["batch_size"]
    learning_rate: float = TRAIN_CONFIG["learning_rate"]
    grad_clip_norm: float = TRAIN_CONFIG["grad_clip_norm"]
    curriculum: Optional[str] = TRAIN_CONFIG["curriculum"]
    seed: int = TRAIN_CONFIG["seed"]
    adam_beta1: float = TRAIN_CONFIG["adam_beta1"]
    adam_beta2: float = TRAIN_CONFIG["adam_beta2"]
    adam_eps: float = TRAIN_CONFIG["adam_eps"]
    curriculum_frames: Tuple[int, int] = field(
        default_factory=lambda: tuple(TRAIN_CONFIG["curriculum_frames"])
    )
    prefetch_batches: int = TRAIN_CONFIG["prefetch_batches"]

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in config.items() if k in known and v is not None}
        if "curriculum_frames" in values:
            values["curriculum_frames"] = tuple(int(v) for v in values["curriculum_frames"])
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values["curriculum_frames"] = list(self.curriculum_frames)
        return values

    def resolved_curriculum(self) -> str:
        """Explicit curriculum, or the default for the variant."""
        if self.curriculum:
            return self.curriculum
        return VARIANT_CURRICULUM.get(self.variant, "none")

    def validate(self) -> Tuple[bool, Optional[str]]:
        """
        Validate the training configuration.

        Returns:
            Tuple[bool, Optional[str]]: validity flag and an optional
                error message.
        """
        if self.variant not in VARIANTS:
            return False, f"Unknown variant {self.variant!r}; expected one of {VARIANTS}"
        if PRESET_ALIASES.get(self.preset, self.preset) not in MODEL_PRESETS:
            return False, f"Unknown preset {self.preset!r}"
        if self.epochs < 1:
            return False, "epochs must be at least 1"
        if self.batch_size < 1:
            return False, "batch_size must be at least 1"
        if not self.learning_rate > 0:
            return False, "learning_rate must be positive"
        if not self.grad_clip_norm > 0:
            return False, "grad_clip_norm must be positive"
        if self.resolved_curriculum() not in CURRICULA:
            return False, f"Unknown curriculum {self.curriculum!r}; expected one of {CURRICULA}"
        if len(self.curriculum_frames) != 2 or min(self.curriculum_frames) < 1:
            return False, "curriculum_frames must be two positive frame counts"
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            return False, "Adam betas must lie in [0, 1)"
        if self.prefetch_batches < 1:
            return False, "prefetch_batches must be at least 1"
        return True, None
