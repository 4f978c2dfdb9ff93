"""
Optimizer, curriculum and the per-variant training loop.
"""

import queue
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.config_validator import ModelConfig, TrainConfig
from src.core.checkpoint import Checkpoint
from src.core.objectives import compute_gradients, forward_batch
from src.data.features import TrainingItem, load_training_items
from src.data.manifest import Manifest
from src.model.extractor import AttractorPair, preset_extractor
from src.model.network import Gradients, ModelParams, count_params, init_params
from src.utils.error_handlers import (
    ConfigError,
    DataError,
    NonFiniteLossError,
    handle_pipeline_errors,
)
from src.utils.structured_logger import get_logger, log_duration

logger = get_logger(__name__)

CLIP_EPS = 1e-6
ATTRACTOR_ORDER = "target,interferer"

EpochCallback = Callable[[int, float], None]


@dataclass
class AdamState:
    step: int
    m: Gradients
    v: Gradients

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(step=0, m=params.zeros_like(), v=params.zeros_like())


def clip_gradients(grads: Gradients, max_norm: float) -> Tuple[Gradients, float]:
    """
    Rescale grads so their global L2 norm is at most max_norm.

    Returns:
        (clipped gradients, norm before clipping)
    """
    norm = grads.global_norm()
    scale = max_norm / (norm + CLIP_EPS)
    if scale >= 1.0:
        return grads, norm
    return Gradients({k: v * scale for k, v in grads.items()}), norm


def adam_update(
    params: ModelParams, grads: Gradients, state: AdamState, cfg: TrainConfig
) -> Tuple[ModelParams, AdamState]:
    """One bias-corrected Adam step; inputs are left untouched."""
    step = state.step + 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    new_params, new_m, new_v = {}, {}, {}
    for name, g in grads.items():
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** step)
        v_hat = v / (1.0 - b2 ** step)
        step_size = cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        new_params[name] = params[name] - step_size
        new_m[name], new_v[name] = m, v
    return params.replace(new_params), AdamState(step, Gradients(new_m), Gradients(new_v))


def train_step(
    params: ModelParams,
    batch: Sequence[TrainingItem],
    cfg: TrainConfig,
    opt_state: AdamState,
) -> Tuple[ModelParams, AdamState, float]:
    """
    Gradient, clip, Adam update.

    Raises:
        NonFiniteLossError: the loss is not finite; nothing is updated
    """
    if not batch:
        raise DataError("train_step needs a nonempty batch")
    loss, grads = compute_gradients(params, batch)
    if not grads.all_finite():
        raise NonFiniteLossError("Non-finite gradient", details={"loss": loss})
    clipped, norm = clip_gradients(grads, cfg.grad_clip_norm)
    new_params, new_state = adam_update(params, clipped, opt_state, cfg)
    logger.debug("train step", loss=loss, grad_norm=norm, step=new_state.step)
    return new_params, new_state, loss


def crop_length(cfg: TrainConfig, epoch: int) -> Optional[int]:
    """Crop length in frames for a 0-based epoch, None for whole utterances."""
    if cfg.resolved_curriculum() == "none":
        return None
    short, long = cfg.curriculum_frames
    return short if epoch < max(1, cfg.epochs // 2) else long


def crop_item(
    item: TrainingItem, frames: Optional[int], rng: np.random.Generator, variant: str
) -> TrainingItem:
    """
    Random crop of at most `frames` frames.

    Short utterances pass through whole, and so does any crop that would
    leave a membership the variant needs empty.
    """
    if frames is None or item.num_frames <= frames:
        return item
    start = int(rng.integers(0, item.num_frames - frames + 1))
    cropped = item.crop(start, frames)
    if variant in ("denet", "danet") and not cropped.target_membership.any():
        return item
    if variant == "danet" and not cropped.interferer_membership.any():
        return item
    return cropped


def epoch_batches(
    items: Sequence[TrainingItem], cfg: TrainConfig, epoch: int
) -> Iterator[List[TrainingItem]]:
    """Shuffled (and curriculum-cropped) batches of one epoch; seeded by (seed, epoch)."""
    rng = np.random.default_rng((cfg.seed, epoch))
    order = rng.permutation(len(items))
    frames = crop_length(cfg, epoch)
    for start in range(0, len(order), cfg.batch_size):
        yield [
            crop_item(items[i], frames, rng, cfg.variant)
            for i in order[start: start + cfg.batch_size]
        ]


_DONE = object()


class BatchPrefetcher:
    """
    Runs a batch generator on a background thread, at most `depth`
    batches ahead of the consumer. Errors raised by the producer are
    re-raised in the consumer.
    """

    def __init__(self, batches: Iterator, depth: int = 2):
        self._batches = batches
        self._queue: "queue.Queue" = queue.Queue(maxsize=max(1, depth))
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._produce, name="batch-prefetch", daemon=True)

    def _produce(self):
        try:
            for batch in self._batches:
                if self._stop.is_set():
                    return
                self._queue.put(batch)
        except Exception as e:  # forwarded to the consumer
            self._queue.put(e)
            return
        self._queue.put(_DONE)

    def __enter__(self) -> "BatchPrefetcher":
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        # unblock a producer waiting on a full queue
        while self._thread.is_alive():
            try:
                self._queue.get_nowait()
            except queue.Empty:
                self._thread.join(timeout=0.05)
        return False

    def __iter__(self):
        while True:
            item = self._queue.get()
            if item is _DONE:
                return
            if isinstance(item, Exception):
                raise item
            yield item


def collect_extractors(
    params: ModelParams, items: Sequence[TrainingItem], batch_size: int
) -> Dict[str, np.ndarray]:
    """Per-utterance extractors under the given weights, stacked (N, K) per kind."""
    collected: Dict[str, List[np.ndarray]] = {}
    for start in range(0, len(items), batch_size):
        for result in forward_batch(params, items[start: start + batch_size]):
            for name, value in result.extractors.items():
                collected.setdefault(name, []).append(value)
    return {name: np.stack(values) for name, values in collected.items()}


def build_checkpoint(
    params: ModelParams,
    items: Sequence[TrainingItem],
    cfg: TrainConfig,
    metadata: Dict,
) -> Checkpoint:
    """Inference constants from one pass over the training items with final weights."""
    extractors = collect_extractors(params, items, cfg.batch_size)
    variant = params.config.variant
    if variant == "denet":
        return Checkpoint(
            params=params,
            preset_extractor=preset_extractor(extractors["canonical"]),
            metadata=metadata,
            train_extractors=extractors["canonical"],
            train_anchor_extractors=extractors["anchor"],
        )
    if variant == "danet_anchor":
        return Checkpoint(
            params=params,
            preset_extractor=preset_extractor(extractors["anchor"]),
            metadata=metadata,
            train_extractors=extractors["anchor"],
        )
    pair = AttractorPair(
        preset_extractor(extractors["target"]), preset_extractor(extractors["interferer"])
    )
    return Checkpoint(
        params=params,
        attractor_pair=pair,
        metadata={**metadata, "attractor_order": ATTRACTOR_ORDER},
        train_extractors=extractors["target"],
    )


@handle_pipeline_errors("training")
def train(
    data: Union[Manifest, Sequence[TrainingItem]],
    cfg: TrainConfig,
    on_epoch: Optional[EpochCallback] = None,
    model_config: Optional[ModelConfig] = None,
) -> Checkpoint:
    """
    Train one model variant and derive its inference constants.

    Args:
        data: Manifest (loaded and transformed here) or prepared items
        cfg: Training configuration
        on_epoch: Called with (1-based epoch, epoch mean loss per item)
        model_config: Explicit network shape; defaults to cfg.preset with
            the frequency count of the data

    Raises:
        ConfigError: invalid configuration or variant mismatch
        DataError: empty manifest or degenerate items
        NonFiniteLossError: loss or parameters stopped being finite
    """
    ok, error = cfg.validate()
    if not ok:
        raise ConfigError(f"Invalid training config: {error}")

    items = load_training_items(data) if isinstance(data, Manifest) else list(data)
    if not items:
        raise DataError("empty manifest")

    num_freq = items[0].mixture_mag.shape[0]
    if model_config is None:
        model_config = ModelConfig.from_preset(cfg.preset, cfg.variant, num_freq=num_freq)
    if model_config.variant != cfg.variant:
        raise ConfigError(
            f"Model variant {model_config.variant!r} does not match "
            f"training variant {cfg.variant!r}"
        )

    run_log = logger.with_context(variant=cfg.variant, seed=cfg.seed)
    params = init_params(model_config, cfg.seed)
    state = AdamState.zeros(params)
    run_log.info(
        "Training started",
        items=len(items),
        epochs=cfg.epochs,
        num_params=count_params(model_config),
        curriculum=cfg.resolved_curriculum(),
    )

    epoch_losses: List[float] = []
    with log_duration("training", run_log):
        for epoch in range(cfg.epochs):
            total = 0.0
            batches = epoch_batches(items, cfg, epoch)
            with BatchPrefetcher(batches, cfg.prefetch_batches) as prefetched:
                for batch in prefetched:
                    params, state, loss = train_step(params, batch, cfg, state)
                    total += loss
            if not params.all_finite():
                raise NonFiniteLossError(
                    "Parameters became non-finite", details={"epoch": epoch + 1}
                )
            mean_loss = total / len(items)
            epoch_losses.append(mean_loss)
            run_log.info("Epoch finished", epoch=epoch + 1, loss=mean_loss)
            if on_epoch is not None:
                on_epoch(epoch + 1, mean_loss)

    metadata = {
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "final_loss": epoch_losses[-1],
        "epoch_losses": epoch_losses,
        "train_config": cfg.to_dict(),
        "num_items": len(items),
    }
    with log_duration("inference constants", run_log):
        checkpoint = build_checkpoint(params, items, cfg, metadata)
    return checkpoint
