"""
Training objectives and their exact gradients.

Every variant reduces to masks compared against source magnitudes with
the masked reconstruction error; the variants differ in where the mask's
extractor comes from:

    denet         anchor extractor -> canonical mapping -> canonical
                  extractor from the ideal membership -> mask
    danet_anchor  anchor extractor -> mask in the primary space
    danet         one attractor per source from the ideal memberships,
                  both masks scored against their own source

Batch losses use sum reduction over items.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.data.features import TrainingItem
from src.model.extractor import (
    anchor_extractor,
    canonical_extractor,
    centroid,
    centroid_backward,
    similarity_mask,
    similarity_mask_backward,
)
from src.model.network import (
    Gradients,
    ModelParams,
    canonical_backward,
    canonical_forward,
    encode_batch,
    encode_batch_backward,
)
from src.utils.error_handlers import DataError, NonFiniteLossError, ShapeError

LossFn = Callable[[np.ndarray, np.ndarray, np.ndarray], Tuple[float, np.ndarray]]


def reconstruction_loss(x: np.ndarray, s: np.ndarray, m: np.ndarray) -> float:
    """sum over bins of (s - x * m)^2"""
    x, s, m = (np.asarray(a, dtype=np.float64) for a in (x, s, m))
    if not x.shape == s.shape == m.shape:
        raise ShapeError(f"Shapes differ: mixture {x.shape}, source {s.shape}, mask {m.shape}")
    residual = s - x * m
    return float(np.sum(residual * residual))


def reconstruction_loss_and_grad(
    x: np.ndarray, s: np.ndarray, m: np.ndarray
) -> Tuple[float, np.ndarray]:
    """Loss and dL/dm"""
    loss = reconstruction_loss(x, s, m)
    return loss, -2.0 * x * (s - x * m)


@dataclass
class ItemForward:
    """Per-item forward results (masks in source order, target first)."""

    loss: float
    masks: List[np.ndarray]
    extractors: Dict[str, np.ndarray]


def _needs_anchor(variant: str) -> bool:
    return variant in ("denet", "danet_anchor")


def _check_item(item: TrainingItem, num_freq: int, variant: str) -> None:
    if item.mixture_mag.shape[0] != num_freq:
        raise ShapeError(
            f"Item {item.id}: {item.mixture_mag.shape[0]} frequency rows, model expects {num_freq}"
        )
    if variant == "danet" and not item.interferer_membership.any():
        raise DataError(f"Item {item.id}: empty interferer membership")
    if variant in ("denet", "danet") and not item.target_membership.any():
        raise DataError(f"Item {item.id}: empty target membership")


def _encode(params: ModelParams, batch: Sequence[TrainingItem]):
    """One encoder pass over [anchors..., mixtures...] (mixtures only for danet)."""
    mixtures = [item.mixture_mag for item in batch]
    if _needs_anchor(params.config.variant):
        fields, cache = encode_batch(params, [item.anchor_mag for item in batch] + mixtures)
        return fields[: len(batch)], fields[len(batch):], cache
    fields, cache = encode_batch(params, mixtures)
    return [None] * len(batch), fields, cache


def _item_forward_backward(
    params: ModelParams,
    item: TrainingItem,
    v_anchor: Optional[np.ndarray],
    v: np.ndarray,
    loss_fn: LossFn,
    grads: Optional[Gradients],
) -> Tuple[ItemForward, Optional[np.ndarray], Optional[np.ndarray]]:
    """
    Forward one item and, when grads is given, backpropagate to the
    embedding fields (mapper gradients are accumulated into grads).

    Returns:
        (forward results, dL/dV_anchor, dL/dV_mixture)
    """
    variant = params.config.variant
    x = item.mixture_mag
    backward = grads is not None
    d_va = d_v = None

    if variant == "denet":
        a = anchor_extractor(v_anchor, item.anchor_presence)
        vt, ccache = canonical_forward(params, a, v)
        at = canonical_extractor(vt, item.target_membership)
        m = similarity_mask(at, vt)
        loss, d_m = loss_fn(x, item.target_mag, m)
        result = ItemForward(loss, [m], {"anchor": a, "canonical": at})
        if backward:
            d_at, d_vt = similarity_mask_backward(d_m, at, vt, m)
            d_vt = d_vt + centroid_backward(d_at, item.target_membership)
            d_a, d_v, ff_grads = canonical_backward(params, d_vt, ccache)
            grads.add_(ff_grads)
            d_va = centroid_backward(d_a, item.anchor_presence)

    elif variant == "danet_anchor":
        a = anchor_extractor(v_anchor, item.anchor_presence)
        m = similarity_mask(a, v)
        loss, d_m = loss_fn(x, item.target_mag, m)
        result = ItemForward(loss, [m], {"anchor": a})
        if backward:
            d_a, d_v = similarity_mask_backward(d_m, a, v, m)
            d_va = centroid_backward(d_a, item.anchor_presence)

    else:
        memberships = (item.target_membership, item.interferer_membership)
        sources = (item.target_mag, item.interferer_mag)
        names = ("target", "interferer")
        loss, masks, extractors = 0.0, [], {}
        d_v = np.zeros_like(v) if backward else None
        for name, y, s in zip(names, memberships, sources):
            a = centroid(v, y, what=f"{name} membership")
            m = similarity_mask(a, v)
            part, d_m = loss_fn(x, s, m)
            loss += part
            masks.append(m)
            extractors[name] = a
            if backward:
                d_a, d_v_mask = similarity_mask_backward(d_m, a, v, m)
                d_v += d_v_mask + centroid_backward(d_a, y)
        result = ItemForward(loss, masks, extractors)

    return result, d_va, d_v


def _check_finite(loss: float, batch: Sequence[TrainingItem], item_losses: List[float]) -> None:
    if not np.isfinite(loss):
        bad = [item.id for item, value in zip(batch, item_losses) if not np.isfinite(value)]
        raise NonFiniteLossError(
            "Non-finite training loss",
            details={"loss": str(loss), "items": bad[:5], "num_items": len(batch)},
        )


def forward_batch(params: ModelParams, batch: Sequence[TrainingItem],
                  loss_fn: LossFn = reconstruction_loss_and_grad) -> List[ItemForward]:
    """Forward pass only (no gradients)."""
    cfg = params.config
    for item in batch:
        _check_item(item, cfg.num_freq, cfg.variant)
    anchors, mixtures, _ = _encode(params, batch)
    return [
        _item_forward_backward(params, item, va, v, loss_fn, None)[0]
        for item, va, v in zip(batch, anchors, mixtures)
    ]


def batch_loss(params: ModelParams, batch: Sequence[TrainingItem],
               loss_fn: LossFn = reconstruction_loss_and_grad) -> float:
    return float(sum(result.loss for result in forward_batch(params, batch, loss_fn)))


def compute_gradients(
    params: ModelParams,
    batch: Sequence[TrainingItem],
    loss_fn: Optional[LossFn] = None,
) -> Tuple[float, Gradients]:
    """
    Summed batch loss and its exact gradient w.r.t. every parameter tensor.

    Gradients flow through both the mixture and the anchor branch.

    Raises:
        NonFiniteLossError: the loss is NaN or Inf
    """
    if not batch:
        raise DataError("compute_gradients needs a nonempty batch")
    loss_fn = loss_fn or reconstruction_loss_and_grad
    cfg = params.config
    for item in batch:
        _check_item(item, cfg.num_freq, cfg.variant)

    grads = params.zeros_like()
    anchors, mixtures, cache = _encode(params, batch)
    item_losses, d_anchor, d_mixture = [], [], []
    for item, va, v in zip(batch, anchors, mixtures):
        result, d_va, d_v = _item_forward_backward(params, item, va, v, loss_fn, grads)
        item_losses.append(result.loss)
        d_anchor.append(d_va)
        d_mixture.append(d_v)

    loss = float(sum(item_losses))
    _check_finite(loss, batch, item_losses)

    d_fields = d_mixture if not _needs_anchor(cfg.variant) else d_anchor + d_mixture
    grads.add_(encode_batch_backward(params, d_fields, cache))
    return loss, grads
