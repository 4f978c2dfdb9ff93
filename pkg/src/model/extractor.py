"""
Attractor / extractor algebra.

An extractor is the mean embedding of the bins selected by a binary
membership; masks are the sigmoid of the inner product between every
bin's embedding and an extractor. Backward helpers return the exact
vector-Jacobian products used in training.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.settings import STFT_CONFIG
from src.model.lstm import sigmoid
from src.utils.error_handlers import DataError, ShapeError

# keeps masks strictly inside (0, 1) once the sigmoid saturates
MASK_EPS = 1e-15


@dataclass(frozen=True)
class AttractorPair:
    """Fixed attractors collected from training data (target first)."""

    a1: np.ndarray
    a2: np.ndarray

    def __post_init__(self):
        a1 = np.asarray(self.a1, dtype=np.float64)
        a2 = np.asarray(self.a2, dtype=np.float64)
        if a1.shape != a2.shape or a1.ndim != 1:
            raise ShapeError(f"Attractor shapes differ: {a1.shape} vs {a2.shape}")
        if not (np.all(np.isfinite(a1)) and np.all(np.isfinite(a2))):
            raise DataError("Attractor pair contains non-finite values")
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a2", a2)

    def as_list(self) -> List[np.ndarray]:
        return [self.a1, self.a2]


def _check_field(v: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    v = np.asarray(v, dtype=np.float64)
    y = np.asarray(y)
    if v.ndim < 2 or v.shape[:-1] != y.shape:
        raise ShapeError(f"Embedding field {v.shape} and membership {y.shape} do not agree")
    return v, y.astype(np.float64)


def centroid(v: np.ndarray, y: np.ndarray, what: str = "membership") -> np.ndarray:
    """
    Mean of the embeddings v[f, t] over bins with y[f, t] = 1.

    Raises:
        DataError: no bin is selected
    """
    v, weights = _check_field(v, y)
    total = weights.sum()
    if total <= 0:
        raise DataError(f"empty {what}", details={"bins": int(weights.size)})
    k = v.shape[-1]
    return weights.reshape(-1) @ v.reshape(-1, k) / total


def centroid_backward(d_a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """dL/dv for a = centroid(v, y) given dL/da"""
    weights = np.asarray(y, dtype=np.float64)
    return weights[..., None] * (np.asarray(d_a)[None, None, :] / weights.sum())


def anchor_extractor(v: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Anchor extractor: mean primary embedding over present anchor bins."""
    return centroid(v, y, what="anchor presence")


def canonical_extractor(vt: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Canonical extractor: mean canonical embedding over target-membership bins."""
    return centroid(vt, y, what="target membership")


def similarity_mask(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    """m[f, t] = sigmoid(<a, v[f, t]>), kept strictly inside (0, 1)."""
    a = np.asarray(a, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != a.shape[-1]:
        raise ShapeError(f"Extractor has {a.shape[-1]} dims, embeddings have {v.shape[-1]}")
    return np.clip(sigmoid(v @ a), MASK_EPS, 1.0 - MASK_EPS)


def similarity_mask_backward(
    d_m: np.ndarray, a: np.ndarray, v: np.ndarray, m: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """(dL/da, dL/dv) for m = similarity_mask(a, v); no gradient where the clip is active"""
    active = (m > MASK_EPS) & (m < 1.0 - MASK_EPS)
    d_z = np.where(active, d_m * m * (1.0 - m), 0.0)
    k = v.shape[-1]
    d_a = d_z.reshape(-1) @ v.reshape(-1, k)
    d_v = d_z[..., None] * a
    return d_a, d_v


def ideal_membership(
    target: np.ndarray,
    interferers: Sequence[np.ndarray],
    floor_db: float = STFT_CONFIG["presence_threshold_db"],
    mixture: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Ideal binary membership of the target source.

    A bin belongs to the target when the target magnitude is at least
    every interferer's (ties go to the target) and the mixture is within
    floor_db of its own maximum there. Without an explicit mixture
    magnitude, target + sum(interferers) stands in for it.
    """
    target = np.asarray(target, dtype=np.float64)
    if not len(interferers):
        raise DataError("ideal_membership needs at least one interferer")
    stacked = np.stack([np.asarray(i, dtype=np.float64) for i in interferers])
    if stacked.shape[1:] != target.shape:
        raise ShapeError(
            f"Interferer shapes {stacked.shape[1:]} do not match target {target.shape}"
        )
    if mixture is None:
        mixture = target + stacked.sum(axis=0)
    mixture = np.asarray(mixture, dtype=np.float64)
    if mixture.shape != target.shape:
        raise ShapeError(f"Mixture shape {mixture.shape} does not match target {target.shape}")

    peak = mixture.max()
    if peak > 0:
        present = mixture > peak * 10.0 ** (-floor_db / 20.0)
    else:
        present = np.zeros(target.shape, dtype=bool)
    return (target >= stacked.max(axis=0)) & present


def preset_extractor(extractors: Sequence[np.ndarray]) -> np.ndarray:
    """Componentwise mean of extractors (inference-time preset)."""
    if not len(extractors):
        raise DataError("preset_extractor needs at least one extractor")
    stacked = np.stack([np.asarray(e, dtype=np.float64) for e in extractors])
    if stacked.ndim != 2:
        raise ShapeError("Extractors must be vectors of equal length")
    return stacked.mean(axis=0)


def nearest_attractor(pair: AttractorPair, anchor_a: np.ndarray) -> np.ndarray:
    """The pair member closest (Euclidean) to the anchor extractor; ties -> a1."""
    anchor_a = np.asarray(anchor_a, dtype=np.float64)
    if anchor_a.shape != pair.a1.shape:
        raise ShapeError(f"Anchor extractor {anchor_a.shape} vs attractors {pair.a1.shape}")
    d1 = np.linalg.norm(pair.a1 - anchor_a)
    d2 = np.linalg.norm(pair.a2 - anchor_a)
    return pair.a2 if d2 < d1 else pair.a1


def danet_attractors(v_mix: np.ndarray, memberships: Sequence[np.ndarray]) -> List[np.ndarray]:
    """One attractor per source: mixture-embedding mean over its membership."""
    return [
        centroid(v_mix, y, what=f"membership for source {i}") for i, y in enumerate(memberships)
    ]
