"""
Embedding-space diagnostics: principal components of extractors and T-F
embeddings, and extractor dispersion statistics.
"""

from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from src.audio.dsp import presence_mask
from src.core.checkpoint import Checkpoint
from src.model.extractor import anchor_extractor, ideal_membership
from src.model.network import encode_primary, map_canonical
from src.utils.error_handlers import ConfigError, DataError
from src.utils.structured_logger import get_logger

logger = get_logger(__name__)

POWER_TOL = 1e-10
POWER_MAX_ITER = 10000
POINT_LABELS = ("extractor", "target_bin", "interferer_bin")


def _sign_fixed(vector: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude component is positive."""
    return vector if vector[np.argmax(np.abs(vector))] >= 0 else -vector


def principal_components(
    points: np.ndarray,
    n_components: int,
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
    seed: int = 0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Top principal directions by deflated power iteration on the sample
    covariance; each iterate is re-orthogonalized against the directions
    already found.

    Returns:
        (basis n_components x K, eigenvalues, mean)

    Raises:
        DataError: the covariance has rank below n_components
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DataError(f"Expected an N x K point array, got shape {points.shape}")
    num, dim = points.shape
    if num < n_components + 1 or dim < n_components:
        raise DataError(
            f"Need at least {n_components + 1} points of dimension >= {n_components}",
            details={"points": num, "dim": dim},
        )

    mean = points.mean(axis=0)
    centered = points - mean
    cov = centered.T @ centered / (num - 1)
    scale = max(float(np.trace(cov)), np.finfo(float).tiny)

    rng = np.random.default_rng(seed)
    basis: List[np.ndarray] = []
    eigenvalues: List[float] = []
    deflated = cov.copy()
    for k in range(n_components):
        x = rng.normal(size=dim)
        lam = 0.0
        for _ in range(max_iter):
            for b in basis:
                x -= (x @ b) * b
            x /= np.linalg.norm(x)
            y = deflated @ x
            lam = float(x @ y)
            residual = np.linalg.norm(y - lam * x)
            if residual <= tol * scale:
                break
            if np.linalg.norm(y) <= tol * scale:
                break
            x = y
        else:
            logger.warning("Power iteration hit the iteration cap", component=k, residual=residual)

        if lam <= tol * scale:
            raise DataError("degenerate point set", details={"rank_below": n_components})
        for b in basis:
            x -= (x @ b) * b
        x = _sign_fixed(x / np.linalg.norm(x))
        basis.append(x)
        eigenvalues.append(lam)
        deflated = deflated - lam * np.outer(x, x)

    return np.stack(basis), np.asarray(eigenvalues), mean


def pca3(points: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Projection onto the first three principal components.

    Returns:
        (basis 3 x K, projected N x 3 of the mean-centered points)
    """
    points = np.asarray(points, dtype=np.float64)
    basis, _, mean = principal_components(points, 3)
    return basis, (points - mean) @ basis.T


@dataclass
class ExtractorStats:
    centroid: np.ndarray
    mean_distance: float
    max_distance: float
    dispersion_ratio: float

    def to_dict(self) -> Dict:
        values = asdict(self)
        values["centroid"] = self.centroid.tolist()
        return values


def extractor_stability(extractors: Sequence[np.ndarray]) -> ExtractorStats:
    """Spread of extractors around their centroid; ratio = mean distance / |centroid|."""
    points = np.asarray(extractors, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise DataError("extractor_stability needs at least two extractors")
    centroid = points.mean(axis=0)
    distances = np.linalg.norm(points - centroid, axis=1)
    mean_distance = float(distances.mean())
    norm = float(np.linalg.norm(centroid))
    if norm > 0:
        ratio = mean_distance / norm
    else:
        ratio = 0.0 if mean_distance == 0 else float("inf")
    return ExtractorStats(centroid, mean_distance, float(distances.max()), ratio)


def checkpoint_stability(checkpoint: Checkpoint) -> Dict[str, ExtractorStats]:
    """Canonical vs primary anchor-extractor dispersion of a denet checkpoint."""
    if checkpoint.variant != "denet":
        raise ConfigError(
            f"Stability statistics need a denet checkpoint, got {checkpoint.variant}"
        )
    if checkpoint.train_extractors is None or checkpoint.train_anchor_extractors is None:
        raise DataError("Checkpoint carries no training extractors")
    return {
        "canonical": extractor_stability(checkpoint.train_extractors),
        "primary_anchor": extractor_stability(checkpoint.train_anchor_extractors),
    }


def embedding_points(
    checkpoint: Checkpoint,
    anchor_mag: np.ndarray,
    mixture_mag: np.ndarray,
    target_mag: np.ndarray,
    interferer_mags: Sequence[np.ndarray],
) -> pd.DataFrame:
    """
    Labelled canonical-space points projected on their first three
    principal components: every stored training extractor, and every
    mixture bin above the presence floor (target or interferer bin by
    ideal membership).
    """
    if checkpoint.variant != "denet":
        raise ConfigError("dump-embeddings needs a denet checkpoint")
    params = checkpoint.params
    a = anchor_extractor(encode_primary(params, anchor_mag), presence_mask(anchor_mag))
    vt = map_canonical(params, a, encode_primary(params, mixture_mag))

    present = presence_mask(mixture_mag)
    membership = ideal_membership(target_mag, interferer_mags, mixture=mixture_mag)
    if checkpoint.train_extractors is not None:
        extractors = np.asarray(checkpoint.train_extractors)
    else:
        extractors = checkpoint.preset_extractor[None, :]

    bins = vt[present]
    labels = ["extractor"] * len(extractors) + [
        "target_bin" if member else "interferer_bin" for member in membership[present]
    ]
    _, projected = pca3(np.concatenate([extractors, bins], axis=0))
    frame = pd.DataFrame(projected, columns=["pc1", "pc2", "pc3"])
    frame.insert(0, "label", labels)
    logger.debug("Embedding points", extractors=len(extractors), bins=int(present.sum()))
    return frame
