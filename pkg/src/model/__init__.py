from .network import (
    ModelParams,
    Gradients,
    init_params,
    encode_primary,
    map_canonical,
    param_shapes,
)
from .extractor import (
    AttractorPair,
    anchor_extractor,
    canonical_extractor,
    similarity_mask,
    ideal_membership,
    preset_extractor,
    nearest_attractor,
    danet_attractors,
)

__all__ = [
    "ModelParams",
    "Gradients",
    "init_params",
    "encode_primary",
    "map_canonical",
    "param_shapes",
    "AttractorPair",
    "anchor_extractor",
    "canonical_extractor",
    "similarity_mask",
    "ideal_membership",
    "preset_extractor",
    "nearest_attractor",
    "danet_attractors",
]
