"""
Configuration for pytest
"""

import os
import sys

import numpy as np
import pytest

# Add the project root directory to the Python path
sys.path.insert(
    0, os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
)

from src.config_validator import ModelConfig  # noqa: E402
from src.data.features import item_from_spectra  # noqa: E402
from src.model.network import init_params  # noqa: E402


def tiny_config(variant: str = "denet", num_freq: int = 6, **overrides) -> ModelConfig:
    values = {
        "variant": variant,
        "num_rnn_layers": 1,
        "rnn_hidden": 3,
        "embed_dim": 4,
        "ff_hidden": 5,
        "num_freq": num_freq,
        "normalize_input": False,
    }
    values.update(overrides)
    return ModelConfig.from_dict(values)


def toy_item(rng: np.random.Generator, item_id: str = "item", num_freq: int = 6,
             frames: int = 5, anchor_frames: int = 4):
    """Random training item whose target and interferer memberships are both nonempty."""
    target = rng.uniform(0.1, 1.0, size=(num_freq, frames))
    interferer = rng.uniform(0.1, 1.0, size=(num_freq, frames))
    target[0] += 2.0
    interferer[1] += 2.0
    anchor = rng.uniform(0.1, 1.0, size=(num_freq, anchor_frames))
    return item_from_spectra(item_id, target + interferer, target, [interferer], anchor)


@pytest.fixture
def rng():
    """Seeded generator"""
    return np.random.default_rng(1234)


@pytest.fixture
def make_config():
    """Factory for tiny model configs"""
    return tiny_config


@pytest.fixture
def make_item():
    """Factory for toy training items"""
    return toy_item


@pytest.fixture
def make_params():
    """Factory for initialized tiny models"""

    def factory(variant: str = "denet", seed: int = 0, **overrides):
        return init_params(tiny_config(variant, **overrides), seed)

    return factory
