"""
Unit tests for checkpoint encoding and loading
"""

import json
import struct

import numpy as np
import pytest

from src.core.checkpoint import (
    MAGIC,
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from src.model.extractor import AttractorPair
from src.utils.error_handlers import CheckpointError


def _checkpoint(params, rng):
    k = params.config.embed_dim
    if params.config.variant == "danet":
        return Checkpoint(
            params=params,
            attractor_pair=AttractorPair(rng.normal(size=k), rng.normal(size=k)),
            metadata={"attractor_order": "target,interferer"},
            train_extractors=rng.normal(size=(3, k)),
        )
    return Checkpoint(
        params=params,
        preset_extractor=rng.normal(size=k),
        metadata={"seed": 3, "epoch_losses": [2.5, 1.25]},
        train_extractors=rng.normal(size=(3, k)),
        train_anchor_extractors=rng.normal(size=(3, k)),
    )


def _with_constants(data, **constants):
    """Re-encode a checkpoint with its header constants replaced"""
    start = len(MAGIC) + 1
    (length,) = struct.unpack("<I", data[start:start + 4])
    header = json.loads(data[start + 4:start + 4 + length].decode("utf-8"))
    header["constants"].update(constants)
    raw = json.dumps(header).encode("utf-8")
    return data[:start] + struct.pack("<I", len(raw)) + raw + data[start + 4 + length:]


class TestRoundTrip:
    """Test that saved checkpoints come back unchanged"""

    @pytest.mark.parametrize("variant", ["denet", "danet_anchor", "danet"])
    def test_bit_identical(self, make_params, rng, variant, tmp_path):
        """Weights and constants survive save and load exactly"""
        original = _checkpoint(make_params(variant, seed=4), rng)
        path = save_checkpoint(original, tmp_path / "model.ckpt")
        loaded = load_checkpoint(path)

        assert loaded.variant == variant
        assert loaded.model_config == original.model_config
        assert loaded.params.bit_equal(original.params)
        assert loaded.metadata == original.metadata
        np.testing.assert_array_equal(loaded.train_extractors, original.train_extractors)
        if variant == "danet":
            np.testing.assert_array_equal(loaded.attractor_pair.a1, original.attractor_pair.a1)
            np.testing.assert_array_equal(loaded.attractor_pair.a2, original.attractor_pair.a2)
            assert loaded.preset_extractor is None
        else:
            np.testing.assert_array_equal(loaded.preset_extractor, original.preset_extractor)

    def test_layout_starts_with_magic(self, make_params, rng):
        """Encoded bytes start with the magic and the format version"""
        data = encode_checkpoint(_checkpoint(make_params("denet"), rng))
        assert data[:len(MAGIC)] == b"DXNET"
        assert data[len(MAGIC)] == 1

    def test_stats_optional(self, make_params, rng):
        """Checkpoints without training statistics still load"""
        params = make_params("danet_anchor")
        original = Checkpoint(params=params, preset_extractor=rng.normal(size=4))
        loaded = decode_checkpoint(encode_checkpoint(original))
        assert loaded.train_extractors is None
        assert loaded.train_anchor_extractors is None


class TestCorruption:
    """Test rejection of damaged files"""

    @pytest.fixture
    def data(self, make_params, rng):
        return encode_checkpoint(_checkpoint(make_params("denet"), rng))

    def test_bad_magic(self, data):
        """Another file type is rejected"""
        with pytest.raises(CheckpointError, match="bad magic"):
            decode_checkpoint(b"RIFF" + data[4:])

    def test_version_mismatch(self, data):
        """Another format version is rejected"""
        damaged = bytearray(data)
        damaged[len(MAGIC)] = 2
        with pytest.raises(CheckpointError, match="version mismatch"):
            decode_checkpoint(bytes(damaged))

    def test_truncated(self, data):
        """A cut-off file is rejected"""
        with pytest.raises(CheckpointError, match="truncated"):
            decode_checkpoint(data[:-3])

    def test_trailing_bytes(self, data):
        """Extra bytes after the last tensor are rejected"""
        with pytest.raises(CheckpointError, match="trailing"):
            decode_checkpoint(data + b"\x00")

    def test_corrupt_header(self, data):
        """A header that is not JSON is rejected"""
        damaged = bytearray(data)
        damaged[len(MAGIC) + 5] = ord("}")
        with pytest.raises(CheckpointError):
            decode_checkpoint(bytes(damaged))

    def test_shape_mismatch(self, make_params, rng):
        """A tensor shaped against the config is rejected"""
        params = make_params("danet_anchor")
        params["proj.bias"] = np.zeros(3)
        data = encode_checkpoint(Checkpoint(params=params, preset_extractor=rng.normal(size=4)))
        with pytest.raises(CheckpointError, match="proj.bias"):
            decode_checkpoint(data)

    @pytest.mark.parametrize("pair", [
        [[1.0, 2.0, 3.0, 4.0], [1.0, 2.0]],
        [[1.0, 2.0, 3.0, 4.0]],
        [[1.0, 2.0, 3.0, None], [1.0, 2.0, 3.0, 4.0]],
    ])
    def test_malformed_attractor_pair(self, make_params, rng, pair):
        """A damaged attractor pair is a CheckpointError, not a shape or data error"""
        data = _with_constants(
            encode_checkpoint(_checkpoint(make_params("danet"), rng)), attractor_pair=pair
        )
        with pytest.raises(CheckpointError, match="inference constants"):
            decode_checkpoint(data)

    def test_constant_dimension_mismatch(self, data):
        """A preset extractor of the wrong length is rejected"""
        damaged = _with_constants(data, preset_extractor=[0.5, 0.5])
        with pytest.raises(CheckpointError, match="preset extractor has shape"):
            decode_checkpoint(damaged)

    def test_missing_constant_on_load(self, make_params, mocker):
        """A file lacking its variant's inference constant is rejected"""
        checkpoint = Checkpoint(params=make_params("denet"))
        mocker.patch.object(Checkpoint, "missing_constants", return_value=[])
        data = encode_checkpoint(checkpoint)
        mocker.stopall()
        with pytest.raises(CheckpointError, match="preset extractor"):
            decode_checkpoint(data)


class TestSaveLoad:
    """Test the file-level wrappers"""

    def test_save_refuses_incomplete(self, make_params, tmp_path):
        """A danet checkpoint without attractors is not written"""
        path = tmp_path / "model.ckpt"
        with pytest.raises(CheckpointError, match="fixed attractor pair"):
            save_checkpoint(Checkpoint(params=make_params("danet")), path)
        assert not path.exists()

    def test_load_missing_file(self, tmp_path):
        """A missing file is a checkpoint error"""
        with pytest.raises(CheckpointError, match="Cannot read"):
            load_checkpoint(tmp_path / "absent.ckpt")
