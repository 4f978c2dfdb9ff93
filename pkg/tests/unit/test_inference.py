"""
Unit tests for mask estimation, waveform extraction and streaming
"""

import numpy as np
import pytest

from src.audio.dsp import StftConfig, Waveform, presence_mask
from src.core.checkpoint import Checkpoint
from src.core.inference import (
    StreamingExtractor,
    check_mode,
    estimate_mask,
    extract_waveform,
    needs_anchor,
)
from src.model.extractor import AttractorPair, anchor_extractor, similarity_mask
from src.model.network import encode_primary, lstm_names
from src.utils.error_handlers import ConfigError

STFT = StftConfig(32, 16)
NUM_FREQ = STFT.num_freq


def _checkpoint(make_params, variant, seed=0, causal=False, **overrides):
    params = make_params(variant, seed=seed, num_freq=NUM_FREQ, **overrides)
    if causal:
        for layer in range(params.config.num_rnn_layers):
            for name in lstm_names(layer, "bw"):
                params[name] = np.zeros_like(params[name])
    rng = np.random.default_rng(seed + 10)
    if variant == "danet":
        return Checkpoint(params=params,
                          attractor_pair=AttractorPair(rng.normal(size=4), rng.normal(size=4)))
    return Checkpoint(params=params, preset_extractor=rng.normal(size=4))


def _wave(rng, n=400):
    return Waveform(0.1 * rng.normal(size=n))


def _mag(rng, frames=9):
    return rng.uniform(0.1, 1.0, size=(NUM_FREQ, frames))


class TestModes:
    """Test mode and variant compatibility"""

    def test_unknown_mode(self, make_params):
        """An unknown mode is a configuration error"""
        with pytest.raises(ConfigError, match="Unknown mode"):
            check_mode(_checkpoint(make_params, "denet"), "telepathy")

    @pytest.mark.parametrize("variant,mode", [
        ("denet", "nearest"), ("danet", "preset"), ("danet_anchor", "oracle"),
        ("denet", "anchor"), ("danet_anchor", "danet-oracle"),
    ])
    def test_mismatch(self, make_params, variant, mode):
        """Modes of another variant are refused"""
        with pytest.raises(ConfigError, match="does not apply"):
            check_mode(_checkpoint(make_params, variant), mode)

    def test_needs_anchor(self, make_params):
        """Only the danet_anchor preset and danet-oracle modes go without an anchor"""
        denet = _checkpoint(make_params, "denet")
        anchor = _checkpoint(make_params, "danet_anchor")
        danet = _checkpoint(make_params, "danet")
        assert needs_anchor(denet, "preset")
        assert needs_anchor(denet, "oracle")
        assert not needs_anchor(anchor, "preset")
        assert needs_anchor(anchor, "anchor")
        assert needs_anchor(danet, "nearest")
        assert not needs_anchor(danet, "danet-oracle")


class TestEstimateMask:
    """Test offline mask estimation"""

    @pytest.mark.parametrize("variant,mode", [
        ("denet", "preset"), ("danet_anchor", "preset"),
        ("danet_anchor", "anchor"), ("danet", "nearest"),
    ])
    def test_mask_in_unit_interval(self, make_params, rng, variant, mode):
        """Masks are F x T with entries strictly between 0 and 1"""
        mask = estimate_mask(_checkpoint(make_params, variant), mode, _mag(rng), _mag(rng, 6))
        assert mask.shape == (NUM_FREQ, 9)
        assert np.all((mask > 0) & (mask < 1))

    def test_oracle_uses_membership(self, make_params, rng):
        """Oracle mode needs the ideal membership and depends on it"""
        checkpoint = _checkpoint(make_params, "denet")
        mix, anchor = _mag(rng), _mag(rng, 6)
        with pytest.raises(ConfigError, match="membership"):
            estimate_mask(checkpoint, "oracle", mix, anchor)
        low = np.zeros(mix.shape, dtype=bool)
        low[:8] = True
        m1 = estimate_mask(checkpoint, "oracle", mix, anchor, membership=low)
        m2 = estimate_mask(checkpoint, "oracle-membership", mix, anchor, membership=~low)
        assert m1.shape == mix.shape
        assert not np.allclose(m1, m2)

    def test_denet_preset_requires_anchor(self, make_params, rng):
        """The denet preset mode maps through the anchor"""
        with pytest.raises(ConfigError, match="anchor"):
            estimate_mask(_checkpoint(make_params, "denet"), "preset", _mag(rng))

    def test_danet_anchor_preset_ignores_anchor(self, make_params, rng):
        """The primary-space preset does not look at any anchor"""
        checkpoint = _checkpoint(make_params, "danet_anchor")
        mix = _mag(rng)
        np.testing.assert_array_equal(
            estimate_mask(checkpoint, "preset", mix),
            estimate_mask(checkpoint, "preset", mix, _mag(rng, 6)),
        )

    def test_nearest_uses_closest_attractor(self, make_params, rng):
        """nearest applies the fixed attractor closest to the anchor extractor"""
        checkpoint = _checkpoint(make_params, "danet")
        mix, anchor = _mag(rng), _mag(rng, 6)
        a = anchor_extractor(encode_primary(checkpoint.params, anchor), presence_mask(anchor))
        checkpoint.attractor_pair = AttractorPair(a + 5.0, a + 0.01)
        expected = similarity_mask(a + 0.01, encode_primary(checkpoint.params, mix))
        np.testing.assert_array_equal(estimate_mask(checkpoint, "nearest", mix, anchor),
                                      expected)

    def test_danet_oracle_returns_both_streams(self, make_params, rng):
        """danet-oracle gives one mask per fixed attractor"""
        masks = estimate_mask(_checkpoint(make_params, "danet"), "danet-oracle", _mag(rng))
        assert isinstance(masks, list) and len(masks) == 2
        assert all(m.shape == (NUM_FREQ, 9) for m in masks)


class TestExtractWaveform:
    """Test waveform-level extraction"""

    def test_length_preserved(self, make_params, rng):
        """Output has the mixture's length and sample rate"""
        mixture = _wave(rng, 437)
        out = extract_waveform(_checkpoint(make_params, "denet"), "preset", mixture,
                               anchor=_wave(rng), stft_cfg=STFT)
        assert len(out.waveform) == 437
        assert out.waveform.sample_rate_hz == mixture.sample_rate_hz
        assert out.mask.shape == (NUM_FREQ, STFT.num_frames(437))
        assert out.selected_stream is None

    def test_deterministic(self, make_params, rng):
        """Same inputs give bit-identical output"""
        checkpoint = _checkpoint(make_params, "danet_anchor")
        mixture, anchor = _wave(rng), _wave(rng)
        a = extract_waveform(checkpoint, "anchor", mixture, anchor=anchor, stft_cfg=STFT)
        b = extract_waveform(checkpoint, "anchor", mixture, anchor=anchor, stft_cfg=STFT)
        np.testing.assert_array_equal(a.waveform.samples, b.waveform.samples)

    def test_oracle_needs_references(self, make_params, rng):
        """Oracle mode needs the target and the interferers"""
        with pytest.raises(ConfigError, match="--interferer"):
            extract_waveform(_checkpoint(make_params, "denet"), "oracle", _wave(rng),
                             anchor=_wave(rng), target=_wave(rng), stft_cfg=STFT)

    def test_oracle_membership(self, make_params, rng):
        """With references the oracle extraction runs"""
        target, interferer = _wave(rng), _wave(rng)
        mixture = Waveform(target.samples + interferer.samples)
        out = extract_waveform(_checkpoint(make_params, "denet"), "oracle", mixture,
                               anchor=_wave(rng), target=target, interferers=[interferer],
                               stft_cfg=STFT)
        assert len(out.waveform) == len(mixture)

    def test_danet_oracle_picks_stream(self, make_params, rng):
        """danet-oracle reports which stream it kept"""
        target = _wave(rng)
        out = extract_waveform(_checkpoint(make_params, "danet"), "danet-oracle", _wave(rng),
                               target=target, stft_cfg=STFT)
        assert out.selected_stream in (0, 1)
        with pytest.raises(ConfigError, match="target"):
            extract_waveform(_checkpoint(make_params, "danet"), "danet-oracle", _wave(rng),
                             stft_cfg=STFT)

    def test_masked_mixture_reconstruction(self, make_params, rng, mocker):
        """An all-pass mask returns the mixture away from the edges"""
        mocker.patch("src.core.inference.estimate_mask",
                     side_effect=lambda c, m, mix, *a: np.ones_like(mix))
        mixture = _wave(rng, 400)
        out = extract_waveform(_checkpoint(make_params, "danet_anchor"), "preset", mixture,
                               stft_cfg=STFT)
        inner = slice(16, -16)
        np.testing.assert_allclose(out.waveform.samples[inner], mixture.samples[inner], atol=1e-10)


class TestStreaming:
    """Test frame-by-frame extraction"""

    @pytest.mark.parametrize("variant,mode", [
        ("denet", "preset"), ("danet_anchor", "preset"),
        ("danet_anchor", "anchor"), ("danet", "nearest"),
    ])
    def test_matches_offline_without_backward_direction(self, make_params, rng, variant, mode):
        """With silent backward weights streaming equals offline estimation"""
        checkpoint = _checkpoint(make_params, variant, causal=True, num_rnn_layers=2)
        mix, anchor = _mag(rng), _mag(rng, 6)
        offline = estimate_mask(checkpoint, mode, mix, anchor)
        online = StreamingExtractor(checkpoint, mode, anchor).run(mix)
        np.testing.assert_allclose(online, offline, atol=1e-12)

    def test_causal(self, make_params, rng):
        """Later frames never change earlier mask columns"""
        checkpoint = _checkpoint(make_params, "danet_anchor", normalize_input=True)
        mix = _mag(rng)
        changed = mix.copy()
        changed[:, 5:] *= 7.0
        stream = StreamingExtractor(checkpoint, "preset")
        np.testing.assert_array_equal(stream.run(mix)[:, :5], stream.run(changed)[:, :5])

    def test_log_features_match_offline(self, make_params, rng):
        """Log-compressed features stream the same way as offline"""
        checkpoint = _checkpoint(make_params, "danet_anchor", causal=True, log_compress=True)
        mix = _mag(rng)
        offline = estimate_mask(checkpoint, "preset", mix)
        np.testing.assert_allclose(
            StreamingExtractor(checkpoint, "preset").run(mix), offline, atol=1e-12
        )

    def test_run_resets_state(self, make_params, rng):
        """Each run starts from a fresh state"""
        stream = StreamingExtractor(_checkpoint(make_params, "danet_anchor"), "preset")
        mix = _mag(rng)
        np.testing.assert_array_equal(stream.run(mix), stream.run(mix))

    def test_unsupported_modes(self, make_params, rng):
        """Oracle modes cannot stream"""
        with pytest.raises(ConfigError, match="Streaming"):
            StreamingExtractor(_checkpoint(make_params, "denet"), "oracle", _mag(rng, 6))
        with pytest.raises(ConfigError, match="Streaming"):
            StreamingExtractor(_checkpoint(make_params, "danet"), "danet-oracle")

    def test_frame_shape(self, make_params):
        """Frames must have F entries"""
        stream = StreamingExtractor(_checkpoint(make_params, "danet_anchor"), "preset")
        with pytest.raises(ConfigError):
            stream.push(np.ones(NUM_FREQ + 1))

    def test_extract_waveform_streaming(self, make_params, rng):
        """The streaming path returns a full-length waveform"""
        mixture = _wave(rng, 300)
        out = extract_waveform(_checkpoint(make_params, "danet"), "nearest", mixture,
                               anchor=_wave(rng), streaming=True, stft_cfg=STFT)
        assert len(out.waveform) == 300
