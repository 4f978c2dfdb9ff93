"""
Unit tests for the optimizer, curriculum and training loop
"""

from dataclasses import replace

import numpy as np
import pytest

from src.config_validator import TrainConfig
from src.core.trainer import (
    ATTRACTOR_ORDER,
    AdamState,
    BatchPrefetcher,
    adam_update,
    clip_gradients,
    crop_item,
    crop_length,
    epoch_batches,
    train,
    train_step,
)
from src.model.network import Gradients
from src.utils.error_handlers import ConfigError, DataError, NonFiniteLossError


def _items(make_item, rng, n=4, **kwargs):
    return [make_item(rng, f"item{i}", **kwargs) for i in range(n)]


class TestClipGradients:
    """Test global-norm clipping"""

    def test_clips_to_max_norm(self):
        """Large gradients are scaled down to the limit"""
        grads = Gradients({"a": np.array([30.0, 40.0]), "b": np.array([[0.0]])})
        clipped, norm = clip_gradients(grads, 5.0)
        assert norm == pytest.approx(50.0)
        assert clipped.global_norm() <= 5.0
        np.testing.assert_allclose(clipped["a"], [3.0, 4.0], rtol=1e-6)

    def test_small_gradients_untouched(self):
        """Gradients under the limit are returned as they are"""
        grads = Gradients({"a": np.array([0.3, 0.4])})
        clipped, _ = clip_gradients(grads, 5.0)
        np.testing.assert_array_equal(clipped["a"], grads["a"])


class TestAdamUpdate:
    """Test the Adam step"""

    def test_first_step_moves_by_learning_rate(self, make_params):
        """The bias-corrected first step has magnitude ~lr along sign(g)"""
        params = make_params("danet")
        grads = Gradients({k: np.full(v.shape, 0.5) for k, v in params.items()})
        cfg = TrainConfig(learning_rate=1e-3)
        new, state = adam_update(params, grads, AdamState.zeros(params), cfg)
        assert state.step == 1
        for name in params:
            np.testing.assert_allclose(params[name] - new[name], 1e-3, rtol=1e-6)

    def test_inputs_untouched(self, make_params):
        """adam_update does not modify its arguments"""
        params = make_params("danet")
        before = params.copy()
        grads = Gradients({k: np.ones(v.shape) for k, v in params.items()})
        state = AdamState.zeros(params)
        adam_update(params, grads, state, TrainConfig())
        assert params.bit_equal(before)
        assert state.step == 0 and state.m.global_norm() == 0


class TestTrainStep:
    """Test one optimizer step"""

    def test_zero_gradient_leaves_parameters(self, make_params, make_item, rng, mocker):
        """A zero gradient does not move the parameters"""
        params = make_params("danet_anchor")
        mocker.patch(
            "src.core.trainer.compute_gradients", return_value=(0.0, params.zeros_like())
        )
        new, state, loss = train_step(params, [make_item(rng)], TrainConfig(),
                                      AdamState.zeros(params))
        assert loss == 0.0
        assert new.bit_equal(params)
        assert state.step == 1

    def test_deterministic(self, make_params, make_item, rng):
        """Same inputs twice give bit-identical results"""
        params = make_params("denet")
        batch = _items(make_item, rng, 2)
        cfg = TrainConfig(variant="denet")
        p1, s1, l1 = train_step(params, batch, cfg, AdamState.zeros(params))
        p2, s2, l2 = train_step(params, batch, cfg, AdamState.zeros(params))
        assert l1 == l2
        assert p1.bit_equal(p2)
        assert s1.m.bit_equal(s2.m) and s1.v.bit_equal(s2.v)

    def test_reduces_loss(self, make_params, make_item, rng):
        """A few steps on one batch lower its loss"""
        params = make_params("danet_anchor")
        batch = _items(make_item, rng, 2)
        cfg = TrainConfig(variant="danet_anchor", learning_rate=1e-2)
        state = AdamState.zeros(params)
        params, state, first = train_step(params, batch, cfg, state)
        for _ in range(20):
            params, state, loss = train_step(params, batch, cfg, state)
        assert loss < first

    def test_non_finite_gradient(self, make_params, make_item, rng, mocker):
        """A NaN gradient aborts the step"""
        params = make_params("danet_anchor")
        bad = params.zeros_like()
        bad["proj.bias"][0] = np.nan
        mocker.patch("src.core.trainer.compute_gradients", return_value=(1.0, bad))
        with pytest.raises(NonFiniteLossError):
            train_step(params, [make_item(rng)], TrainConfig(), AdamState.zeros(params))

    def test_empty_batch(self, make_params):
        """An empty batch is an error"""
        params = make_params("denet")
        with pytest.raises(DataError):
            train_step(params, [], TrainConfig(), AdamState.zeros(params))


class TestCurriculum:
    """Test crop scheduling"""

    def test_none_uses_whole_utterances(self):
        """Without a curriculum nothing is cropped"""
        assert crop_length(TrainConfig(variant="denet"), 0) is None

    def test_short_then_long(self):
        """The first half of the epochs uses 100 frames, the rest 400"""
        cfg = TrainConfig(variant="danet", epochs=4)
        assert [crop_length(cfg, e) for e in range(4)] == [100, 100, 400, 400]

    def test_single_epoch_is_short(self):
        """A single epoch trains on short crops"""
        cfg = TrainConfig(variant="danet", epochs=1)
        assert crop_length(cfg, 0) == 100

    def test_explicit_curriculum_overrides_variant(self):
        """denet can opt into the curriculum"""
        cfg = TrainConfig(variant="denet", epochs=2, curriculum="frames_100_then_400")
        assert crop_length(cfg, 0) == 100

    def test_short_items_pass_whole(self, make_item, rng):
        """Utterances shorter than the crop length are not cropped"""
        item = make_item(rng, frames=5)
        assert crop_item(item, 100, rng, "danet") is item

    def test_crop_length_and_alignment(self, make_item, rng):
        """Crops have the requested length and keep arrays aligned"""
        item = make_item(rng, frames=30)
        cropped = crop_item(item, 10, np.random.default_rng(0), "danet_anchor")
        assert cropped.num_frames == 10
        start = [s for s in range(21)
                 if np.array_equal(item.mixture_mag[:, s: s + 10], cropped.mixture_mag)]
        assert len(start) == 1
        s = start[0]
        np.testing.assert_array_equal(cropped.target_mag, item.target_mag[:, s: s + 10])
        np.testing.assert_array_equal(cropped.anchor_mag, item.anchor_mag)

    def test_crop_keeps_required_membership(self, make_item, rng):
        """A crop without target bins falls back to the whole item"""
        item = make_item(rng, frames=30)
        membership = np.zeros_like(item.target_membership)
        membership[:, 0] = True
        item = replace(item, target_membership=membership)
        for seed in range(10):
            out = crop_item(item, 5, np.random.default_rng(seed), "denet")
            assert out.target_membership.any()


class TestEpochBatches:
    """Test per-epoch batching"""

    def test_every_item_once(self, make_item, rng):
        """An epoch visits every item exactly once"""
        items = _items(make_item, rng, 7)
        batches = list(epoch_batches(items, TrainConfig(batch_size=3), 0))
        assert [len(b) for b in batches] == [3, 3, 1]
        assert sorted(i.id for b in batches for i in b) == sorted(i.id for i in items)

    def test_seeded(self, make_item, rng):
        """Order depends only on seed and epoch"""
        items = _items(make_item, rng, 6)
        cfg = TrainConfig(batch_size=2, seed=3)

        def ids(epoch):
            return [i.id for b in epoch_batches(items, cfg, epoch) for i in b]

        assert ids(0) == ids(0)
        assert ids(0) != ids(1) or ids(1) != ids(2)


class TestBatchPrefetcher:
    """Test background batch production"""

    def test_yields_in_order(self):
        """All batches arrive in production order"""
        with BatchPrefetcher(iter(range(10)), depth=2) as batches:
            assert list(batches) == list(range(10))

    def test_forwards_errors(self):
        """Producer errors surface in the consumer"""
        def produce():
            yield 1
            raise DataError("broken item")

        with BatchPrefetcher(produce(), depth=1) as batches:
            with pytest.raises(DataError, match="broken item"):
                list(batches)

    def test_early_exit(self):
        """Leaving early does not hang on a blocked producer"""
        with BatchPrefetcher(iter(range(1000)), depth=1) as batches:
            for value in batches:
                if value == 2:
                    break


class TestTrain:
    """Test the training loop"""

    def test_rejects_zero_epochs(self, make_item, rng):
        """epochs = 0 is a configuration error"""
        with pytest.raises(ConfigError):
            train(_items(make_item, rng, 2), TrainConfig(epochs=0))

    def test_rejects_empty_data(self):
        """No items is a data error"""
        with pytest.raises(DataError, match="empty manifest"):
            train([], TrainConfig(epochs=1))

    def test_variant_mismatch(self, make_item, make_config, rng):
        """The model config must match the training variant"""
        with pytest.raises(ConfigError):
            train(_items(make_item, rng, 2), TrainConfig(variant="denet", epochs=1),
                  model_config=make_config("danet"))

    def test_denet_checkpoint(self, make_item, make_config, rng):
        """denet stores the preset extractor and both extractor sets"""
        items = _items(make_item, rng, 3)
        epochs = []
        ckpt = train(items, TrainConfig(variant="denet", epochs=2, batch_size=2),
                     on_epoch=lambda e, loss: epochs.append((e, loss)),
                     model_config=make_config("denet"))
        assert [e for e, _ in epochs] == [1, 2]
        assert ckpt.preset_extractor.shape == (4,)
        assert ckpt.train_extractors.shape == (3, 4)
        assert ckpt.train_anchor_extractors.shape == (3, 4)
        np.testing.assert_allclose(ckpt.preset_extractor, ckpt.train_extractors.mean(axis=0))
        assert ckpt.metadata["final_loss"] == epochs[-1][1]
        assert ckpt.metadata["seed"] == 0

    def test_danet_anchor_checkpoint(self, make_item, make_config, rng):
        """danet_anchor stores a primary-space preset extractor"""
        ckpt = train(_items(make_item, rng, 2), TrainConfig(variant="danet_anchor", epochs=1),
                     model_config=make_config("danet_anchor"))
        assert ckpt.preset_extractor is not None
        assert ckpt.attractor_pair is None

    def test_danet_checkpoint(self, make_item, make_config, rng):
        """danet stores the attractor pair, target first"""
        ckpt = train(_items(make_item, rng, 2), TrainConfig(variant="danet", epochs=1),
                     model_config=make_config("danet"))
        assert ckpt.attractor_pair is not None
        assert ckpt.metadata["attractor_order"] == ATTRACTOR_ORDER
        np.testing.assert_allclose(ckpt.attractor_pair.a1, ckpt.train_extractors.mean(axis=0))

    def test_same_seed_same_result(self, make_item, make_config, rng):
        """Two runs with one seed end with identical loss and weights"""
        items = _items(make_item, rng, 3)
        cfg = TrainConfig(variant="denet", epochs=2, batch_size=2, seed=5)
        a = train(items, cfg, model_config=make_config("denet"))
        b = train(items, cfg, model_config=make_config("denet"))
        assert a.metadata["final_loss"] == b.metadata["final_loss"]
        assert a.params.bit_equal(b.params)
