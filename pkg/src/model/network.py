"""
Trainable networks: the bidirectional LSTM primary encoder and the
feed-forward canonical mapper, with exact backward passes.

Embedding fields are F x T x K arrays; extractor vectors have K entries.
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.config_validator import ModelConfig
from src.model.lstm import BiLstmCache, bilstm_backward, bilstm_forward
from src.utils.error_handlers import ConfigError, ShapeError
from src.utils.structured_logger import get_logger

logger = get_logger(__name__)

DIRECTIONS = ("fw", "bw")
FORGET_BIAS = 1.0
LOG_FLOOR = 1e-4  # 80 dB below the feature peak


class NamedTensors:
    """Ordered mapping of tensor name -> float64 array."""

    def __init__(self, tensors: Dict[str, np.ndarray]):
        self.tensors: "OrderedDict[str, np.ndarray]" = OrderedDict(
            (name, np.asarray(value, dtype=np.float64)) for name, value in tensors.items()
        )

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.tensors[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self) -> List[str]:
        return list(self.tensors)

    def copy(self):
        return type(self)({k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> "Gradients":
        return Gradients({k: np.zeros_like(v) for k, v in self.tensors.items()})

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(v * v)) for v in self.tensors.values())))

    def all_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(v))) for v in self.tensors.values())

    def num_values(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def bit_equal(self, other: "NamedTensors") -> bool:
        if self.names() != other.names():
            return False
        return all(
            self[k].shape == other[k].shape and self[k].tobytes() == other[k].tobytes()
            for k in self
        )


class ModelParams(NamedTensors):
    """All trainable weights of one model, tied to the config that shaped them."""

    def __init__(self, tensors: Dict[str, np.ndarray], config: ModelConfig):
        super().__init__(tensors)
        self.config = config

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()}, self.config)

    def replace(self, tensors: Dict[str, np.ndarray]) -> "ModelParams":
        """New params with the same config and the given tensors"""
        return ModelParams(tensors, self.config)


class Gradients(NamedTensors):
    """Gradient tensors, laid out like ModelParams."""

    def add_(self, other: Dict[str, np.ndarray]) -> "Gradients":
        for name, value in other.items():
            self.tensors[name] += value
        return self


def lstm_names(layer: int, direction: str) -> Tuple[str, str, str]:
    prefix = f"lstm.{layer}.{direction}"
    return f"{prefix}.w_in", f"{prefix}.w_rec", f"{prefix}.bias"


def param_shapes(cfg: ModelConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    """Tensor shapes, determined by the config alone (nothing allocated)."""
    hidden, k = cfg.rnn_hidden, cfg.embed_dim
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
    in_dim = cfg.num_freq
    for layer in range(cfg.num_rnn_layers):
        for direction in DIRECTIONS:
            w_in, w_rec, bias = lstm_names(layer, direction)
            shapes[w_in] = (in_dim, 4 * hidden)
            shapes[w_rec] = (hidden, 4 * hidden)
            shapes[bias] = (4 * hidden,)
        in_dim = 2 * hidden
    shapes["proj.weight"] = (2 * hidden, cfg.num_freq * k)
    shapes["proj.bias"] = (cfg.num_freq * k,)
    if cfg.has_canonical_mapper:
        shapes["ff.hidden.weight"] = (2 * k, cfg.ff_hidden)
        shapes["ff.hidden.bias"] = (cfg.ff_hidden,)
        shapes["ff.out.weight"] = (cfg.ff_hidden, k)
        shapes["ff.out.bias"] = (k,)
    return shapes


def count_params(cfg: ModelConfig) -> int:
    return int(sum(np.prod(shape) for shape in param_shapes(cfg).values()))


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """
    Deterministic initialization.

    Weights are uniform in +-sqrt(1/fan_in); biases start at zero except
    the LSTM forget-gate block, which starts at one.
    """
    ok, error = cfg.validate()
    if not ok:
        raise ConfigError(f"Invalid model config: {error}")

    rng = np.random.default_rng(seed)
    tensors: Dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("bias"):
            value = np.zeros(shape)
            if name.startswith("lstm."):
                value[cfg.rnn_hidden: 2 * cfg.rnn_hidden] = FORGET_BIAS
        else:
            bound = np.sqrt(1.0 / shape[0])
            value = rng.uniform(-bound, bound, size=shape)
        tensors[name] = value

    logger.debug("Initialized parameters", variant=cfg.variant, seed=seed,
                 num_values=count_params(cfg))
    return ModelParams(tensors, cfg)


def input_features(cfg: ModelConfig, x: np.ndarray, peak: Optional[float] = None) -> np.ndarray:
    """
    Encoder input for one F x T magnitude spectrogram.

    Normalization divides by peak (default: the spectrogram maximum).
    Log compression maps normalized magnitudes in [0, 1] onto [0, 1]
    with an 80 dB range; silence stays 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if cfg.normalize_input:
        if peak is None:
            peak = x.max() if x.size else 0.0
        if peak > 0:
            x = x / peak
    if cfg.log_compress:
        x = 1.0 + np.log10(x + LOG_FLOOR) / -np.log10(LOG_FLOOR)
    return x


@dataclass
class EncoderCache:
    lengths: np.ndarray
    layers: List[BiLstmCache]
    proj_in: np.ndarray  # (T, B, 2H)
    emb: np.ndarray  # tanh outputs (T, B, F*K)


def _layer_weights(params: ModelParams, layer: int):
    return tuple(
        tuple(params[name] for name in lstm_names(layer, direction)) for direction in DIRECTIONS
    )


def encode_batch(
    params: ModelParams, mags: Sequence[np.ndarray]
) -> Tuple[List[np.ndarray], EncoderCache]:
    """
    Primary embeddings for several spectrograms of different lengths.

    Items are zero-padded to the longest one; each direction only reads
    the item's own frames, so padding never changes valid outputs.

    Returns:
        One F x T_b x K field per item, and the backward cache
    """
    cfg = params.config
    num_freq, k = cfg.num_freq, cfg.embed_dim
    for m in mags:
        if m.ndim != 2 or m.shape[0] != num_freq:
            raise ShapeError(
                f"Spectrogram shape {m.shape} does not have {num_freq} frequency rows"
            )
    lengths = np.array([m.shape[1] for m in mags], dtype=np.int64)
    steps, batch = int(lengths.max()), len(mags)

    h = np.zeros((steps, batch, num_freq))
    for b, m in enumerate(mags):
        h[: lengths[b], b] = input_features(cfg, m).T

    layer_caches = []
    for layer in range(cfg.num_rnn_layers):
        fw, bw = _layer_weights(params, layer)
        h, cache = bilstm_forward(h, lengths, fw, bw)
        layer_caches.append(cache)

    emb = np.tanh(h @ params["proj.weight"] + params["proj.bias"])
    fields = [
        emb[: lengths[b], b].reshape(lengths[b], num_freq, k).transpose(1, 0, 2)
        for b in range(batch)
    ]
    return fields, EncoderCache(lengths=lengths, layers=layer_caches, proj_in=h, emb=emb)


def encode_batch_backward(
    params: ModelParams, d_fields: Sequence[np.ndarray], cache: EncoderCache
) -> Dict[str, np.ndarray]:
    """Gradients of the encoder tensors given dL/dV for every item."""
    cfg = params.config
    num_freq, k = cfg.num_freq, cfg.embed_dim
    d_emb = np.zeros_like(cache.emb)
    for b, d_v in enumerate(d_fields):
        length = cache.lengths[b]
        d_emb[:length, b] = d_v.transpose(1, 0, 2).reshape(length, num_freq * k)

    d_pre = d_emb * (1.0 - cache.emb ** 2)
    hidden2 = cache.proj_in.shape[-1]
    grads: Dict[str, np.ndarray] = {
        "proj.weight": cache.proj_in.reshape(-1, hidden2).T @ d_pre.reshape(-1, num_freq * k),
        "proj.bias": d_pre.sum(axis=(0, 1)),
    }
    d_h = d_pre @ params["proj.weight"].T

    for layer in reversed(range(cfg.num_rnn_layers)):
        fw, bw = _layer_weights(params, layer)
        d_h, grads_fw, grads_bw = bilstm_backward(d_h, cache.layers[layer], fw, bw)
        for direction, layer_grads in zip(DIRECTIONS, (grads_fw, grads_bw)):
            for name, value in zip(lstm_names(layer, direction), layer_grads):
                grads[name] = value
    return grads


def encode_primary(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Primary F x T x K embedding field of one magnitude spectrogram."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"Expected an F x T spectrogram, got shape {x.shape}")
    fields, _ = encode_batch(params, [x])
    return fields[0]


@dataclass
class CanonicalCache:
    a: np.ndarray
    v: np.ndarray
    hidden: np.ndarray


def canonical_forward(
    params: ModelParams, a: np.ndarray, v: np.ndarray
) -> Tuple[np.ndarray, CanonicalCache]:
    """FF([a || v[f,t]]) for every bin: tanh hidden layer, linear output."""
    cfg = params.config
    if not cfg.has_canonical_mapper:
        raise ConfigError(f"Variant {cfg.variant!r} has no canonical mapper")
    k = cfg.embed_dim
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (k,) or v.shape[-1] != k:
        raise ShapeError(f"Extractor {a.shape} / field {v.shape} do not match K={k}")

    w1 = params["ff.hidden.weight"]
    # the anchor half of the input is the same for every bin
    anchor_term = a @ w1[:k] + params["ff.hidden.bias"]
    hidden = np.tanh(v @ w1[k:] + anchor_term)
    vt = hidden @ params["ff.out.weight"] + params["ff.out.bias"]
    return vt, CanonicalCache(a=a, v=v, hidden=hidden)


def canonical_backward(
    params: ModelParams, d_vt: np.ndarray, cache: CanonicalCache
) -> Tuple[np.ndarray, np.ndarray, Dict[str, np.ndarray]]:
    """
    Returns:
        (dL/da, dL/dv, mapper tensor gradients)
    """
    cfg = params.config
    k, ff = cfg.embed_dim, cfg.ff_hidden
    w1 = params["ff.hidden.weight"]
    flat_hidden = cache.hidden.reshape(-1, ff)
    flat_dvt = d_vt.reshape(-1, k)

    d_hidden = d_vt @ params["ff.out.weight"].T
    d_pre = d_hidden * (1.0 - cache.hidden ** 2)
    flat_dpre = d_pre.reshape(-1, ff)
    d_pre_sum = flat_dpre.sum(axis=0)

    d_w1 = np.empty_like(w1)
    d_w1[:k] = np.outer(cache.a, d_pre_sum)
    d_w1[k:] = cache.v.reshape(-1, k).T @ flat_dpre
    grads = {
        "ff.hidden.weight": d_w1,
        "ff.hidden.bias": d_pre_sum,
        "ff.out.weight": flat_hidden.T @ flat_dvt,
        "ff.out.bias": flat_dvt.sum(axis=0),
    }
    d_a = w1[:k] @ d_pre_sum
    d_v = d_pre @ w1[k:].T
    return d_a, d_v, grads


def map_canonical(params: ModelParams, a: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Canonical embedding field for anchor extractor a and primary field v."""
    vt, _ = canonical_forward(params, a, v)
    return vt
