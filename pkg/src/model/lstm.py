"""
LSTM layers with explicit backpropagation through time.

Arrays are time-major: inputs (T, B, D), outputs (T, B, H). Gate
pre-activations are packed as [input, forget, output, cell] blocks of
width H, so weight matrices have 4H columns.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function via tanh (no overflow for large |z|)"""
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class LstmCache:
    x: np.ndarray
    h: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    gates: np.ndarray  # activated gates (T, B, 4H)


def lstm_step(
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    w_in: np.ndarray,
    w_rec: np.ndarray,
    bias: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    One time step.

    Returns:
        (h, c, tanh(c), activated gates)
    """
    hidden = w_rec.shape[0]
    z = x_t @ w_in + bias + h_prev @ w_rec
    gates = np.empty_like(z)
    gates[..., : 3 * hidden] = sigmoid(z[..., : 3 * hidden])
    gates[..., 3 * hidden:] = np.tanh(z[..., 3 * hidden:])

    i = gates[..., :hidden]
    f = gates[..., hidden: 2 * hidden]
    o = gates[..., 2 * hidden: 3 * hidden]
    g = gates[..., 3 * hidden:]

    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, tanh_c, gates


def lstm_forward(
    x: np.ndarray, w_in: np.ndarray, w_rec: np.ndarray, bias: np.ndarray
) -> Tuple[np.ndarray, LstmCache]:
    """
    Run a unidirectional LSTM from zero initial state.

    Args:
        x: Inputs (T, B, D)
        w_in: Input weights (D, 4H)
        w_rec: Recurrent weights (H, 4H)
        bias: Gate biases (4H,)

    Returns:
        Hidden states (T, B, H) and the cache needed by lstm_backward
    """
    steps, batch, _ = x.shape
    hidden = w_rec.shape[0]

    h = np.zeros((steps, batch, hidden))
    c = np.zeros((steps, batch, hidden))
    tanh_c = np.zeros((steps, batch, hidden))
    gates = np.zeros((steps, batch, 4 * hidden))

    h_prev = np.zeros((batch, hidden))
    c_prev = np.zeros((batch, hidden))
    for t in range(steps):
        h[t], c[t], tanh_c[t], gates[t] = lstm_step(x[t], h_prev, c_prev, w_in, w_rec, bias)
        h_prev, c_prev = h[t], c[t]

    return h, LstmCache(x=x, h=h, c=c, tanh_c=tanh_c, gates=gates)


def lstm_backward(
    dh: np.ndarray, cache: LstmCache, w_in: np.ndarray, w_rec: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Backpropagate through time.

    Args:
        dh: Gradient of the loss w.r.t. the hidden states (T, B, H)
        cache: Forward cache
        w_in, w_rec: Weights used in the forward pass

    Returns:
        (dx, dw_in, dw_rec, dbias)
    """
    steps, batch, hidden = cache.h.shape
    gates = cache.gates
    dz = np.zeros((steps, batch, 4 * hidden))

    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in reversed(range(steps)):
        i = gates[t, :, :hidden]
        f = gates[t, :, hidden: 2 * hidden]
        o = gates[t, :, 2 * hidden: 3 * hidden]
        g = gates[t, :, 3 * hidden:]
        c_prev = cache.c[t - 1] if t > 0 else np.zeros((batch, hidden))

        dh_t = dh[t] + dh_next
        dc = dc_next + dh_t * o * (1.0 - cache.tanh_c[t] ** 2)

        dz[t, :, :hidden] = dc * g * i * (1.0 - i)
        dz[t, :, hidden: 2 * hidden] = dc * c_prev * f * (1.0 - f)
        dz[t, :, 2 * hidden: 3 * hidden] = dh_t * cache.tanh_c[t] * o * (1.0 - o)
        dz[t, :, 3 * hidden:] = dc * i * (1.0 - g ** 2)

        dc_next = dc * f
        dh_next = dz[t] @ w_rec.T

    h_prev = np.zeros_like(cache.h)
    h_prev[1:] = cache.h[:-1]

    flat_dz = dz.reshape(-1, 4 * hidden)
    dw_in = cache.x.reshape(-1, cache.x.shape[-1]).T @ flat_dz
    dw_rec = h_prev.reshape(-1, hidden).T @ flat_dz
    dbias = flat_dz.sum(axis=0)
    dx = dz @ w_in.T
    return dx, dw_in, dw_rec, dbias


def reverse_index(lengths: np.ndarray, steps: int) -> np.ndarray:
    """
    Time index that reverses each sequence inside its own length.

    Padded steps (t >= length) stay in place, so a forward scan over the
    reversed input reads every valid frame before any padding. The map is
    its own inverse.
    """
    t = np.arange(steps)[:, None]
    lengths = np.asarray(lengths)[None, :]
    return np.where(t < lengths, lengths - 1 - t, t)


def reverse_padded(x: np.ndarray, index: np.ndarray) -> np.ndarray:
    """Gather x (T, B, ...) along time with a reverse_index map"""
    return x[index, np.arange(x.shape[1])[None, :]]


@dataclass
class BiLstmCache:
    forward: LstmCache
    backward: LstmCache
    index: np.ndarray


def bilstm_forward(
    x: np.ndarray,
    lengths: np.ndarray,
    fw: Tuple[np.ndarray, np.ndarray, np.ndarray],
    bw: Tuple[np.ndarray, np.ndarray, np.ndarray],
) -> Tuple[np.ndarray, BiLstmCache]:
    """
    Bidirectional layer over zero-padded sequences of the given lengths.

    Returns:
        Concatenated [forward, backward] states (T, B, 2H)
    """
    index = reverse_index(lengths, x.shape[0])
    h_fw, cache_fw = lstm_forward(x, *fw)
    h_bw_rev, cache_bw = lstm_forward(reverse_padded(x, index), *bw)
    h_bw = reverse_padded(h_bw_rev, index)
    return np.concatenate([h_fw, h_bw], axis=-1), BiLstmCache(cache_fw, cache_bw, index)


def bilstm_backward(
    dout: np.ndarray,
    cache: BiLstmCache,
    fw: Tuple[np.ndarray, np.ndarray, np.ndarray],
    bw: Tuple[np.ndarray, np.ndarray, np.ndarray],
):
    """
    Returns:
        dx and the (dw_in, dw_rec, dbias) tuples of both directions
    """
    hidden = fw[1].shape[0]
    dx_fw, *grads_fw = lstm_backward(dout[..., :hidden], cache.forward, fw[0], fw[1])
    dh_bw_rev = reverse_padded(dout[..., hidden:], cache.index)
    dx_bw_rev, *grads_bw = lstm_backward(dh_bw_rev, cache.backward, bw[0], bw[1])
    dx = dx_fw + reverse_padded(dx_bw_rev, cache.index)
    return dx, tuple(grads_fw), tuple(grads_bw)
