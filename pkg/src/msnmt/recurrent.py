"""LSTM cell, stacked step, and full-sequence encoder with manual BPTT.

All state tensors are batched rows: h and c are [B, d].  The encoder consumes
sources already reversed by the data module, right-padded; a carry mask
freezes each example's state once its true length is exhausted, so the final
stack is exact regardless of padding.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, VocabularyError
from .numerics import Parameter


@dataclass
class LstmParams:
    """Input weights [4d, d_in], recurrent weights [4d, d], bias [4d]."""

    w_x: Parameter
    w_h: Parameter
    b: Parameter

    @property
    def hidden_size(self):
        return self.w_h.value.shape[1]

    @property
    def input_size(self):
        return self.w_x.value.shape[1]

    def all(self):
        return [self.w_x, self.w_h, self.b]


def lstm_cell(x, h_prev, c_prev, p: LstmParams):
    """One LSTM step (forget-gate variant, gate order i,f,o,u).

    Returns (h, c, cache); inputs are untouched.
    """
    if x.shape[1] != p.input_size or h_prev.shape[1] != p.hidden_size:
        raise DimensionError(
            f"lstm_cell: x {x.shape} / h {h_prev.shape} vs weights "
            f"w_x {p.w_x.value.shape}, w_h {p.w_h.value.shape}"
        )
    z = x @ p.w_x.value.T + h_prev @ p.w_h.value.T + p.b.value
    gates, c, tc, h = kernels.gates_forward(z, c_prev)
    cache = (x, h_prev, c_prev, gates, tc)
    return h, c, cache


def lstm_cell_backward(dh, dc, cache, p: LstmParams):
    """Accumulates weight grads into p; returns (dx, dh_prev, dc_prev)."""
    x, h_prev, c_prev, gates, tc = cache
    dz, dc_prev = kernels.gates_backward(gates, c_prev, tc, dh, dc)
    p.w_x.grad += dz.T @ x
    p.w_h.grad += dz.T @ h_prev
    p.b.grad += dz.sum(axis=0)
    dx = dz @ p.w_x.value
    dh_prev = dz @ p.w_h.value
    return dx, dh_prev, dc_prev


def stack_step(x, states, layers, dropout_masks=None):
    """Apply lstm_cell per layer bottom-up; layer l's input is layer l-1's
    fresh hidden output.  dropout_masks (if given) multiply each layer's
    input -- non-recurrent connections only.

    states: list of (h, c) per layer.  Returns (new_states, cache).
    """
    if len(states) != len(layers):
        raise DimensionError(f"stack_step: {len(states)} states vs {len(layers)} layers")
    new_states = []
    caches = []
    inp = x
    for l, (p, (h_prev, c_prev)) in enumerate(zip(layers, states)):
        if dropout_masks is not None:
            m = dropout_masks[l]
            if m.shape != inp.shape:
                raise DimensionError(
                    f"stack_step: dropout mask {m.shape} vs layer {l} input {inp.shape}"
                )
            inp = inp * m
        h, c, cc = lstm_cell(inp, h_prev, c_prev, p)
        caches.append(cc)
        new_states.append((h, c))
        inp = h
    return new_states, caches


def stack_step_backward(dstates, caches, layers, dropout_masks=None):
    """Backward through one stacked step.

    dstates: list of (dh, dc) w.r.t. the NEW states.  Returns
    (dx, dprev_states); weight grads accumulate into the layers.
    """
    L = len(layers)
    dh_acc = [np.array(dh, copy=True) for dh, _ in dstates]
    dprev = [None] * L
    dx_low = None
    for l in range(L - 1, -1, -1):
        dxl, dh_prev, dc_prev = lstm_cell_backward(dh_acc[l], dstates[l][1], caches[l], layers[l])
        if dropout_masks is not None:
            dxl = dxl * dropout_masks[l]
        dprev[l] = (dh_prev, dc_prev)
        if l > 0:
            dh_acc[l - 1] = dh_acc[l - 1] + dxl
        else:
            dx_low = dxl
    return dx_low, dprev


def zero_states(n_layers, batch, d, dtype=np.float64):
    return [(np.zeros((batch, d), dtype=dtype), np.zeros((batch, d), dtype=dtype))
            for _ in range(n_layers)]


def encode_batch(ids, mask, embed: Parameter, layers, dropout_masks=None):
    """Run the stacked encoder over a padded batch of reversed sources.

    ids: [B, T] int matrix (reversed token ids, right-padded).
    mask: [B, T] floats, 1.0 on real positions.

    Returns (final_states, top_h [B, T, d], cache).  top_h[b, t] is the top
    hidden after consuming reversed position t; padded slots carry the last
    real state.
    """
    B, T = ids.shape
    if T == 0:
        raise ConfigError("encode: empty sequence")
    V = embed.value.shape[0]
    if ids.max() >= V or ids.min() < 0:
        raise VocabularyError(f"token id out of range [0,{V}) in encoder input")
    d = layers[0].hidden_size
    dtype = embed.value.dtype
    E = embed.value[ids]  # [B, T, d]
    states = zero_states(len(layers), B, d, dtype)
    top_h = np.zeros((B, T, d), dtype=dtype)
    step_caches = []
    for t in range(T):
        new_states, cc = stack_step(E[:, t], states, layers, dropout_masks)
        m = mask[:, t:t + 1]
        carried = [(m * hn + (1.0 - m) * ho, m * cn + (1.0 - m) * co)
                   for (hn, cn), (ho, co) in zip(new_states, states)]
        top_h[:, t] = carried[-1][0]
        step_caches.append(cc)
        states = carried
    cache = (ids, mask, step_caches)
    return states, top_h, cache


def encode_batch_backward(dfinal, dtop_h, cache, embed: Parameter, layers,
                          dropout_masks=None):
    """BPTT through encode_batch; accumulates into embed and layer grads.

    dfinal: per-layer (dh, dc) w.r.t. the final carried states (may be None).
    dtop_h: [B, T, d] gradient w.r.t. top_h (may be None).
    """
    ids, mask, step_caches = cache
    B, T = ids.shape
    d = layers[0].hidden_size
    dtype = embed.value.dtype
    if dfinal is None:
        dstates = [(np.zeros((B, d), dtype=dtype), np.zeros((B, d), dtype=dtype))
                   for _ in layers]
    else:
        dstates = [(np.array(dh, copy=True), np.array(dc, copy=True)) for dh, dc in dfinal]
    dE = np.zeros((B, T, d), dtype=dtype)
    for t in range(T - 1, -1, -1):
        if dtop_h is not None:
            dh_top, dc_top = dstates[-1]
            dstates[-1] = (dh_top + dtop_h[:, t], dc_top)
        m = mask[:, t:t + 1]
        dnew = [(m * dh, m * dc) for dh, dc in dstates]
        dcarry = [((1.0 - m) * dh, (1.0 - m) * dc) for dh, dc in dstates]
        dx, dprev = stack_step_backward(dnew, step_caches[t], layers, dropout_masks)
        dE[:, t] = dx
        dstates = [(dch + dph, dcc + dpc)
                   for (dch, dcc), (dph, dpc) in zip(dcarry, dprev)]
    np.add.at(embed.grad, ids, dE)


def encode(ids_reversed, embed: Parameter, layers):
    """Single-sequence encoder used by decoding and unit tests.

    Returns (final_states as list of (h[1,d], c[1,d]), top_seq [S, d]) where
    top_seq is re-indexed into ORIGINAL word order (position 0 is the first
    word of the unreversed sentence).
    """
    ids = np.asarray(ids_reversed, dtype=np.int64)
    if ids.size == 0:
        raise ConfigError("encode: empty sequence")
    mask = np.ones((1, ids.size), dtype=embed.value.dtype)
    final, top_h, _ = encode_batch(ids.reshape(1, -1), mask, embed, layers)
    S = ids.size
    top_seq = top_h[0, S - 1::-1]  # reversed time index t <-> original s = S-1-t
    return final, top_seq
