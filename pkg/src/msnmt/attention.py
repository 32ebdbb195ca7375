"""Local predictive attention over a Gaussian-weighted window, single and
dual source.

The decoder's top hidden state predicts a real-valued source position p_t in
(0, S); an integer window of radius D around floor(p_t), clamped to the
sentence, is scored bilinearly and softmax-normalized, then damped by a
Gaussian centered at p_t with sigma = D/2.  Window MEMBERSHIP is treated as
non-differentiable; p_t receives gradient through the Gaussian factor.

Positions here are in ORIGINAL word order (the encoder re-indexes its
reversed pass before attention sees it).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import Parameter, sigmoid, softmax


@dataclass
class AttentionParams:
    w_p: Parameter  # [d, d]
    v_p: Parameter  # [d]
    w_a: Parameter  # [d, d]

    def all(self):
        return [self.w_p, self.v_p, self.w_a]


@dataclass
class AttentionTrace:
    """Everything one attention step looked at, for dumps and tests."""

    p_t: float
    window: np.ndarray   # integer source positions
    align: np.ndarray    # softmax weights over the window, sum to 1
    weights: np.ndarray  # a_t(s) = align * gaussian
    context: np.ndarray  # [d]


def predict_position(h_t, params: AttentionParams, S):
    """p_t = S * sigmoid(v_p . tanh(W_p h_t)), strictly inside (0, S)."""
    if S < 1:
        raise ConfigError(f"predict_position: source length {S} < 1")
    m = np.tanh(params.w_p.value @ h_t)
    q = float(params.v_p.value @ m)
    sg = 1.0 / (1.0 + np.exp(-q))
    p_t = S * sg
    cache = (h_t, m, sg, S)
    return p_t, cache


def predict_position_backward(dp, cache, params: AttentionParams):
    h_t, m, sg, S = cache
    dq = dp * S * sg * (1.0 - sg)
    params.v_p.grad += dq * m
    dm = dq * params.v_p.value
    dz = dm * (1.0 - m * m)
    params.w_p.grad += np.outer(dz, h_t)
    return params.w_p.value.T @ dz


def window_bounds(p_t, D, S):
    center = int(np.floor(p_t))
    lo = max(0, center - D)
    hi = min(S - 1, center + D)
    return lo, hi


def window_weights(h_t, top_seq, p_t, D, w_a: Parameter):
    """Score the window around p_t and build the combined weights a_t(s).

    Returns (trace, cache); trace.context is filled in by context_vector.
    """
    if D < 1:
        raise ConfigError(f"attention window radius D must be >= 1, got {D}")
    S = len(top_seq)
    if S < 1:
        raise ConfigError("window_weights: empty source")
    lo, hi = window_bounds(p_t, D, S)
    win = np.arange(lo, hi + 1)
    hs = np.asarray(top_seq)[win]                 # [W, d]
    u = w_a.value.T @ h_t                         # score(h_t, h_s) = (W_a^T h_t) . h_s
    scores = hs @ u
    align = softmax(scores)
    sigma = D / 2.0
    gauss = np.exp(-((win - p_t) ** 2) / (2.0 * sigma * sigma))
    weights = align * gauss
    trace = AttentionTrace(p_t=float(p_t), window=win, align=align,
                           weights=weights, context=None)
    cache = (h_t, hs, win, u, align, gauss, sigma)
    return trace, cache


def context_vector(trace: AttentionTrace, top_seq):
    """c_t = sum over the window of a_t(s) * h_s."""
    hs = np.asarray(top_seq)[trace.window]
    ctx = trace.weights @ hs
    trace.context = ctx
    return ctx


def attend(h_t, top_seq, params: AttentionParams, D):
    """Full single-source step: position, window, context.

    Returns (ctx [d], trace, cache) for one example.
    """
    S = len(top_seq)
    p_t, pcache = predict_position(h_t, params, S)
    trace, wcache = window_weights(h_t, top_seq, p_t, D, params.w_a)
    ctx = context_vector(trace, top_seq)
    cache = (pcache, wcache, trace)
    return ctx, trace, cache


def attend_backward(dctx, cache, params: AttentionParams):
    """Backward through attend; accumulates into params.

    Returns (dh_t [d], window positions, dtop over window [W, d]).
    """
    pcache, wcache, trace = cache
    h_t, hs, win, u, align, gauss, sigma = wcache
    weights = trace.weights
    p_t = trace.p_t

    dw = hs @ dctx                       # d a_t(s)
    dhs = np.outer(weights, dctx)        # context term
    dalign = dw * gauss
    dgauss = dw * align
    dp = float(np.sum(dgauss * gauss * (win - p_t) / (sigma * sigma)))
    # softmax backward over the window
    dscores = align * (dalign - float(align @ dalign))
    du = hs.T @ dscores
    dhs += np.outer(dscores, u)
    params.w_a.grad += np.outer(h_t, du)
    dh_t = params.w_a.value @ du
    dh_t = dh_t + predict_position_backward(dp, pcache, params)
    return dh_t, win, dhs


def attentional_hidden(h_t, contexts, proj: Parameter):
    """h~ = tanh(W [h_t; c_1 (; c_2)]).  Batched: h_t [B, d], each context
    [B, d]; returns ([B, d], cache)."""
    if len(contexts) not in (1, 2):
        raise ConfigError(f"attentional_hidden: {len(contexts)} contexts")
    h_t = np.atleast_2d(h_t)
    contexts = [np.atleast_2d(c) for c in contexts]
    cat = np.concatenate([h_t] + contexts, axis=1)
    d = h_t.shape[1]
    if proj.value.shape != (d, cat.shape[1]):
        raise DimensionError(
            f"output projection {proj.value.shape} vs concat width {cat.shape[1]}"
        )
    out = np.tanh(cat @ proj.value.T)
    cache = (cat, out, d, len(contexts))
    return out, cache


def attentional_hidden_backward(dout, cache, proj: Parameter):
    cat, out, d, n_ctx = cache
    dpre = dout * (1.0 - out * out)
    proj.grad += dpre.T @ cat
    dcat = dpre @ proj.value
    parts = [dcat[:, :d]] + [dcat[:, d * (k + 1):d * (k + 2)] for k in range(n_ctx)]
    return parts[0], parts[1:]


def multi_attend(h_t, enc1_seq, enc2_seq, params1, params2, proj, D):
    """Dual-source step: independent position/window/context per encoder,
    then a joint output projection.  Single example; returns
    (h_tilde [d], trace1, trace2)."""
    c1, t1, _ = attend(h_t, enc1_seq, params1, D)
    c2, t2, _ = attend(h_t, enc2_seq, params2, D)
    out, _ = attentional_hidden(h_t, [c1, c2], proj)
    return out[0], t1, t2
