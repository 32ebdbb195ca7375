"""Model assembly: encoders, combiners, attention, decoder, softmax.

forward_loss runs teacher-forced decoding over a padded batch and records a
tape (per-step caches); backward walks the tape in reverse and accumulates
gradients as SUMS over the batch into every Parameter.  Normalization by
batch size happens in the trainer.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import attention as attn_mod
from . import combiner as comb_mod
from . import recurrent as rec_mod
from .errors import (CompatibilityError, ConfigError, CorpusIOError,
                     DimensionError, NumericError, VocabularyError)
from .numerics import Parameter, log_softmax
from .rngs import rng_stream

MODES = ("single", "multi-basic", "multi-childsum")
ATTENTIONS = ("none", "local-p")


@dataclass
class ModelConfig:
    mode: str = "single"
    attention: str = "none"
    layers: int = 2
    hidden: int = 64
    src_vocab_sizes: tuple = (8,)
    tgt_vocab_size: int = 8
    window: int = 10      # attention radius D
    dropout: float = 0.0
    dtype: str = "float64"

    def __post_init__(self):
        self.src_vocab_sizes = tuple(self.src_vocab_sizes)
        self.validate()

    def validate(self):
        errs = []
        if self.mode not in MODES:
            errs.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.attention not in ATTENTIONS:
            errs.append(f"attention must be one of {ATTENTIONS}, got {self.attention!r}")
        if self.layers < 1:
            errs.append(f"layers must be >= 1, got {self.layers}")
        if self.hidden < 1:
            errs.append(f"hidden must be >= 1, got {self.hidden}")
        if self.attention == "local-p" and self.window < 1:
            errs.append(f"window radius D must be >= 1 with attention, got {self.window}")
        if not 0.0 <= self.dropout < 1.0:
            errs.append(f"dropout must be in [0,1), got {self.dropout}")
        want = 1 if self.mode == "single" else 2
        if len(self.src_vocab_sizes) != want:
            errs.append(f"mode {self.mode} needs {want} source vocabularies, "
                        f"got {len(self.src_vocab_sizes)}")
        if self.dtype not in ("float64", "float32"):
            errs.append(f"dtype must be float64 or float32, got {self.dtype!r}")
        if errs:
            raise ConfigError("; ".join(errs))

    @property
    def n_sources(self):
        return 1 if self.mode == "single" else 2

    @property
    def use_attention(self):
        return self.attention == "local-p"

    @property
    def combiner_method(self):
        return {"multi-basic": "basic", "multi-childsum": "childsum"}.get(self.mode)

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def to_dict(self):
        return {"mode": self.mode, "attention": self.attention, "layers": self.layers,
                "hidden": self.hidden, "src_vocab_sizes": list(self.src_vocab_sizes),
                "tgt_vocab_size": self.tgt_vocab_size, "window": self.window,
                "dropout": self.dropout, "dtype": self.dtype}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["src_vocab_sizes"] = tuple(d["src_vocab_sizes"])
        return cls(**d)


class ModelParams:
    """All learned weights, each registered exactly once by name."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.registry = {}
        d = config.hidden
        dt = config.np_dtype

        self.src_embeds = [self._new(f"src{k}.embed", (v, d), dt)
                           for k, v in enumerate(config.src_vocab_sizes)]
        self.tgt_embed = self._new("tgt.embed", (config.tgt_vocab_size, d), dt)

        self.enc_layers = []
        for k in range(config.n_sources):
            layers = []
            for l in range(config.layers):
                layers.append(self._lstm(f"enc{k}.l{l}", d, d, dt))
            self.enc_layers.append(layers)

        dec_in0 = 2 * d if config.use_attention else d
        self.dec_layers = []
        for l in range(config.layers):
            d_in = dec_in0 if l == 0 else d
            self.dec_layers.append(self._lstm(f"dec.l{l}", d_in, d, dt))

        self.combiners = None
        if config.mode == "multi-basic":
            self.combiners = [comb_mod.BasicCombinerParams(
                w_c=self._new(f"comb.l{l}.w_c", (d, 2 * d), dt))
                for l in range(config.layers)]
        elif config.mode == "multi-childsum":
            self.combiners = []
            for l in range(config.layers):
                kw = {nm: self._new(f"comb.l{l}.{nm}", (d, d), dt)
                      for nm in ("w1_i", "w2_i", "w1_f", "w2_f",
                                 "w1_o", "w2_o", "w1_u", "w2_u")}
                self.combiners.append(comb_mod.ChildSumCombinerParams(**kw))

        self.attn = None
        self.out_proj = None
        if config.use_attention:
            self.attn = [attn_mod.AttentionParams(
                w_p=self._new(f"attn{k}.w_p", (d, d), dt),
                v_p=self._new(f"attn{k}.v_p", (d,), dt),
                w_a=self._new(f"attn{k}.w_a", (d, d), dt))
                for k in range(config.n_sources)]
            width = (1 + config.n_sources) * d
            self.out_proj = self._new("out_proj.w", (d, width), dt)

        self.softmax_w = self._new("softmax.w", (config.tgt_vocab_size, d), dt)
        self.softmax_b = self._new("softmax.b", (config.tgt_vocab_size,), dt)

    def _new(self, name, shape, dtype):
        if name in self.registry:
            raise ConfigError(f"duplicate parameter name {name}")
        p = Parameter(name=name, value=np.zeros(shape, dtype=dtype))
        self.registry[name] = p
        return p

    def _lstm(self, prefix, d_in, d, dtype):
        return rec_mod.LstmParams(
            w_x=self._new(f"{prefix}.w_x", (4 * d, d_in), dtype),
            w_h=self._new(f"{prefix}.w_h", (4 * d, d), dtype),
            b=self._new(f"{prefix}.b", (4 * d,), dtype))

    def all(self):
        return list(self.registry.values())

    def zero_grads(self):
        for p in self.all():
            p.zero_grad()

    def n_scalars(self):
        return sum(p.value.size for p in self.all())


_BIAS_SUFFIXES = (".b", "softmax.b")


def init_params(config: ModelConfig, seed, init_range):
    """Uniform [-range, +range] weights from the 'init' substream; biases zero."""
    if init_range <= 0:
        raise ConfigError(f"init range must be positive, got {init_range}")
    params = ModelParams(config)
    rng = rng_stream(seed, "init")
    for name, p in params.registry.items():
        if name.endswith(".b"):
            continue  # bias vectors stay zero
        p.value[...] = rng.uniform(-init_range, init_range, size=p.value.shape)
    return params


def perplexity(total_nll, predicted_tokens):
    if predicted_tokens < 1:
        raise ConfigError("perplexity over zero predicted tokens")
    return math.exp(total_nll / predicted_tokens)


def make_dropout_masks(config: ModelConfig, params: ModelParams, batch_size, rng):
    """Inverted dropout masks, one per non-recurrent connection, shared
    across timesteps within the batch."""
    rate = config.dropout
    if rate == 0.0:
        return None
    keep = 1.0 - rate

    def mk(width):
        return (rng.random((batch_size, width)) >= rate).astype(config.np_dtype) / keep

    d = config.hidden
    masks = {
        "enc": [[mk(l.input_size) for l in layers] for layers in params.enc_layers],
        "dec": [mk(l.input_size) for l in params.dec_layers],
        "htilde": mk(d) if config.use_attention else None,
    }
    return masks


def _check_ids(ids, vocab_size, what):
    if ids.size and (ids.max() >= vocab_size or ids.min() < 0):
        raise VocabularyError(f"{what}: token id outside vocabulary of size {vocab_size}")


def forward_loss(batch, params: ModelParams, config: ModelConfig,
                 train_mode=False, rng=None):
    """Teacher-forced negative log-likelihood over a batch.

    Returns (total_nll, predicted_tokens, tape).  Masked target positions
    contribute zero loss and are excluded from predicted_tokens.
    """
    B = batch.size
    d = config.hidden
    dt = config.np_dtype
    L = config.layers

    sources = [(batch.src1, batch.src1_mask, batch.src1_len)]
    if config.n_sources == 2:
        if batch.src2 is None:
            raise ConfigError("multi-source model but the batch has no second source")
        sources.append((batch.src2, batch.src2_mask, batch.src2_len))
    elif batch.src2 is not None:
        raise ConfigError("single-source model but the batch carries a second source")
    _check_ids(batch.tgt_in, config.tgt_vocab_size, "target")

    masks = make_dropout_masks(config, params, B, rng) if (train_mode and rng is not None) else None

    enc_finals, enc_tops, enc_caches = [], [], []
    for k, (ids, mask, _lens) in enumerate(sources):
        emask = masks["enc"][k] if masks else None
        final, top_h, cache = rec_mod.encode_batch(
            ids.astype(np.int64), mask.astype(dt), params.src_embeds[k],
            params.enc_layers[k], emask)
        enc_finals.append(final)
        enc_tops.append(top_h)
        enc_caches.append(cache)

    comb_cache = None
    if config.n_sources == 2:
        dec_states, comb_cache = comb_mod.combine_stacks(
            enc_finals[0], enc_finals[1], config.combiner_method, params.combiners)
    else:
        dec_states = [(h.copy(), c.copy()) for h, c in enc_finals[0]]

    # per-example top sequences in original word order (attention only)
    orig_tops = None
    if config.use_attention:
        orig_tops = []
        for k, (ids, mask, lens) in enumerate(sources):
            orig_tops.append([enc_tops[k][b, lens[b] - 1::-1] for b in range(B)])

    Tt = batch.tgt_in.shape[1]
    htilde_prev = np.zeros((B, d), dtype=dt)
    total_nll = 0.0
    step_tapes = []
    dmask_dec = masks["dec"] if masks else None
    hmask = masks["htilde"] if masks else None

    for t in range(Tt):
        emb = params.tgt_embed.value[batch.tgt_in[:, t]]
        x = np.concatenate([emb, htilde_prev], axis=1) if config.use_attention else emb
        dec_states, step_cache = rec_mod.stack_step(x, dec_states, params.dec_layers, dmask_dec)
        h_top = dec_states[-1][0]

        att_caches = None
        hcache = None
        if config.use_attention:
            ctxs = [np.zeros((B, d), dtype=dt) for _ in sources]
            att_caches = [[None] * B for _ in sources]
            for b in range(B):
                for k in range(len(sources)):
                    ctx, _trace, acache = attn_mod.attend(
                        h_top[b], orig_tops[k][b], params.attn[k], config.window)
                    ctxs[k][b] = ctx
                    att_caches[k][b] = acache
            htilde, hcache = attn_mod.attentional_hidden(h_top, ctxs, params.out_proj)
            sm_in = htilde * hmask if hmask is not None else htilde
            htilde_prev = htilde
        else:
            sm_in = h_top

        logits = sm_in @ params.softmax_w.value.T + params.softmax_b.value
        logp = log_softmax(logits)
        gold = batch.tgt_out[:, t]
        m = batch.tgt_mask[:, t]
        nll_t = -float((logp[np.arange(B), gold] * m).sum())
        if not np.isfinite(nll_t):
            raise NumericError(f"non-finite loss at decoder step {t}")
        total_nll += nll_t
        probs = np.exp(logp)
        step_tapes.append({"stack": step_cache, "att": att_caches, "hcache": hcache,
                           "sm_in": sm_in, "probs": probs, "gold": gold, "mask": m})

    tape = {"batch": batch, "config": config, "masks": masks,
            "enc_caches": enc_caches, "comb_cache": comb_cache,
            "enc_tops_shape": [th.shape for th in enc_tops],
            "sources": sources, "steps": step_tapes}
    return total_nll, batch.n_predicted, tape


def backward(tape, params: ModelParams):
    """BPTT over a recorded forward tape.  Grads are sums over the batch."""
    config = tape["config"]
    batch = tape["batch"]
    masks = tape["masks"]
    B = batch.size
    d = config.hidden
    dt = config.np_dtype
    L = config.layers
    steps = tape["steps"]
    sources = tape["sources"]

    dH_top = None
    if config.use_attention:
        dH_top = [np.zeros(shape, dtype=dt) for shape in tape["enc_tops_shape"]]

    d_states = [(np.zeros((B, d), dtype=dt), np.zeros((B, d), dtype=dt)) for _ in range(L)]
    dhtilde_feed = np.zeros((B, d), dtype=dt)
    dmask_dec = masks["dec"] if masks else None
    hmask = masks["htilde"] if masks else None

    for t in range(len(steps) - 1, -1, -1):
        st = steps[t]
        probs, gold, m = st["probs"], st["gold"], st["mask"]
        dlogits = probs * m[:, None]
        dlogits[np.arange(B), gold] -= m
        params.softmax_w.grad += dlogits.T @ st["sm_in"]
        params.softmax_b.grad += dlogits.sum(axis=0)
        dsm_in = dlogits @ params.softmax_w.value

        if config.use_attention:
            dhtilde = (dsm_in * hmask if hmask is not None else dsm_in) + dhtilde_feed
            dh_top, dctxs = attn_mod.attentional_hidden_backward(
                dhtilde, st["hcache"], params.out_proj)
            dh_top = dh_top.copy()
            for b in range(B):
                for k in range(len(sources)):
                    dh_b, win, dhs = attn_mod.attend_backward(
                        dctxs[k][b], st["att"][k][b], params.attn[k])
                    dh_top[b] += dh_b
                    lens = sources[k][2]
                    dH_top[k][b, lens[b] - 1 - win] += dhs
        else:
            dh_top = dsm_in

        dstates_t = [(dh + (dh_top if l == L - 1 else 0.0), dc)
                     for l, (dh, dc) in enumerate(d_states)]
        dx, d_states = rec_mod.stack_step_backward(
            dstates_t, st["stack"], params.dec_layers, dmask_dec)

        if config.use_attention:
            demb = dx[:, :d]
            dhtilde_feed = dx[:, d:] if t > 0 else np.zeros((B, d), dtype=dt)
        else:
            demb = dx
        np.add.at(params.tgt_embed.grad, batch.tgt_in[:, t], demb)

    if config.n_sources == 2:
        dfin = comb_mod.combine_stacks_backward(
            d_states, tape["comb_cache"], config.combiner_method, params.combiners)
    else:
        dfin = (d_states,)

    for k in range(len(sources)):
        rec_mod.encode_batch_backward(
            dfin[k], dH_top[k] if dH_top is not None else None,
            tape["enc_caches"][k], params.src_embeds[k], params.enc_layers[k],
            masks["enc"][k] if masks else None)

    for p in params.all():
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient in {p.name}")


class DecodeSession:
    """Incremental single-example decoding over frozen parameters."""

    def __init__(self, params: ModelParams, config: ModelConfig, src1_ids, src2_ids=None):
        if config.n_sources == 2 and src2_ids is None:
            raise ConfigError("multi-source model needs two source sentences")
        if config.n_sources == 1 and src2_ids is not None:
            raise ConfigError("single-source model given two source sentences")
        self.params = params
        self.config = config
        srcs = [src1_ids] + ([src2_ids] if src2_ids is not None else [])
        finals, self.tops = [], []
        for k, ids in enumerate(srcs):
            final, top_seq = rec_mod.encode(ids, params.src_embeds[k], params.enc_layers[k])
            finals.append(final)
            self.tops.append(top_seq)
        if config.n_sources == 2:
            self.init_states, _ = comb_mod.combine_stacks(
                finals[0], finals[1], config.combiner_method, params.combiners)
        else:
            self.init_states = [(h.copy(), c.copy()) for h, c in finals[0]]
        self.src_lengths = [len(ids) for ids in srcs]

    def initial(self):
        d = self.config.hidden
        htilde = np.zeros((1, d), dtype=self.config.np_dtype)
        return [(h.copy(), c.copy()) for h, c in self.init_states], htilde

    def step(self, states, htilde_prev, token_id):
        """One teacher-free decoder step.  Returns
        (new_states, htilde [1,d], log_probs [V], traces per source)."""
        p, cfg = self.params, self.config
        emb = p.tgt_embed.value[np.array([token_id])]
        x = np.concatenate([emb, htilde_prev], axis=1) if cfg.use_attention else emb
        states, _ = rec_mod.stack_step(x, states, p.dec_layers)
        h_top = states[-1][0]
        traces = []
        if cfg.use_attention:
            ctxs = []
            for k, top_seq in enumerate(self.tops):
                ctx, trace, _ = attn_mod.attend(h_top[0], top_seq, p.attn[k], cfg.window)
                ctxs.append(ctx.reshape(1, -1))
                traces.append(trace)
            htilde, _ = attn_mod.attentional_hidden(h_top, ctxs, p.out_proj)
            sm_in = htilde
        else:
            htilde = htilde_prev
            sm_in = h_top
        logits = sm_in @ p.softmax_w.value.T + p.softmax_b.value
        return states, htilde, log_softmax(logits)[0], traces


CKPT_MAGIC = b"MSNMTCKPT1\n"


def save_checkpoint(path, config: ModelConfig, params: ModelParams, vocab_meta=None):
    """Versioned flat binary; write-then-rename for atomicity."""
    manifest = []
    blobs = []
    off = 0
    for name, p in params.registry.items():
        raw = np.ascontiguousarray(p.value).tobytes()
        manifest.append({"name": name, "shape": list(p.value.shape),
                         "dtype": str(p.value.dtype), "offset": off, "nbytes": len(raw)})
        blobs.append(raw)
        off += len(raw)
    header = json.dumps({"config": config.to_dict(), "vocab": vocab_meta or {},
                         "params": manifest}, sort_keys=True).encode("utf-8")
    tmp = path + ".tmp"
    try:
        with open(tmp, "wb") as f:
            f.write(CKPT_MAGIC)
            f.write(len(header).to_bytes(8, "little"))
            f.write(header)
            for raw in blobs:
                f.write(raw)
        os.replace(tmp, path)
    except OSError as e:
        raise CorpusIOError(f"cannot write checkpoint {path}: {e}") from e


def load_checkpoint(path):
    """Returns (config, params, vocab_meta); round-trip is bit-exact."""
    try:
        with open(path, "rb") as f:
            magic = f.read(len(CKPT_MAGIC))
            if magic != CKPT_MAGIC:
                raise CompatibilityError(f"{path}: not an msnmt checkpoint")
            hlen = int.from_bytes(f.read(8), "little")
            header = json.loads(f.read(hlen).decode("utf-8"))
            body = f.read()
    except OSError as e:
        raise CorpusIOError(f"cannot read checkpoint {path}: {e}") from e
    config = ModelConfig.from_dict(header["config"])
    params = ModelParams(config)
    saved = {m["name"]: m for m in header["params"]}
    if set(saved) != set(params.registry):
        raise CompatibilityError(f"{path}: parameter names do not match its config")
    for name, p in params.registry.items():
        m = saved[name]
        if tuple(m["shape"]) != p.value.shape:
            raise CompatibilityError(
                f"{path}: {name} shape {m['shape']} vs expected {p.value.shape}")
        arr = np.frombuffer(body[m["offset"]:m["offset"] + m["nbytes"]],
                            dtype=m["dtype"]).reshape(p.value.shape)
        p.value[...] = arr
    return config, params, header.get("vocab", {})
