"""Post-norm transformer encoder/decoder layers.

Heads are concatenated with no output projection after attention, and each
sublayer's residual is its own input.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import numeric as nm
from .errors import DegenerateInputError, ParameterError, ShapeError
from .numeric import Tensor


@dataclass
class AttentionParams:
    """Per-head projections, each stored as (heads, d_x, d_x // heads)."""

    wq: Tensor
    wk: Tensor
    wv: Tensor

    @property
    def heads(self):
        return self.wq.shape[0]

    @property
    def d_model(self):
        return self.wq.shape[1]

    @classmethod
    def init(cls, d_model, heads, rng):
        if heads < 1 or d_model % heads:
            raise ParameterError(f"d_x={d_model} is not divisible by heads={heads}")
        shape = (heads, d_model, d_model // heads)
        return cls(nm.xavier_init(shape, rng), nm.xavier_init(shape, rng), nm.xavier_init(shape, rng))


@dataclass
class FeedForward:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def init(cls, d_model, d_ff, rng):
        return cls(
            nm.xavier_init((d_model, d_ff), rng),
            nm.parameter(np.zeros(d_ff)),
            nm.xavier_init((d_ff, d_model), rng),
            nm.parameter(np.zeros(d_model)),
        )

    def __call__(self, x):
        return nm.linear(nm.relu(nm.linear(x, self.w1, self.b1)), self.w2, self.b2)


@dataclass
class LayerNormParams:
    gain: Tensor
    bias: Tensor

    @classmethod
    def init(cls, d_model):
        return cls(nm.parameter(np.ones(d_model)), nm.parameter(np.zeros(d_model)))

    def __call__(self, x, eps=1e-5):
        return nm.layer_norm(x, self.gain, self.bias, eps)


@dataclass
class EncoderLayer:
    self_attn: AttentionParams
    ff: FeedForward
    ln1: LayerNormParams
    ln2: LayerNormParams

    @classmethod
    def init(cls, d_model, heads, d_ff, rng):
        return cls(
            AttentionParams.init(d_model, heads, rng),
            FeedForward.init(d_model, d_ff, rng),
            LayerNormParams.init(d_model),
            LayerNormParams.init(d_model),
        )


@dataclass
class DecoderLayer:
    """``cross_attn`` holds one parameter set per encoder (a single one for plain models)."""

    self_attn: AttentionParams
    cross_attn: list
    ff: FeedForward
    ln1: LayerNormParams
    ln2: LayerNormParams
    ln3: LayerNormParams
    gate: object = None

    @classmethod
    def init(cls, d_model, heads, d_ff, rng, n_cross=1):
        return cls(
            AttentionParams.init(d_model, heads, rng),
            [AttentionParams.init(d_model, heads, rng) for _ in range(n_cross)],
            FeedForward.init(d_model, d_ff, rng),
            LayerNormParams.init(d_model),
            LayerNormParams.init(d_model),
            LayerNormParams.init(d_model),
        )


@dataclass
class Dropout:
    """Dropout settings threaded through a forward pass."""

    p: float = 0.0
    training: bool = False
    rng: nm.Rng = field(default_factory=lambda: nm.Rng(0))

    def __call__(self, x):
        return nm.dropout(x, self.p, self.training, self.rng)


NO_DROPOUT = Dropout()


def named_parameters(obj, prefix=""):
    """Yield ``(dotted_name, Tensor)`` for every tensor reachable from ``obj``."""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_parameters(item, f"{prefix}.{i}" if prefix else str(i))
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            if f.name.startswith("_"):
                continue
            val = getattr(obj, f.name)
            if val is None or isinstance(val, (int, float, str, bool, Dropout, nm.Rng)):
                continue
            yield from named_parameters(val, f"{prefix}.{f.name}" if prefix else f.name)


def _check_mask(mask, tq, tk):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[-2:] not in ((tq, tk), (1, tk)):
        raise ShapeError(f"mask shape {mask.shape} incompatible with scores ({tq}, {tk})")
    if not mask.any(axis=-1).all():
        raise DegenerateInputError("attention mask has a row with no allowed position")
    return mask


def multi_head_attention(q, k, v, params, mask=None, return_weights=False):
    """Scaled dot-product attention per head; head outputs are concatenated.

    q: (..., Tq, d_x); k, v: (..., Tk, d_x). ``mask`` is boolean, True = may attend,
    broadcastable to (..., Tq, Tk).
    """
    d = params.d_model
    for name, t in (("q", q), ("k", k), ("v", v)):
        if t.shape[-1] != d:
            raise ShapeError(f"{name} has width {t.shape[-1]}, attention expects {d}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"key length {k.shape[-2]} != value length {v.shape[-2]}")
    heads = params.heads
    dk = d // heads
    lead = q.shape[:-2]
    tq, tk = q.shape[-2], k.shape[-2]

    qh = nm.project_heads(q, params.wq)  # (..., H, Tq, dk)
    kh = nm.project_heads(k, params.wk)
    vh = nm.project_heads(v, params.wv)
    scores = nm.matmul(qh, nm.transpose(kh)) * (1.0 / np.sqrt(dk))
    if mask is not None:
        mask = _check_mask(mask, tq, tk)
        mask = np.expand_dims(mask, -3)  # broadcast over heads
        scores = nm.masked_fill(scores, mask)
    weights = nm.softmax(scores, axis=-1)
    z = nm.matmul(weights, vh)  # (..., H, Tq, dk)
    nd = z.ndim
    perm = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
    out = nm.reshape(nm.transpose(z, perm), lead + (tq, d))
    return (out, weights) if return_weights else out


def encoder_layer_forward(x, layer, pad_mask=None, drop=NO_DROPOUT):
    """``pad_mask``: boolean (..., T), True at real tokens."""
    attn_mask = None if pad_mask is None else np.expand_dims(np.asarray(pad_mask, bool), -2)
    z = multi_head_attention(x, x, x, layer.self_attn, attn_mask)
    yhat = layer.ln1(x + drop(z))
    return layer.ln2(yhat + drop(layer.ff(yhat)))


def decoder_layer_forward(y, enc, layer, causal, enc_pad_mask=None, drop=NO_DROPOUT, cross_attend=None):
    """One decoder layer.

    ``cross_attend(state)`` overrides the encoder-decoder attention (used by the
    ensemble); by default it is plain attention over ``enc`` with the layer's
    single cross-attention parameter set.
    """
    causal = np.asarray(causal, dtype=bool)
    if causal.shape[-2:] != (y.shape[-2], y.shape[-2]) or np.triu(causal, 1).any():
        raise ShapeError("decoder self-attention mask must be lower-triangular T x T")
    s = multi_head_attention(y, y, y, layer.self_attn, causal)
    h1 = layer.ln1(y + drop(s))
    if cross_attend is None:
        m = None if enc_pad_mask is None else np.expand_dims(np.asarray(enc_pad_mask, bool), -2)
        c = multi_head_attention(h1, enc, enc, layer.cross_attn[0], m)
    else:
        c = cross_attend(h1)
    h2 = layer.ln2(h1 + drop(c))
    return layer.ln3(h2 + drop(layer.ff(h2)))


def positional_encoding(t_max, d_model):
    """Sinusoidal table: pe[t, 2i] = sin(t / 10000^(2i/d)), pe[t, 2i+1] = cos(same)."""
    if d_model % 2:
        raise ParameterError(f"sinusoidal positions need an even width, got {d_model}")
    t = np.arange(t_max, dtype=np.float64)[:, None]
    two_i = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = t / np.power(10000.0, two_i / d_model)
    pe = np.empty((t_max, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return Tensor(pe)


def causal_mask(t):
    if t < 1:
        raise ParameterError(f"causal mask length must be >= 1, got {t}")
    return np.tril(np.ones((t, t), dtype=bool))
