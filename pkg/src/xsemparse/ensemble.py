"""Multi-encoder ensembling inside encoder-decoder attention.

Each of N encoders reads one translation of the input. In every decoder layer
the decoder state attends to each encoder output separately; the N attention
outputs are merged by their mean or by a softmax gate, and the merged vector
takes the place of ordinary cross-attention.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numeric as nm
from .errors import ArityError, ConfigurationError, ParameterError, ShapeError
from .numeric import Tensor
from .transformer import NO_DROPOUT, encoder_layer_forward, multi_head_attention

COMB_MODES = ("mean", "gated")


@dataclass
class EnsembleConfig:
    n_encoders: int = 1
    comb_mode: str = "gated"
    p_shuffle: float = 0.0

    def __post_init__(self):
        if self.n_encoders < 1:
            raise ParameterError(f"n_encoders must be >= 1, got {self.n_encoders}")
        if self.comb_mode not in COMB_MODES:
            raise ParameterError(f"comb_mode must be one of {COMB_MODES}, got {self.comb_mode!r}")
        if not 0.0 <= self.p_shuffle < 1.0:
            raise ParameterError(f"p_shuffle must lie in [0, 1), got {self.p_shuffle}")


@dataclass
class GateParams:
    """w_g: (N, d_x); w_h: (d_x, N * d_x)."""

    w_g: Tensor
    w_h: Tensor

    @property
    def n(self):
        return self.w_g.shape[0]

    @classmethod
    def init(cls, n, d_model, rng):
        return cls(nm.xavier_init((n, d_model), rng), nm.xavier_init((d_model, n * d_model), rng))


def encoder_bank_forward(inputs, stacks, pad_masks=None, drop=NO_DROPOUT):
    """Run encoder stack n on input n. ``stacks`` is a list of N layer lists."""
    if len(inputs) != len(stacks):
        raise ArityError(f"{len(inputs)} inputs for {len(stacks)} encoders")
    if pad_masks is None:
        pad_masks = [None] * len(inputs)
    outs = []
    for x, layers, mask in zip(inputs, stacks, pad_masks):
        for layer in layers:
            x = encoder_layer_forward(x, layer, mask, drop)
        outs.append(x)
    return outs


def comb_mean(m):
    if not m:
        raise ArityError("comb_mean needs at least one input")
    shape = m[0].shape
    if any(t.shape != shape for t in m):
        raise ShapeError(f"comb_mean inputs differ in shape: {[t.shape for t in m]}")
    if len(m) == 1:
        return m[0]
    total = m[0]
    for t in m[1:]:
        total = total + t
    return total * (1.0 / len(m))


def gate_weights(m, gate):
    """Per-position simplex weights g = softmax(W_g tanh(W_h [m_1; ...; m_N]))."""
    n = len(m)
    if gate.n != n:
        raise ShapeError(f"gate built for {gate.n} inputs, got {n}")
    d = m[0].shape[-1]
    if gate.w_h.shape != (d, n * d) or gate.w_g.shape != (n, d):
        raise ShapeError(f"gate shapes {gate.w_g.shape}, {gate.w_h.shape} inconsistent with N={n}, d={d}")
    if any(t.shape != m[0].shape for t in m):
        raise ShapeError(f"gated inputs differ in shape: {[t.shape for t in m]}")
    cat = nm.concat(m, axis=-1) if n > 1 else m[0]
    h = nm.tanh(nm.linear(cat, nm.transpose(gate.w_h)))
    return nm.softmax(nm.linear(h, nm.transpose(gate.w_g)), axis=-1)


def comb_gated(m, gate, return_weights=False):
    g = gate_weights(m, gate)
    out = None
    for i, t in enumerate(m):
        term = t * g[..., i:i + 1]
        out = term if out is None else out + term
    return (out, g) if return_weights else out


def ensemble_cross_attention(d_state, encs, params, gate=None, mode="gated", pad_masks=None):
    """Attend from the decoder state to every encoder output and merge the results."""
    n = len(encs)
    if len(params) != n:
        raise ArityError(f"{n} encoder outputs but {len(params)} attention parameter sets")
    if mode not in COMB_MODES:
        raise ConfigurationError(f"unknown combination mode {mode!r}")
    if mode == "gated" and gate is None:
        raise ConfigurationError("gated combination requested without gate parameters")
    if pad_masks is None:
        pad_masks = [None] * n
    m = []
    for enc, p, mask in zip(encs, params, pad_masks):
        attn_mask = None if mask is None else np.expand_dims(np.asarray(mask, bool), -2)
        m.append(multi_head_attention(d_state, enc, enc, p, attn_mask))
    if mode == "mean":
        return comb_mean(m)
    return comb_gated(m, gate)


def shuffle_assignment(paraphrases, p_shuffle, rng, n=None):
    """With probability ``p_shuffle`` permute which encoder slot gets which paraphrase."""
    if n is not None and len(paraphrases) != n:
        raise ArityError(f"expected {n} paraphrases, got {len(paraphrases)}")
    items = list(paraphrases)
    if len(items) < 2 or p_shuffle <= 0.0:
        return items
    if rng.random() >= p_shuffle:
        return items
    return [items[i] for i in rng.permutation(len(items))]


def sample_paraphrase(paraphrases, rng):
    if not paraphrases:
        raise ArityError("sample_paraphrase needs at least one paraphrase")
    return paraphrases[rng.choice(len(paraphrases))]
