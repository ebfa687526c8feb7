"""Sequence-to-sequence parser assembled from the transformer and ensemble pieces.

One class covers every model family. A plain model has one encoder and
ordinary cross-attention (Seq2Seq, shared encoder, MT-Paraphrase); an
ensemble model has N encoders merged in each decoder layer (MT-Ensemble).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numeric as nm
from .corpus.bpe import SubwordModel, bpe_encode
from .ensemble import (EnsembleConfig, GateParams, encoder_bank_forward, ensemble_cross_attention,
                       sample_paraphrase, shuffle_assignment)
from .errors import ConfigurationError, DatasetError, ParameterError, VocabularyError
from .numeric import Rng, Tensor
from .transformer import (NO_DROPOUT, DecoderLayer, EncoderLayer, causal_mask, decoder_layer_forward,
                          named_parameters, positional_encoding)

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
ARCHITECTURES = ("plain", "ensemble")
POSITIONS = ("sinusoidal", "learned", "none")


class Vocab:
    def __init__(self, tokens=()):
        self.itos = list(SPECIALS)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)

    def add(self, token):
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    pad_id = property(lambda self: 0)
    bos_id = property(lambda self: 1)
    eos_id = property(lambda self: 2)
    unk_id = property(lambda self: 3)

    def encode(self, tokens):
        return [self.stoi.get(t, 3) for t in tokens]

    def decode(self, ids, strip=True):
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.itos):
                raise VocabularyError(f"id {i} outside vocabulary of {len(self.itos)}")
            if strip and i == 2:
                break
            if strip and i in (0, 1):
                continue
            out.append(self.itos[i])
        return out

    def to_json(self):
        return list(self.itos)

    @classmethod
    def from_json(cls, itos):
        v = cls()
        for t in itos[len(SPECIALS):]:
            v.add(t)
        return v


class FeatureInjector:
    """Frozen per-token-type feature vectors standing in for pretrained representations.

    The vector for a token is a Gaussian drawn from an RNG keyed on (seed, token
    string), so it is identical across runs and vocabularies.
    """

    def __init__(self, dim, seed, vocab):
        if dim < 1:
            raise ParameterError(f"feature width must be >= 1, got {dim}")
        self.dim = dim
        self.seed = seed
        rows = [self.vector(t) for t in vocab.itos]
        self.table = Tensor(np.stack(rows))  # never requires grad

    def vector(self, token):
        if token == PAD:
            return np.zeros(self.dim)
        return Rng(self.seed).child(f"feature|{token}").normal(self.dim) / np.sqrt(self.dim)


@dataclass
class ModelConfig:
    d_model: int = 128
    heads: int = 8
    layers: int = 6
    d_ff: int = 0  # 0 -> 4 * d_model
    dropout: float = 0.1
    positional: str = "sinusoidal"
    max_len: int = 128
    architecture: str = "plain"
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    feature_dim: int = 0
    feature_seed: int = 0

    def __post_init__(self):
        if isinstance(self.ensemble, dict):
            self.ensemble = EnsembleConfig(**self.ensemble)
        if self.architecture not in ARCHITECTURES:
            raise ConfigurationError(f"architecture must be one of {ARCHITECTURES}")
        if self.positional not in POSITIONS:
            raise ConfigurationError(f"positional must be one of {POSITIONS}")
        if self.architecture == "plain" and self.ensemble.n_encoders != 1:
            raise ConfigurationError("plain architecture has exactly one encoder")
        if self.d_model % self.heads:
            raise ParameterError(f"d_model={self.d_model} not divisible by heads={self.heads}")

    @property
    def ff_width(self):
        return self.d_ff or 4 * self.d_model

    @property
    def n_encoders(self):
        return self.ensemble.n_encoders


class EnsembleParser:
    def __init__(self, config, src_vocab, tgt_vocab, seed=0, subwords=None):
        self.config = config
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.subwords = subwords
        c = config
        d = c.d_model
        rng = Rng(seed).child("init")
        self.src_embed = nm.xavier_init((len(src_vocab), d), rng)
        self.injector = None
        self.feat_w = self.feat_b = None
        if c.feature_dim:
            self.injector = FeatureInjector(c.feature_dim, c.feature_seed, src_vocab)
            self.feat_w = nm.xavier_init((d + c.feature_dim, d), rng)
            self.feat_b = nm.parameter(np.zeros(d))
        self.tgt_embed = nm.xavier_init((len(tgt_vocab), d), rng)
        self.src_pos = self.tgt_pos = None
        if c.positional == "learned":
            self.src_pos = nm.xavier_init((c.max_len, d), rng)
            self.tgt_pos = nm.xavier_init((c.max_len, d), rng)
        self._pe = positional_encoding(c.max_len, d) if c.positional == "sinusoidal" else None
        self.encoders = [[EncoderLayer.init(d, c.heads, c.ff_width, rng) for _ in range(c.layers)]
                         for _ in range(c.n_encoders)]
        self.decoder = [DecoderLayer.init(d, c.heads, c.ff_width, rng, n_cross=c.n_encoders)
                        for _ in range(c.layers)]
        if c.architecture == "ensemble" and c.ensemble.comb_mode == "gated":
            for layer in self.decoder:
                layer.gate = GateParams.init(c.n_encoders, d, rng)
        self.out_w = nm.xavier_init((d, len(tgt_vocab)), rng)
        self.out_b = nm.parameter(np.zeros(len(tgt_vocab)))

    # parameters

    def named_parameters(self):
        groups = [
            ("src_embed", self.src_embed), ("feat_w", self.feat_w), ("feat_b", self.feat_b),
            ("tgt_embed", self.tgt_embed), ("src_pos", self.src_pos), ("tgt_pos", self.tgt_pos),
            ("encoders", self.encoders), ("decoder", self.decoder),
            ("out_w", self.out_w), ("out_b", self.out_b),
        ]
        for name, obj in groups:
            if obj is not None:
                yield from named_parameters(obj, name)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        if set(params) != set(state):
            missing = sorted(set(params) ^ set(state))
            raise ConfigurationError(f"state dict does not match model: {missing[:5]}")
        for name, p in params.items():
            if p.shape != state[name].shape:
                raise ConfigurationError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data[...] = state[name]

    # tokenization

    def source_ids(self, tokens):
        pieces = bpe_encode(" ".join(tokens), self.subwords) if self.subwords is not None else list(tokens)
        return self.src_vocab.encode(pieces)

    def target_ids(self, lf_tokens):
        return self.tgt_vocab.encode(lf_tokens) + [self.tgt_vocab.eos_id]

    # forward pieces

    def _positions(self, length, learned):
        if length > self.config.max_len:
            raise ParameterError(f"sequence of {length} exceeds max_len={self.config.max_len}")
        if self.config.positional == "sinusoidal":
            return self._pe[:length]
        if self.config.positional == "learned":
            return learned[:length]
        return None

    def embed_source(self, ids, drop=NO_DROPOUT):
        """(B, S) ids -> (B, S, d): embedding ‖ frozen feature, projected, plus position."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.src_vocab)):
            raise VocabularyError(f"source id outside vocabulary of {len(self.src_vocab)}")
        x = nm.embedding(self.src_embed, ids)
        if self.injector is not None:
            feat = nm.embedding(self.injector.table, ids)
            x = nm.linear(nm.concat([x, feat], axis=-1), self.feat_w, self.feat_b)
        pos = self._positions(ids.shape[-1], self.src_pos)
        if pos is not None:
            x = x + pos
        return drop(x)

    def embed_target(self, ids, drop=NO_DROPOUT):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.tgt_vocab)):
            raise VocabularyError(f"target id outside vocabulary of {len(self.tgt_vocab)}")
        y = nm.embedding(self.tgt_embed, ids)
        pos = self._positions(ids.shape[-1], self.tgt_pos)
        if pos is not None:
            y = y + pos
        return drop(y)

    def encode(self, srcs, drop=NO_DROPOUT):
        """``srcs``: list of N padded (B, S_n) id arrays -> (outputs, pad masks)."""
        n = self.config.n_encoders
        if len(srcs) != n:
            raise ConfigurationError(f"model has {n} encoder(s) but received {len(srcs)} input(s)")
        masks = [np.asarray(s) != self.src_vocab.pad_id for s in srcs]
        xs = [self.embed_source(s, drop) for s in srcs]
        return encoder_bank_forward(xs, self.encoders, masks, drop), masks

    def decode(self, encs, enc_masks, tgt_in, drop=NO_DROPOUT):
        """Teacher-forced decoder over (B, T) input ids -> (B, T, |V_target|) logits."""
        y = self.embed_target(tgt_in, drop)
        causal = causal_mask(y.shape[-2])
        ens = self.config.architecture == "ensemble"
        mode = self.config.ensemble.comb_mode
        for layer in self.decoder:
            cross = None
            if ens:
                def cross(state, layer=layer):
                    return ensemble_cross_attention(state, encs, layer.cross_attn, layer.gate, mode, enc_masks)
            y = decoder_layer_forward(y, encs[0], layer, causal, enc_masks[0], drop, cross)
        return nm.linear(y, self.out_w, self.out_b)

    def forward(self, srcs, tgt_in, drop=NO_DROPOUT):
        encs, masks = self.encode(srcs, drop)
        return self.decode(encs, masks, tgt_in, drop)


# training items and batching


@dataclass
class TrainItem:
    """One supervised item.

    ``sources`` holds one utterance, or several machine translations of it.
    A plain model samples one of several; an ensemble model routes N of them
    to its N encoders and replicates a single one across all encoders.
    """

    id: str
    sources: list
    lf: list
    lang: str = "L"


def route_sources(item, model, rng=None, training=False):
    """Pick the encoder input token lists for ``item`` (one list per encoder)."""
    n = model.config.n_encoders
    srcs = item.sources
    if model.config.architecture == "plain":
        if len(srcs) == 1 or not training:
            return [srcs[0]]
        return [sample_paraphrase(srcs, rng)]
    if len(srcs) == 1:
        return [srcs[0]] * n
    if len(srcs) != n:
        raise ConfigurationError(f"ensemble of {n} encoders given {len(srcs)} paraphrases")
    if training:
        return shuffle_assignment(srcs, model.config.ensemble.p_shuffle, rng, n)
    return list(srcs)


def pad_batch(seqs, pad_id):
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out


@dataclass
class Batch:
    srcs: list
    tgt_in: np.ndarray
    tgt_out: np.ndarray


def make_batch(items, model, rng=None, training=False):
    routed = [route_sources(it, model, rng, training) for it in items]
    pad = model.src_vocab.pad_id
    srcs = [pad_batch([model.source_ids(r[n]) for r in routed], pad) for n in range(model.config.n_encoders)]
    gold = [model.target_ids(it.lf) for it in items]
    tgt_in = pad_batch([[model.tgt_vocab.bos_id] + g[:-1] for g in gold], model.tgt_vocab.pad_id)
    tgt_out = pad_batch(gold, model.tgt_vocab.pad_id)
    return Batch(srcs, tgt_in, tgt_out)


def forward_teacher_forced(example, model, drop=NO_DROPOUT, rng=None):
    """Logits for one ``TrainItem`` (T_y x |V_target|) or a ``Batch`` (B x T_y x |V|)."""
    if isinstance(example, TrainItem):
        batch = make_batch([example], model, rng, training=drop.training)
        logits = model.forward(batch.srcs, batch.tgt_in, drop)
        return nm.reshape(logits, logits.shape[1:])
    return model.forward(example.srcs, example.tgt_in, drop)


def batch_loss(model, batch, drop=NO_DROPOUT):
    logits = model.forward(batch.srcs, batch.tgt_in, drop)
    return nm.cross_entropy(logits, batch.tgt_out, model.tgt_vocab.pad_id)


def build_joint_dataset(d_en, d_j, tgt_vocab=None):
    """Union of English and target-language training items, tagged by language."""
    items = [TrainItem(it.id, it.sources, it.lf, "EN") for it in d_en] + list(d_j)
    if tgt_vocab is not None:
        for it in items:
            missing = [t for t in it.lf if t not in tgt_vocab]
            if missing:
                raise DatasetError(f"item {it.id}: logical-form tokens {missing} outside target vocabulary")
    elif d_en and d_j:
        en_toks = {t for it in d_en for t in it.lf}
        j_toks = {t for it in d_j for t in it.lf}
        if not (en_toks & j_toks):
            raise DatasetError("English and target-language datasets share no logical-form tokens")
    return items


def count_parameters(model):
    """Learnable scalars; frozen features and fixed sinusoidal tables excluded."""
    return int(sum(p.size for p in model.parameters()))


def count_parameters_closed_form(config, n_src, n_tgt):
    """Closed-form parameter count for ``config`` with the given vocabulary sizes."""
    d, f, L, n = config.d_model, config.ff_width, config.layers, config.n_encoders
    attn = 3 * d * d
    ffn = d * f + f + f * d + d
    enc_layer = attn + ffn + 2 * 2 * d
    dec_layer = attn + n * attn + ffn + 3 * 2 * d
    if config.architecture == "ensemble" and config.ensemble.comb_mode == "gated":
        dec_layer += n * d + d * n * d
    total = n * L * enc_layer + L * dec_layer
    total += n_src * d + n_tgt * d + d * n_tgt + n_tgt
    if config.feature_dim:
        total += (d + config.feature_dim) * d + d
    if config.positional == "learned":
        total += 2 * config.max_len * d
    return total
