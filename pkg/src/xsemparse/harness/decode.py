"""Beam search and greedy decoding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import numeric as nm
from ..errors import ParameterError
from ..parser import pad_batch, route_sources


@dataclass
class BeamHypothesis:
    ids: tuple  # bos-prefixed
    logp: float
    finished: bool = False

    def score(self, length_norm=True):
        n = len(self.ids) - 1
        return self.logp / n if length_norm and n > 0 else self.logp


def _log_softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def beam_search_core(step_logprobs, bos, eos, beam, max_len, length_norm=True, trace=None):
    """Generic beam search.

    ``step_logprobs(prefixes)`` maps an int array (L, t) of bos-prefixed prefixes
    to next-token log-probabilities (L, V). Each live hypothesis is expanded by
    its ``beam`` best tokens; the global best ``beam`` candidates survive, and
    those ending in eos (or reaching ``max_len`` generated tokens) are retired.
    Ranking uses the length-normalized score; ties go to the smaller id sequence.
    """
    if beam < 1:
        raise ParameterError(f"beam must be >= 1, got {beam}")
    if max_len < 1:
        raise ParameterError(f"max_len must be >= 1, got {max_len}")

    def key(h):
        return (-h.score(length_norm), h.ids)

    live = [BeamHypothesis((bos,), 0.0)]
    finished = []
    for step in range(1, max_len + 1):
        if not live:
            break
        lp = step_logprobs(np.array([h.ids for h in live], dtype=np.int64))
        cands = []
        for h, row in zip(live, lp):
            k = min(beam, row.shape[0])
            top = np.argsort(-row, kind="stable")[:k]
            for tok in top:
                ids = h.ids + (int(tok),)
                done = int(tok) == eos or step == max_len
                cands.append(BeamHypothesis(ids, h.logp + float(row[tok]), done))
        cands.sort(key=key)
        kept = cands[:beam]
        if trace is not None:
            trace.append([(h.ids, h.score(length_norm), h.finished) for h in kept])
        finished += [h for h in kept if h.finished]
        live = [h for h in kept if not h.finished]
    pool = finished or live
    return min(pool, key=key)


def model_step_fn(model, sources):
    """Build a prefix -> log-prob function for one input (replicated across encoders)."""
    srcs = [np.array([model.source_ids(s)], dtype=np.int64) for s in sources]
    with nm.no_grad():
        encs, masks = model.encode(srcs)

    def step(prefixes):
        n = prefixes.shape[0]
        with nm.no_grad():
            e = [nm.Tensor(np.repeat(x.data, n, axis=0)) for x in encs]
            m = [np.repeat(x, n, axis=0) for x in masks]
            logits = model.decode(e, m, prefixes).data[:, -1, :]
        return _log_softmax(logits)

    return step


def _route(model, item):
    return route_sources(item, model, training=False)


def beam_search(model, item, beam=5, max_len=64, length_norm=True, trace=None):
    """Decode a ``TrainItem`` to LF tokens.

    Sources are routed as at inference time: a single utterance is replicated
    across all encoders, paraphrases go one per encoder.
    """
    step = model_step_fn(model, _route(model, item))
    best = beam_search_core(step, model.tgt_vocab.bos_id, model.tgt_vocab.eos_id, beam, max_len,
                            length_norm, trace)
    return model.tgt_vocab.decode(best.ids[1:])


def greedy_decode(model, items, max_len=64):
    """Batched argmax decoding; returns one LF token list per item."""
    if max_len < 1:
        raise ParameterError(f"max_len must be >= 1, got {max_len}")
    if not items:
        return []
    routed = [_route(model, it) for it in items]
    pad = model.src_vocab.pad_id
    srcs = [pad_batch([model.source_ids(r[n]) for r in routed], pad) for n in range(model.config.n_encoders)]
    bos, eos = model.tgt_vocab.bos_id, model.tgt_vocab.eos_id
    with nm.no_grad():
        encs, masks = model.encode(srcs)
        ys = np.full((len(items), 1), bos, dtype=np.int64)
        done = np.zeros(len(items), dtype=bool)
        for _ in range(max_len):
            logits = model.decode(encs, masks, ys).data[:, -1, :]
            nxt = logits.argmax(axis=-1)
            nxt[done] = eos
            ys = np.concatenate([ys, nxt[:, None]], axis=1)
            done |= nxt == eos
            if done.all():
                break
    return [model.tgt_vocab.decode(row[1:]) for row in ys]
