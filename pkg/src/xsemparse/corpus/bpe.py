"""Byte-pair-encoding subword model over whitespace-marked words.

Each word is prefixed with ``▁`` and split into characters; training
repeatedly merges the most frequent adjacent symbol pair (ties go to the
lexicographically smallest pair). Decoding concatenates symbols and turns
markers back into spaces, so ``decode(encode(s)) == s`` for single-spaced text.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from ..errors import DataError, ParameterError

MARK = "▁"


@dataclass
class SubwordModel:
    merges: list
    symbols: list
    _ranks: dict = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def merge_count(self):
        return len(self.merges)

    def ranks(self):
        if self._ranks is None:
            self._ranks = {tuple(p): i for i, p in enumerate(self.merges)}
        return self._ranks

    def to_json(self):
        return {"merges": [list(p) for p in self.merges], "symbols": list(self.symbols)}

    @classmethod
    def from_json(cls, obj):
        return cls([tuple(p) for p in obj["merges"]], list(obj["symbols"]))

    def dumps(self):
        return json.dumps(self.to_json())


def _words(text):
    return text.split(" ")


def bpe_train(corpus, merges):
    if merges < 0:
        raise ParameterError(f"merge count must be >= 0, got {merges}")
    corpus = list(corpus)
    if not corpus:
        raise DataError("cannot train subwords on an empty corpus")
    freq = Counter(w for line in corpus for w in _words(line))
    vocab = {tuple(MARK + w): c for w, c in freq.items()}
    symbols = sorted({s for word in vocab for s in word})
    learned = []
    for _ in range(merges):
        pairs = Counter()
        for word, c in vocab.items():
            for a, b in zip(word, word[1:]):
                pairs[a, b] += c
        if not pairs:
            break
        best = min(pairs, key=lambda p: (-pairs[p], p))
        learned.append(best)
        merged = best[0] + best[1]
        new_vocab = {}
        for word, c in vocab.items():
            new_vocab[_merge_word(word, best, merged)] = c
        vocab = new_vocab
        symbols.append(merged)
    return SubwordModel(learned, symbols)


def _merge_word(word, pair, merged):
    out = []
    i = 0
    while i < len(word):
        if i + 1 < len(word) and word[i] == pair[0] and word[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(word[i])
            i += 1
    return tuple(out)


def _encode_word(word, model):
    cached = model._cache.get(word)
    if cached is not None:
        return cached
    ranks = model.ranks()
    syms = tuple(MARK + word)
    while len(syms) > 1:
        best = None
        for pair in zip(syms, syms[1:]):
            r = ranks.get(pair)
            if r is not None and (best is None or r < best[0]):
                best = (r, pair)
        if best is None:
            break
        syms = _merge_word(syms, best[1], best[1][0] + best[1][1])
    model._cache[word] = list(syms)
    return list(syms)


def bpe_encode(s, model):
    out = []
    for w in _words(s):
        out += _encode_word(w, model)
    return out


def bpe_decode(pieces):
    text = "".join(pieces).replace(MARK, " ")
    return text[1:] if text.startswith(" ") else text
