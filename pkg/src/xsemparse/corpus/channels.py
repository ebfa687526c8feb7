"""Simulated machine-translation engines between English and L.

A channel is a clean phrase-lexicon translator plus stochastic error
processes modelled on common MT failure classes: named entities translated
literally as common nouns, word-sense confusions, questions rendered as
statements, and dropped function words. Besides per-occurrence error rates a
channel can have consistent errors: entities it mistranslates with their own
(typically certain) probability, the way a real engine keeps getting the same
name wrong. Errors are drawn from an RNG keyed on
(channel seed, channel id, direction, utterance), so a channel is a pure
function of its input.
"""
from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import DataError, ParameterError
from ..numeric import Rng
from .grammar import MODIFIERS

CHANNEL_FORMAT_VERSION = 1

# L word -> wrong-sense L word (EN -> L direction)
SENSE_L = {"billigsta": "malalta", "fruesta": "unua", "malfruesta": "lasta", "zeigo": "vidigu"}
# EN word -> wrong-sense EN word (L -> EN direction)
SENSE_EN = {"cheapest": "lowest", "earliest": "first", "latest": "last", "show": "display"}

_PREP_KIND = {v[0]: k for k, v in MODIFIERS.items()}
_POSTP_KIND = {v[1]: k for k, v in MODIFIERS.items()}
_ENTITY_KINDS = {"from": "cities", "to": "cities", "on": "airlines"}


@dataclass
class NoiseChannel:
    channel_id: int
    order: str = "sov"
    entity_mistranslation: float = 0.0
    sense_ambiguity: float = 0.0
    question_to_statement: float = 0.0
    function_word_drop: float = 0.0
    synonyms: dict = field(default_factory=dict)  # L word -> [alternative, probability]
    seed: int = 0
    consistent_errors: dict = field(default_factory=dict)  # EN entity -> mistranslation probability

    def __post_init__(self):
        if self.order not in ("sov", "svo"):
            raise ParameterError(f"channel word order must be 'sov' or 'svo', got {self.order!r}")
        for name in ("entity_mistranslation", "sense_ambiguity", "question_to_statement", "function_word_drop"):
            r = getattr(self, name)
            if not 0.0 <= r <= 1.0:
                raise ParameterError(f"{name}={r} outside [0, 1]")
        for word, (alt, p) in self.synonyms.items():
            if not 0.0 <= p <= 1.0:
                raise ParameterError(f"synonym probability for {word!r} outside [0, 1]")
        for word, p in self.consistent_errors.items():
            if not 0.0 <= p <= 1.0:
                raise ParameterError(f"consistent error probability for {word!r} outside [0, 1]")

    def entity_error_rate(self, entity_en):
        return self.consistent_errors.get(entity_en, self.entity_mistranslation)

    def rng(self, direction, tokens):
        return Rng(self.seed).child(f"{self.channel_id}|{direction}|{' '.join(tokens)}")


def default_channels(seed=0):
    """Three engines of decreasing fidelity; the second puts the clause first, as English does.

    Each engine always mistranslates one city and one airline, a different
    pair per engine.
    """
    return [
        NoiseChannel(1, "sov", 0.10, 0.10, 0.25, 0.05,
                     {"flugi": ["flugoj", 0.2]}, seed, {"phoenix": 1.0, "spirit": 1.0}),
        NoiseChannel(2, "svo", 0.20, 0.15, 0.35, 0.10,
                     {"zeigo": ["montru", 0.7], "flugi": ["flugoj", 0.5], "kiom": ["kiomo", 0.5]}, seed,
                     {"seattle": 1.0, "delta": 1.0}),
        NoiseChannel(3, "sov", 0.25, 0.20, 0.30, 0.08,
                     {"kara": ["de", 0.8], "made": ["al", 0.8], "zeigo": ["listigu", 0.6]}, seed,
                     {"chicago": 1.0, "frontier": 1.0}),
    ]


def clean_channel(order="sov"):
    return NoiseChannel(0, order)


# config files


def save_channels(channels, path):
    cp = configparser.ConfigParser()
    cp["meta"] = {"format_version": str(CHANNEL_FORMAT_VERSION)}
    for ch in channels:
        cp[f"channel.{ch.channel_id}"] = {
            "order": ch.order,
            "entity_mistranslation": repr(ch.entity_mistranslation),
            "sense_ambiguity": repr(ch.sense_ambiguity),
            "question_to_statement": repr(ch.question_to_statement),
            "function_word_drop": repr(ch.function_word_drop),
            "synonyms": json.dumps(ch.synonyms),
            "seed": str(ch.seed),
            "consistent_errors": json.dumps(ch.consistent_errors),
        }
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)


def load_channels(path):
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise DataError(f"cannot read channel config {path}")
    if cp.get("meta", "format_version", fallback=None) != str(CHANNEL_FORMAT_VERSION):
        raise DataError(f"{path}: unsupported channel config format version")
    out = []
    for name in cp.sections():
        if not name.startswith("channel."):
            continue
        s = cp[name]
        out.append(NoiseChannel(
            channel_id=int(name.split(".", 1)[1]),
            order=s.get("order", "sov"),
            entity_mistranslation=s.getfloat("entity_mistranslation", 0.0),
            sense_ambiguity=s.getfloat("sense_ambiguity", 0.0),
            question_to_statement=s.getfloat("question_to_statement", 0.0),
            function_word_drop=s.getfloat("function_word_drop", 0.0),
            synonyms=json.loads(s.get("synonyms", "{}")),
            seed=s.getint("seed", 0),
            consistent_errors=json.loads(s.get("consistent_errors", "{}")),
        ))
    return sorted(out, key=lambda c: c.channel_id)


# English -> L


def _chunk_en(tokens, grammar):
    """Split into (family, mods, ok). mods are (kind, arg tokens) or ("raw", [tok])."""
    family = None
    rest = list(tokens)
    for fam in sorted(grammar.families, key=lambda f: -len(f.en_frame)):
        if rest[:len(fam.en_frame)] == fam.en_frame:
            family, rest = fam, rest[len(fam.en_frame):]
            break
    mods = []
    i = 0
    while i < len(rest):
        kind = _PREP_KIND.get(rest[i])
        if kind is not None and i + 1 < len(rest):
            arg = [rest[i + 1]]
            i += 2
            if kind == "under" and i < len(rest) and rest[i] == "dollars":
                arg.append("dollars")
                i += 1
            mods.append((kind, arg))
        else:
            mods.append(("raw", [rest[i]]))
            i += 1
    return family, mods


def _entity_l(tok, kind, channel, rng, grammar):
    table = getattr(grammar, _ENTITY_KINDS[kind]) if kind in _ENTITY_KINDS else None
    if table is None or tok not in table:
        return grammar.function_words.get(tok, tok)
    gold, literal, _ = table[tok]
    return literal if rng.random() < channel.entity_error_rate(tok) else gold


def _synonym(word, channel, rng):
    entry = channel.synonyms.get(word)
    if entry is None:
        return word
    alt, p = entry
    return alt if rng.random() < p else word


def apply_mt_channel(utterance_en, channel, grammar):
    """Translate English tokens into L through ``channel``; unknown tokens are copied."""
    rng = channel.rng("en-l", utterance_en)
    family, mods = _chunk_en(utterance_en, grammar)
    frame = []
    if family is not None:
        frame = list(family.l_frame)
        if family.l_statement is not None and rng.random() < channel.question_to_statement:
            frame = list(family.l_statement)
        frame = [SENSE_L[w] if w in SENSE_L and rng.random() < channel.sense_ambiguity else w for w in frame]
        frame = [_synonym(w, channel, rng) for w in frame]
    chunks = []
    for kind, arg in mods:
        if kind == "raw":
            chunks.append(([grammar.function_words.get(arg[0], arg[0])], None))
            continue
        arg_l = [_entity_l(t, kind, channel, rng, grammar) for t in arg]
        postp = _synonym(MODIFIERS[kind][1], channel, rng)
        if rng.random() < channel.function_word_drop:
            postp = None
        chunks.append((arg_l, postp))
    mods = []
    for arg_l, postp in chunks:
        mods += arg_l + ([postp] if postp else [])
    # "svo" engines put the clause first, in English order, but keep postpositions
    return mods + frame if channel.order == "sov" else frame[::-1] + mods


def gold_translate(utterance_en, grammar):
    """The reference L rendering: the clean channel in canonical L word order."""
    return apply_mt_channel(utterance_en, clean_channel("sov"), grammar)


# L -> English


def _inverse_synonyms(channel):
    inv = {}
    for ch in default_channels():
        for word, (alt, _) in ch.synonyms.items():
            inv.setdefault(alt, word)
    for word, (alt, _) in channel.synonyms.items():
        inv[alt] = word
    return inv


def _l_frames(grammar):
    frames = []
    for fam in grammar.families:
        frames.append((fam.l_frame, fam, False))
        if fam.l_statement is not None:
            frames.append((fam.l_statement, fam, True))
    return sorted(frames, key=lambda f: -len(f[0]))


def back_translate(utterance_l, channel, grammar):
    """Translate L tokens back into English through ``channel`` (errors applied L -> EN)."""
    rng = channel.rng("l-en", utterance_l)
    inv_syn = _inverse_synonyms(channel)
    toks = [inv_syn.get(t, t) for t in utterance_l]

    family, statement = None, False
    for frame, fam, is_stmt in _l_frames(grammar):
        n = len(frame)
        if toks[-n:] == frame:
            family, statement, toks = fam, is_stmt, toks[:-n]
            break
        if toks[:n] == frame[::-1]:
            family, statement, toks = fam, is_stmt, toks[n:]
            break

    en_frame = []
    if family is not None:
        en_frame = list(family.en_frame)
        if family.en_statement is not None and (statement or rng.random() < channel.question_to_statement):
            en_frame = list(family.en_statement)
        en_frame = [SENSE_EN[w] if w in SENSE_EN and rng.random() < channel.sense_ambiguity else w
                    for w in en_frame]

    l_entities = {}
    for kind in ("cities", "airlines"):
        for en, (gold, literal, en_literal) in getattr(grammar, kind).items():
            l_entities[gold] = (en, en_literal)
            l_entities[literal] = (en_literal, en_literal)
    l_words = {v: k for k, v in grammar.function_words.items()}

    def arg_en(tok):
        if tok in l_entities:
            en, en_literal = l_entities[tok]
            return en_literal if rng.random() < channel.entity_error_rate(en) else en
        return l_words.get(tok, tok)

    # modifiers: ARG... POSTP in verb-final order, POSTP ARG... otherwise
    mods = []
    pending = []
    svo = bool(toks) and toks[0] in _POSTP_KIND
    i = 0
    while i < len(toks):
        t = toks[i]
        kind = _POSTP_KIND.get(t)
        if kind is None:
            pending.append(t)
            i += 1
            continue
        if svo:
            if pending:
                mods.append((None, pending))
            pending = []
            j = i + 1
            while j < len(toks) and toks[j] not in _POSTP_KIND:
                j += 1
            mods.append((kind, toks[i + 1:j]))
            i = j
        else:
            mods.append((kind, pending))
            pending = []
            i += 1
    if pending:
        mods.append((None, pending))

    out = list(en_frame)
    for kind, arg in mods:
        arg = [arg_en(t) for t in arg]
        if kind is not None and rng.random() >= channel.function_word_drop:
            out.append(MODIFIERS[kind][0])
        out += arg
    return out
