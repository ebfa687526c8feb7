"""Toy flight-query grammar with an English side and a constructed language L.

An utterance is a *frame* (the question or command, e.g. "how many flights")
followed by *modifiers* ("from denver", "before 1200"). L places modifiers
first as argument + postposition and puts the frame last (verb-final, with a
sentence-final question particle). Every instantiation yields one logical form
shared by both languages.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .. import kbexec
from ..errors import CapacityError, DataError, ParameterError
from ..numeric import Rng

CORPUS_FORMAT_VERSION = 1
GRAMMAR_FORMAT_VERSION = 1


@dataclass
class Family:
    """One question template family.

    ``l_statement``/``en_statement`` are the declarative renderings that a
    question-to-statement translation error produces (None for commands).
    """

    name: str
    en_frame: list
    l_frame: list
    lf_head: list
    lf_tail: list
    l_statement: list = None
    en_statement: list = None
    allow_airline_mod: bool = True


# modifier kind -> (EN preposition, L postposition, LF field, LF comparator)
MODIFIERS = {
    "from": ("from", "kara", "from", "="),
    "to": ("to", "made", "to", "="),
    "on": ("on", "kun", "airline", "="),
    "before": ("before", "antau", "time", "<"),
    "after": ("after", "post", "time", ">"),
    "under": ("under", "sub", "price", "<"),
}
MOD_ORDER = ("from", "to", "on", "before", "after", "under")
FIELD_ORDER = ("from", "to", "airline", "time", "price")


def _default_families():
    R = ["(", "relation", "flight", ")"]
    return [
        Family("list", ["show", "me", "flights"], ["flugi", "mi", "zeigo"],
               ["(", "project", "(", "filter", *R], [")", "id", ")"]),
        Family("possess", ["do", "you", "have", "flights"], ["flugi", "havi", "ne", "havi", "ka"],
               ["(", "project", "(", "filter", *R], [")", "id", ")"],
               l_statement=["vi", "havas", "flugi"], en_statement=["you", "have", "flights"]),
        Family("count", ["how", "many", "flights"], ["flugi", "kiom", "multaj", "ka"],
               ["(", "count", "(", "filter", *R], [")", ")"],
               l_statement=["flugi", "ekzistas"], en_statement=["there", "are", "flights"]),
        Family("airline", ["which", "airlines", "fly"], ["flugas", "linioj", "kiu", "ka"],
               ["(", "project", "(", "filter", *R], [")", "airline", ")"],
               l_statement=["linioj", "flugas"], en_statement=["airlines", "fly"],
               allow_airline_mod=False),
        Family("cheapest", ["show", "me", "the", "cheapest", "flight"], ["billigsta", "flugo", "mi", "zeigo"],
               ["(", "project", "(", "argmin", "(", "filter", *R], [")", "price", ")", "id", ")"]),
        Family("earliest", ["show", "me", "the", "earliest", "flight"], ["fruesta", "flugo", "mi", "zeigo"],
               ["(", "project", "(", "argmin", "(", "filter", *R], [")", "time", ")", "id", ")"]),
        Family("latest", ["show", "me", "the", "latest", "flight"], ["malfruesta", "flugo", "mi", "zeigo"],
               ["(", "project", "(", "argmax", "(", "filter", *R], [")", "time", ")", "id", ")"]),
    ]


def _default_entities():
    # EN form -> (gold L form, literal mistranslation in L, literal back into EN)
    cities = {
        "denver": ("denver", "denvo", "denvor"),
        "boston": ("boston", "bostono", "bostonian"),
        "dallas": ("dallas", "dalaso", "dalas"),
        "atlanta": ("atlanta", "atlanto", "atlantic"),
        "phoenix": ("feniks", "fenikso", "firebird"),
        "seattle": ("seatlo", "seatla", "seatle"),
        "chicago": ("cikago", "cikaga", "chicagoan"),
        "miami": ("miami", "miamo", "miamian"),
    }
    airlines = {
        "delta": ("delta", "estuaro", "estuary"),
        "united": ("united", "unuigita", "unified"),
        "american": ("american", "amerika", "america"),
        "frontier": ("frontier", "limo", "border"),
        "spirit": ("spirit", "spirito", "ghost"),
        "alaska": ("alaska", "alasko", "alaskan"),
    }
    return cities, airlines


@dataclass
class GrammarSpec:
    families: list = field(default_factory=_default_families)
    cities: dict = field(default_factory=lambda: _default_entities()[0])
    airlines: dict = field(default_factory=lambda: _default_entities()[1])
    times: list = field(default_factory=lambda: [600 + 100 * i for i in range(17)])
    prices: list = field(default_factory=lambda: [200, 300, 400, 500, 600, 700, 800])
    max_mods: int = 3
    n_flights: int = 120
    kb_seed: int = 7

    # EN word -> L word for non-entity vocabulary outside frames
    @property
    def function_words(self):
        return {"dollars": "dolaroj"}

    def family(self, name):
        for f in self.families:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_json(self):
        return {
            "format_version": GRAMMAR_FORMAT_VERSION,
            "families": [asdict(f) for f in self.families],
            "cities": {k: list(v) for k, v in self.cities.items()},
            "airlines": {k: list(v) for k, v in self.airlines.items()},
            "times": list(self.times),
            "prices": list(self.prices),
            "max_mods": self.max_mods,
            "n_flights": self.n_flights,
            "kb_seed": self.kb_seed,
        }

    @classmethod
    def from_json(cls, obj):
        if obj.get("format_version") != GRAMMAR_FORMAT_VERSION:
            raise DataError(f"unsupported grammar format version {obj.get('format_version')!r}")
        return cls(
            families=[Family(**f) for f in obj["families"]],
            cities={k: tuple(v) for k, v in obj["cities"].items()},
            airlines={k: tuple(v) for k, v in obj["airlines"].items()},
            times=list(obj["times"]),
            prices=list(obj["prices"]),
            max_mods=int(obj["max_mods"]),
            n_flights=int(obj["n_flights"]),
            kb_seed=int(obj["kb_seed"]),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def lf_vocabulary(self):
        """Every token a logical form from this grammar can contain."""
        toks = {"(", ")", "relation", "flight", "filter", "project", "count", "argmax", "argmin", "and",
                "=", "<", ">", "id", *FIELD_ORDER}
        toks |= set(self.cities) | set(self.airlines)
        toks |= {str(t) for t in self.times} | {str(p) for p in self.prices}
        return sorted(toks)


def build_kb(grammar):
    rng = Rng(grammar.kb_seed).child("kb")
    cities = sorted(grammar.cities)
    airlines = sorted(grammar.airlines)
    rows = []
    for i in range(grammar.n_flights):
        a = cities[rng.choice(len(cities))]
        b = a
        while b == a:
            b = cities[rng.choice(len(cities))]
        rows.append((
            100 + i, a, b,
            airlines[rng.choice(len(airlines))],
            500 + 100 * rng.choice(19),
            150 + 50 * rng.choice(15),
        ))
    schema = [("id", "integer"), ("from", "string"), ("to", "string"),
              ("airline", "string"), ("time", "integer"), ("price", "integer")]
    return kbexec.KnowledgeBase([kbexec.Table("flight", schema, rows)])


@dataclass
class Example:
    id: str
    family: str
    utterance_en: list
    utterance_gold_l: list
    utterances_mt: list
    logical_form: list
    denotation: kbexec.Denotation
    split: str = ""

    def to_json(self):
        return {
            "format_version": CORPUS_FORMAT_VERSION,
            "id": self.id,
            "family": self.family,
            "utterance_en": self.utterance_en,
            "utterance_gold_l": self.utterance_gold_l,
            "utterances_mt": self.utterances_mt,
            "logical_form": self.logical_form,
            "denotation": self.denotation.to_json(),
            "split": self.split,
        }

    @classmethod
    def from_json(cls, obj):
        if obj.get("format_version") != CORPUS_FORMAT_VERSION:
            raise DataError(f"unsupported corpus format version {obj.get('format_version')!r}")
        return cls(
            id=obj["id"], family=obj["family"],
            utterance_en=list(obj["utterance_en"]), utterance_gold_l=list(obj["utterance_gold_l"]),
            utterances_mt=[list(u) for u in obj["utterances_mt"]],
            logical_form=list(obj["logical_form"]),
            denotation=kbexec.Denotation.from_json(obj["denotation"]),
            split=obj.get("split", ""),
        )


def save_jsonl(examples, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), ensure_ascii=False) + "\n")


def load_jsonl(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(Example.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as e:
                raise DataError(f"{path}:{lineno}: malformed example ({e})") from None
    return out


# instantiation


@dataclass(frozen=True)
class Instantiation:
    family: str
    mods: tuple  # ((kind, value), ...) in MOD_ORDER

    def key(self):
        return (self.family, self.mods)


def en_tokens(inst, grammar):
    fam = grammar.family(inst.family)
    out = list(fam.en_frame)
    for kind, value in inst.mods:
        out.append(MODIFIERS[kind][0])
        out.append(str(value))
        if kind == "under":
            out.append("dollars")
    return out


def logical_form(inst, grammar):
    fam = grammar.family(inst.family)
    preds = []
    for kind, value in inst.mods:
        _, _, fld, op = MODIFIERS[kind]
        preds.append((FIELD_ORDER.index(fld), ["(", op, fld, str(value), ")"]))
    preds.sort(key=lambda p: p[0])
    if len(preds) == 1:
        pred = preds[0][1]
    else:
        pred = ["(", "and"] + [t for _, p in preds for t in p] + [")"]
    return list(fam.lf_head) + pred + list(fam.lf_tail)


def _mod_values(kind, grammar):
    if kind in ("from", "to"):
        return sorted(grammar.cities)
    if kind == "on":
        return sorted(grammar.airlines)
    if kind in ("before", "after"):
        return list(grammar.times)
    return list(grammar.prices)


def enumerate_instantiations(grammar):
    """Every well-formed instantiation, in a fixed order."""
    out = []
    for fam in grammar.families:
        kinds = [k for k in MOD_ORDER if fam.allow_airline_mod or k != "on"]
        for r in range(1, grammar.max_mods + 1):
            for combo in itertools.combinations(kinds, r):
                if "from" not in combo and "to" not in combo:
                    continue
                if "before" in combo and "after" in combo:
                    continue
                for values in itertools.product(*(_mod_values(k, grammar) for k in combo)):
                    if "from" in combo and "to" in combo and values[0] == values[1]:
                        continue
                    out.append(Instantiation(fam.name, tuple(zip(combo, values))))
    return out


def generate_instantiations(grammar, n, seed, kb=None):
    """``n`` distinct instantiations whose underlying filter selects at least one row."""
    if n < 1:
        raise ParameterError(f"corpus size must be >= 1, got {n}")
    kb = kb or build_kb(grammar)
    pool = enumerate_instantiations(grammar)
    rng = Rng(seed).child("instantiations")
    order = rng.permutation(len(pool))
    chosen = []
    for i in order:
        inst = pool[i]
        lf = logical_form(inst, grammar)
        # non-empty filter keeps denotations discriminative
        filt = kbexec.parse_lf(_filter_part(lf))
        if not kbexec.execute(filt, kb).rows:
            continue
        chosen.append(inst)
        if len(chosen) == n:
            return chosen
    raise CapacityError(f"grammar yields only {len(chosen)} usable instantiations, {n} requested")


def _filter_part(lf):
    start = lf.index("filter") - 1
    depth = 0
    for j in range(start, len(lf)):
        depth += lf[j] == "("
        depth -= lf[j] == ")"
        if depth == 0:
            return lf[start:j + 1]
    raise DataError("unbalanced logical form")


def generate_corpus(grammar, n, seed, channels=(), kb=None):
    """``n`` parallel examples; ``channels`` supply the machine-translated versions."""
    from .channels import apply_mt_channel, gold_translate

    kb = kb or build_kb(grammar)
    examples = []
    for i, inst in enumerate(generate_instantiations(grammar, n, seed, kb)):
        en = en_tokens(inst, grammar)
        lf = logical_form(inst, grammar)
        examples.append(Example(
            id=f"ex{i:05d}",
            family=inst.family,
            utterance_en=en,
            utterance_gold_l=gold_translate(en, grammar),
            utterances_mt=[apply_mt_channel(en, ch, grammar) for ch in channels],
            logical_form=lf,
            denotation=kbexec.execute(lf, kb),
        ))
    return examples
