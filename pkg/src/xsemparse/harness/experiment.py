"""System registry, data views and the multi-seed experiment runner."""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .. import kbexec
from ..corpus import (DEFAULT_RATIOS, GrammarSpec, back_translate, bpe_train, build_kb, default_channels,
                      generate_corpus, partial_gold_mix, split_dataset)
from ..corpus.splits import _apportion
from ..errors import ConfigurationError, DataError
from ..parser import EnsembleParser, TrainItem, Vocab, build_joint_dataset, count_parameters
from .decode import beam_search
from .train import TrainConfig, dev_loss, train

BASES = ("backtranslation", "seq2seq", "shared", "mt-paraphrase", "mt-ensemble", "seq2seq-gold", "shared-gold")
MODIFIERS = ("feat", "shared")


@dataclass(frozen=True)
class SystemSpec:
    """Decoded system name, e.g. ``mt-ensemble+feat+shared``."""

    name: str
    source: str  # "en", "mt1", "mt-all", "gold"
    architecture: str  # "plain" | "ensemble"
    features: bool
    shared: bool

    @property
    def back_translation(self):
        return self.source == "en"


def parse_system(name):
    parts = name.split("+")
    base, mods = parts[0], parts[1:]
    if base not in BASES:
        raise ConfigurationError(f"unknown system {name!r}; base must be one of {BASES}")
    for m in mods:
        if m not in MODIFIERS:
            raise ConfigurationError(f"unknown system modifier {m!r} in {name!r}")
    if len(set(mods)) != len(mods):
        raise ConfigurationError(f"repeated modifier in system {name!r}")
    shared = "shared" in mods or base in ("shared", "shared-gold")
    if base in ("shared", "shared-gold", "backtranslation") and "shared" in mods:
        raise ConfigurationError(f"system {name!r} cannot take the shared modifier")
    source = {"backtranslation": "en", "seq2seq": "mt1", "shared": "mt1", "mt-paraphrase": "mt-all",
              "mt-ensemble": "mt-all", "seq2seq-gold": "gold", "shared-gold": "gold"}[base]
    arch = "ensemble" if base == "mt-ensemble" else "plain"
    return SystemSpec(name, source, arch, "feat" in mods, shared)


# data


@dataclass
class ExperimentData:
    grammar: GrammarSpec
    kb: kbexec.KnowledgeBase
    channels: list
    splits: dict  # train/dev/test -> [Example]


def corpus_size_for_train(n_train, ratios=DEFAULT_RATIOS):
    """Smallest corpus size whose stratified train split has at least ``n_train`` examples."""
    n = max(1, int(n_train / ratios[0]) - 2)
    while _apportion(n, ratios)[0] < n_train:
        n += 1
    return n


def prepare_data(n_train=1000, corpus_seed=0, channel_seed=0, grammar=None, channels=None):
    grammar = grammar or GrammarSpec()
    channels = channels if channels is not None else default_channels(channel_seed)
    kb = build_kb(grammar)
    examples = generate_corpus(grammar, corpus_size_for_train(n_train), corpus_seed, channels, kb)
    splits = split_dataset(examples, DEFAULT_RATIOS, corpus_seed)
    for name, exs in splits.items():
        for ex in exs:
            ex.split = name
    return ExperimentData(grammar, kb, list(channels), splits)


def data_from_examples(examples, grammar, kb, channels):
    splits = {"train": [], "dev": [], "test": []}
    for ex in examples:
        if ex.split not in splits:
            raise DataError(f"example {ex.id} has no train/dev/test split tag")
        splits[ex.split].append(ex)
    return ExperimentData(grammar, kb, list(channels), splits)


def _items(examples, source, lang="L"):
    out = []
    for ex in examples:
        if source == "en":
            srcs = [ex.utterance_en]
        elif source == "gold":
            srcs = [ex.utterance_gold_l]
        elif source == "mt1":
            if not ex.utterances_mt:
                raise DataError(f"example {ex.id} has no machine translations")
            srcs = [ex.utterances_mt[0]]
        else:
            if not ex.utterances_mt:
                raise DataError(f"example {ex.id} has no machine translations")
            srcs = list(ex.utterances_mt)
        out.append(TrainItem(ex.id, srcs, list(ex.logical_form), "EN" if source == "en" else lang))
    return out


@dataclass
class DataView:
    train: list
    dev: list
    test: list


def build_view(spec, data, gold_fraction=None, partial_seed=0, partial_mode="gold_only"):
    """Training/dev/test items for one system.

    Dev and test are gold-L utterances, except for back-translation: it trains
    and selects on English and is tested on back-translated gold-L test
    utterances (through the first channel).
    """
    tr, dv, te = data.splits["train"], data.splits["dev"], data.splits["test"]
    if not tr:
        raise DataError("training split is empty")
    if spec.back_translation:
        ch = data.channels[0]
        test = [TrainItem(ex.id, [back_translate(ex.utterance_gold_l, ch, data.grammar)], list(ex.logical_form), "EN")
                for ex in te]
        return DataView(_items(tr, "en"), _items(dv, "en"), test)
    train_l = _items(tr, spec.source)
    if gold_fraction is not None:
        gold = _items(tr, "gold")
        train_l = partial_gold_mix(gold, train_l, gold_fraction, partial_seed, partial_mode)
    items = build_joint_dataset(_items(tr, "en"), train_l) if spec.shared else train_l
    if not items:
        raise DataError("training view is empty")
    return DataView(items, _items(dv, "gold"), _items(te, "gold"))


def build_model(spec, view, config, grammar):
    """Fresh parser with subwords and vocabularies fitted to the training view."""
    texts = [" ".join(s) for it in view.train for s in it.sources]
    subwords = bpe_train(texts, config.bpe_merges)
    src_vocab = Vocab(subwords.symbols)
    tgt_vocab = Vocab(grammar.lf_vocabulary())
    mc = config.model_config(spec.architecture, spec.features)
    return EnsembleParser(mc, src_vocab, tgt_vocab, seed=config.seed, subwords=subwords)


def decode_items(model, items, config, max_len=None):
    """Beam-decode every item; the length budget defaults to the longest gold LF plus 8."""
    if max_len is None:
        max_len = max(len(it.lf) for it in items) + 8 if items else 1
    max_len = min(max_len, model.config.max_len - 1)
    return [beam_search(model, it, config.beam, max_len, config.length_norm) for it in items]


def evaluate(model, items, kb, config):
    preds = decode_items(model, items, config)
    return kbexec.evaluate_predictions(preds, [it.lf for it in items], kb)


# reporting


@dataclass
class RunRecord:
    system: str
    seed: int
    dev_accuracy: float
    test_accuracy: float
    test_exact_match: float
    best_epoch: int
    best_dev_loss: float
    n_params: int
    train_size: int
    gold_fraction: float = None
    wall_time: float = 0.0


@dataclass
class Report:
    rows: list = field(default_factory=list)

    def systems(self):
        seen = []
        for r in self.rows:
            if r.system not in seen:
                seen.append(r.system)
        return seen

    def accuracies(self, system, gold_fraction=None):
        return [r.test_accuracy for r in self.rows
                if r.system == system and r.gold_fraction == gold_fraction]

    def summary(self):
        """{(system, gold_fraction): (mean, std, n)}; std uses ddof=1 (0 for one seed)."""
        out = {}
        for r in self.rows:
            out.setdefault((r.system, r.gold_fraction), []).append(r.test_accuracy)
        return {k: (float(np.mean(v)), float(np.std(v, ddof=1)) if len(v) > 1 else 0.0, len(v))
                for k, v in out.items()}

    def to_json(self, timing=True):
        rows = [asdict(r) for r in self.rows]
        if not timing:
            for r in rows:
                r.pop("wall_time")
        return {"rows": rows}

    @classmethod
    def from_json(cls, obj):
        return cls([RunRecord(**r) for r in obj["rows"]])

    def to_csv(self):
        buf = io.StringIO()
        names = list(RunRecord.__dataclass_fields__)
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(asdict(r))
        return buf.getvalue()

    def format_table(self):
        lines = [f"{'system':<28} {'gold':>5} {'n':>3} {'test acc':>9} {'std':>6}"]
        for (system, frac), (mean, std, n) in self.summary().items():
            g = "-" if frac is None else f"{frac:.2f}"
            lines.append(f"{system:<28} {g:>5} {n:>3} {100 * mean:>8.1f}% {100 * std:>6.1f}")
        return "\n".join(lines)


# running


def run_system(system, data, config, gold_fraction=None, partial_mode="gold_only", log=None, eval_dev=True):
    """Train and evaluate one system for ``config.seed``; returns (RunRecord, model)."""
    spec = parse_system(system)
    start = time.perf_counter()
    view = build_view(spec, data, gold_fraction, config.seed, partial_mode)
    model = build_model(spec, view, config, data.grammar)
    result = train(model, view.train, view.dev, config, log=log)
    test = evaluate(model, view.test, data.kb, config)
    dev_acc = evaluate(model, view.dev, data.kb, config)["denotation_accuracy"] if eval_dev else float("nan")
    rec = RunRecord(
        system=system, seed=config.seed, dev_accuracy=dev_acc,
        test_accuracy=test["denotation_accuracy"], test_exact_match=test["exact_match"],
        best_epoch=result.best_epoch, best_dev_loss=result.best_dev_loss,
        n_params=count_parameters(model), train_size=len(view.train),
        gold_fraction=gold_fraction, wall_time=time.perf_counter() - start,
    )
    return rec, model


@dataclass
class SuiteConfig:
    systems: list = field(default_factory=lambda: ["backtranslation", "seq2seq", "mt-ensemble+shared"])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    n_train: int = 1000
    corpus_seed: int = 0
    channel_seed: int = 0
    gold_fractions: list = field(default_factory=list)
    partial_mode: str = "gold_only"
    eval_dev: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if not self.systems:
            raise ConfigurationError("suite lists no systems")
        if not self.seeds:
            raise ConfigurationError("suite lists no seeds")
        for s in self.systems:
            parse_system(s)


def run_experiment(suite, data=None, log=None, on_record=None):
    """Every (system, [gold fraction,] seed) combination of ``suite``; returns a Report."""
    for s in suite.systems:
        parse_system(s)
    data = data or prepare_data(suite.n_train, suite.corpus_seed, suite.channel_seed)
    fractions = suite.gold_fractions or [None]
    report = Report()
    for system in suite.systems:
        for frac in fractions:
            for seed in suite.seeds:
                cfg = replace(suite.train, seed=seed, system=system)
                rec, _ = run_system(system, data, cfg, frac, suite.partial_mode, eval_dev=suite.eval_dev)
                report.rows.append(rec)
                if log:
                    g = "" if frac is None else f" gold={frac:.2f}"
                    log(f"{system}{g} seed={seed} test={rec.test_accuracy:.3f} dev={rec.dev_accuracy:.3f} "
                        f"epoch={rec.best_epoch} ({rec.wall_time:.0f}s)")
                if on_record:
                    on_record(rec)
    return report


def report_digest(report):
    """Timing-free canonical JSON of a report, for reproducibility comparisons."""
    return json.dumps(report.to_json(timing=False), sort_keys=True)


__all__ = [
    "BASES", "DataView", "ExperimentData", "Report", "RunRecord", "SuiteConfig", "SystemSpec",
    "build_model", "build_view", "corpus_size_for_train", "data_from_examples", "decode_items",
    "dev_loss", "evaluate", "parse_system", "prepare_data", "report_digest", "run_experiment", "run_system",
]
