"""Command line: gen-data, train, eval, predict, grid, report.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import asdict, replace

from .. import kbexec
from ..corpus import GrammarSpec, default_channels, load_channels, load_jsonl, save_channels, save_jsonl
from ..errors import CheckpointError, ConfigurationError, DataError, ParameterError, XSemParseError
from ..parser import TrainItem
from . import config as cfgio
from .checkpoint import load_checkpoint, save_checkpoint
from .experiment import (build_model, build_view, data_from_examples, decode_items, evaluate, parse_system,
                         prepare_data, run_experiment)
from .grid import format_grid, grid_search
from .train import TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


# data directory layout


def write_data_dir(data, out):
    _ensure_dir(out)
    examples = data.splits["train"] + data.splits["dev"] + data.splits["test"]
    save_jsonl(examples, os.path.join(out, "corpus.jsonl"))
    data.kb.save(os.path.join(out, "kb.json"))
    data.grammar.save(os.path.join(out, "grammar.json"))
    save_channels(data.channels, os.path.join(out, "channels.ini"))


def read_data_dir(path):
    files = {k: os.path.join(path, f) for k, f in
             (("corpus", "corpus.jsonl"), ("kb", "kb.json"), ("grammar", "grammar.json"), ("channels", "channels.ini"))}
    for f in files.values():
        if not os.path.exists(f):
            raise DataError(f"data directory {path} lacks {os.path.basename(f)}")
    return data_from_examples(load_jsonl(files["corpus"]), GrammarSpec.load(files["grammar"]),
                              kbexec.KnowledgeBase.load(files["kb"]), load_channels(files["channels"]))


# commands


def cmd_gen_data(args):
    grammar = GrammarSpec.load(args.grammar) if args.grammar else GrammarSpec()
    channels = load_channels(args.channels) if args.channels else default_channels(args.channel_seed)
    data = prepare_data(args.n_train, args.seed, args.channel_seed, grammar, channels)
    write_data_dir(data, args.out)
    cp = configparser.ConfigParser(interpolation=None)
    cp["gen-data"] = {"n_train": str(args.n_train), "seed": str(args.seed), "channel_seed": str(args.channel_seed),
                      "grammar": args.grammar or "", "channels": args.channels or ""}
    with open(os.path.join(args.out, "resolved_config.ini"), "w", encoding="utf-8") as fh:
        cp.write(fh)
    sizes = {k: len(v) for k, v in data.splits.items()}
    print(json.dumps({"out": args.out, "splits": sizes}))


def _train_config(args):
    cfg = cfgio.load_train_config(args.config) if args.config else TrainConfig()
    over = {}
    if args.system:
        over["system"] = args.system
    if args.seed is not None:
        over["seed"] = args.seed
    return replace(cfg, **over) if over else cfg


def cmd_train(args):
    cfg = _train_config(args)
    spec = parse_system(cfg.system)
    data = read_data_dir(args.data)
    _ensure_dir(args.out)
    cfgio.save_resolved(cfg, os.path.join(args.out, "resolved_config.ini"))
    view = build_view(spec, data, args.gold_fraction, cfg.seed)
    model = build_model(spec, view, cfg, data.grammar)
    metrics = open(os.path.join(args.out, "metrics.jsonl"), "w", encoding="utf-8")
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    with metrics:
        res = train(model, view.train, view.dev, cfg, log=log)
        for row in res.curves:
            metrics.write(json.dumps(row) + "\n")
        summary = {"best_epoch": res.best_epoch, "best_dev_loss": res.best_dev_loss, "steps": res.steps,
                   "wall_time": res.wall_time}
        metrics.write(json.dumps({"summary": summary}) + "\n")
    save_checkpoint(model, os.path.join(args.out, "model.npz"),
                    extra={"system": cfg.system, "train_config": asdict(cfg)})
    print(json.dumps(summary))


def _load(args):
    model, extra = load_checkpoint(args.checkpoint)
    cfg = TrainConfig(**extra["train_config"]) if "train_config" in extra else TrainConfig()
    if getattr(args, "beam", None):
        cfg = replace(cfg, beam=args.beam)
    return model, extra, cfg


def cmd_eval(args):
    model, extra, cfg = _load(args)
    data = read_data_dir(args.data)
    spec = parse_system(extra.get("system", "seq2seq"))
    view = build_view(spec, data)
    items = {"dev": view.dev, "test": view.test}[args.split]
    if not items:
        raise DataError(f"split {args.split} is empty")
    result = evaluate(model, items, data.kb, cfg)
    result.update(system=spec.name, split=args.split)
    print(json.dumps(result))


def cmd_predict(args):
    model, _, cfg = _load(args)
    kb = kbexec.KnowledgeBase.load(args.kb)
    utterances = args.utterance or [line.strip() for line in sys.stdin if line.strip()]
    if not utterances:
        raise DataError("no utterances given")
    items = [TrainItem(str(i), [u.split()], []) for i, u in enumerate(utterances)]
    preds = decode_items(model, items, cfg, max_len=args.max_len)
    for u, p in zip(utterances, preds):
        den, err = kbexec.try_execute(p, kb)
        print(json.dumps({"utterance": u, "logical_form": " ".join(p),
                          "denotation": None if den is None else den.to_json(), "error": err}))


def cmd_grid(args):
    base = _train_config(args)
    grid = cfgio.load_grid(args.grid)
    data = read_data_dir(args.data)
    _ensure_dir(args.out)
    cfgio.save_resolved(base, os.path.join(args.out, "resolved_config.ini"))
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    rows = grid_search(grid, base, data, log=log)
    table = format_grid(rows)
    with open(os.path.join(args.out, "grid.tsv"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)


def cmd_report(args):
    suite = cfgio.load_suite_config(args.suite)
    data = read_data_dir(args.data) if args.data else None
    _ensure_dir(args.out)
    cfgio.save_resolved(suite, os.path.join(args.out, "resolved_config.ini"))
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    report = run_experiment(suite, data, log=log)
    table = report.format_table()
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=1)
    print(table)


def build_parser():
    p = _Parser(prog="xsemparse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-data", help="generate a corpus, KB and channel config")
    g.add_argument("--out", required=True)
    g.add_argument("--n-train", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--channel-seed", type=int, default=0)
    g.add_argument("--grammar", help="grammar JSON (default grammar if omitted)")
    g.add_argument("--channels", help="channel INI (default channels if omitted)")
    g.set_defaults(func=cmd_gen_data)

    def run_opts(sp):
        sp.add_argument("--data", required=True, help="directory written by gen-data")
        sp.add_argument("--config", help="INI run config")
        sp.add_argument("--system")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=True)
        sp.add_argument("-v", "--verbose", action="store_true")

    t = sub.add_parser("train", help="train one system; writes model.npz and metrics.jsonl")
    run_opts(t)
    t.add_argument("--gold-fraction", type=float)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="denotation accuracy of a checkpoint on a split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=("dev", "test"), default="test")
    e.add_argument("--beam", type=int)
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="parse utterances and execute them")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--kb", required=True)
    pr.add_argument("--beam", type=int)
    pr.add_argument("--max-len", type=int, default=48)
    pr.add_argument("utterance", nargs="*", help="whitespace-tokenized utterances (stdin if none)")
    pr.set_defaults(func=cmd_predict)

    gr = sub.add_parser("grid", help="grid search ranked by dev accuracy")
    run_opts(gr)
    gr.add_argument("--grid", required=True, help="INI with a [grid] section of comma-separated values")
    gr.set_defaults(func=cmd_grid)

    r = sub.add_parser("report", help="run a suite and write a system comparison table")
    r.add_argument("--suite", required=True)
    r.add_argument("--data", help="directory written by gen-data (generated from the suite if omitted)")
    r.add_argument("--out", required=True)
    r.add_argument("-v", "--verbose", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        _err(e)
        return EXIT_USAGE
    except (ConfigurationError, ParameterError) as e:
        _err(e)
        return EXIT_USAGE
    except (DataError, CheckpointError, FileNotFoundError) as e:
        _err(e)
        return EXIT_DATA
    except (XSemParseError, ArithmeticError, MemoryError, RuntimeError, ValueError, KeyError) as e:
        _err(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
