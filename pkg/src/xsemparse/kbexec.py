"""Logical forms over an in-memory relational knowledge base.

Logical forms are s-expressions serialized as whitespace-separated tokens::

    ( project ( filter ( relation flight ) ( and ( = from denver ) ( < time 1200 ) ) ) id )

Grammar::

    Q    := ( relation NAME ) | ( filter Q PRED ) | ( project Q FIELD )
          | ( count Q ) | ( argmax Q FIELD ) | ( argmin Q FIELD )
    PRED := ( = FIELD LIT ) | ( < FIELD LIT ) | ( > FIELD LIT ) | ( and PRED PRED ... )
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DatasetError, ExecutionError, LFParseError

KB_FORMAT_VERSION = 1
FIELD_TYPES = ("string", "integer")
COMPARATORS = ("=", "<", ">")


@dataclass(frozen=True)
class Relation:
    name: str


@dataclass(frozen=True)
class Predicate:
    field: str
    op: str
    literal: str


@dataclass(frozen=True)
class And:
    preds: tuple


@dataclass(frozen=True)
class Filter:
    child: object
    pred: object


@dataclass(frozen=True)
class Project:
    child: object
    field: str


@dataclass(frozen=True)
class Count:
    child: object


@dataclass(frozen=True)
class Argmax:
    child: object
    field: str


@dataclass(frozen=True)
class Argmin:
    child: object
    field: str


@dataclass(frozen=True)
class Denotation:
    """Either a canonically sorted tuple of row tuples, or an integer count."""

    rows: tuple = None
    count: int = None

    @classmethod
    def of_rows(cls, rows):
        return cls(rows=tuple(sorted(set(rows))))

    def to_json(self):
        if self.count is not None:
            return {"count": self.count}
        return {"rows": [list(r) for r in self.rows]}

    @classmethod
    def from_json(cls, obj):
        if "count" in obj:
            return cls(count=int(obj["count"]))
        return cls.of_rows(tuple(r) for r in obj["rows"])


class Table:
    def __init__(self, name, schema, rows):
        self.name = name
        self.schema = dict(schema)
        self.fields = list(self.schema)
        for t in self.schema.values():
            if t not in FIELD_TYPES:
                raise ExecutionError(f"relation {name}: unknown field type {t!r}")
        self.rows = []
        for r in rows:
            if len(r) != len(self.fields):
                raise ExecutionError(f"relation {name}: row {r} does not match schema")
            row = []
            for f, v in zip(self.fields, r):
                if self.schema[f] == "integer":
                    if isinstance(v, bool) or not isinstance(v, int):
                        raise ExecutionError(f"relation {name}: {f}={v!r} is not an integer")
                elif not isinstance(v, str):
                    raise ExecutionError(f"relation {name}: {f}={v!r} is not a string")
                row.append(v)
            self.rows.append(tuple(row))


class KnowledgeBase:
    def __init__(self, relations):
        self.relations = {}
        for table in relations:
            if table.name in self.relations:
                raise ExecutionError(f"duplicate relation {table.name!r}")
            self.relations[table.name] = table

    def __getitem__(self, name):
        return self.relations[name]

    def to_json(self):
        return {
            "format_version": KB_FORMAT_VERSION,
            "relations": {
                name: {"schema": [[f, t.schema[f]] for f in t.fields], "rows": [list(r) for r in t.rows]}
                for name, t in self.relations.items()
            },
        }

    @classmethod
    def from_json(cls, obj):
        if obj.get("format_version") != KB_FORMAT_VERSION:
            raise DatasetError(f"unsupported KB format version {obj.get('format_version')!r}")
        return cls(
            Table(name, [tuple(p) for p in rel["schema"]], [tuple(r) for r in rel["rows"]])
            for name, rel in obj["relations"].items()
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# parsing


_HEADS = ("relation", "filter", "project", "count", "argmax", "argmin")


def parse_lf(tokens, kb=None):
    """Parse a token list into an AST; with ``kb`` also check it against the schema."""
    if isinstance(tokens, str):
        tokens = tokens.split()
    tokens = list(tokens)
    if not tokens:
        raise LFParseError("empty logical form", 0)
    lf, pos = _parse_query(tokens, 0)
    if pos != len(tokens):
        raise LFParseError(f"trailing token {tokens[pos]!r}", pos)
    if kb is not None:
        output_schema(lf, kb)
    return lf


def _expect(tokens, pos, tok):
    if pos >= len(tokens):
        raise LFParseError(f"expected {tok!r}, reached end of input", pos)
    if tokens[pos] != tok:
        raise LFParseError(f"expected {tok!r}, found {tokens[pos]!r}", pos)
    return pos + 1


def _atom(tokens, pos, what):
    if pos >= len(tokens):
        raise LFParseError(f"expected {what}, reached end of input", pos)
    tok = tokens[pos]
    if tok in ("(", ")"):
        raise LFParseError(f"expected {what}, found {tok!r}", pos)
    return tok, pos + 1


def _parse_query(tokens, pos):
    pos = _expect(tokens, pos, "(")
    head, pos = _atom(tokens, pos, "operator")
    if head not in _HEADS:
        raise LFParseError(f"unknown operator {head!r}", pos - 1)
    if head == "relation":
        name, pos = _atom(tokens, pos, "relation name")
        node = Relation(name)
    elif head == "filter":
        child, pos = _parse_query(tokens, pos)
        pred, pos = _parse_pred(tokens, pos)
        node = Filter(child, pred)
    elif head == "count":
        child, pos = _parse_query(tokens, pos)
        node = Count(child)
    else:
        child, pos = _parse_query(tokens, pos)
        fld, pos = _atom(tokens, pos, "field name")
        node = {"project": Project, "argmax": Argmax, "argmin": Argmin}[head](child, fld)
    return node, _expect(tokens, pos, ")")


def _parse_pred(tokens, pos):
    pos = _expect(tokens, pos, "(")
    head, pos = _atom(tokens, pos, "predicate operator")
    if head == "and":
        preds = []
        while pos < len(tokens) and tokens[pos] == "(":
            p, pos = _parse_pred(tokens, pos)
            preds.append(p)
        if len(preds) < 2:
            raise LFParseError("'and' needs at least two predicates", pos)
        node = And(tuple(preds))
    elif head in COMPARATORS:
        fld, pos = _atom(tokens, pos, "field name")
        lit, pos = _atom(tokens, pos, "literal")
        node = Predicate(fld, head, lit)
    else:
        raise LFParseError(f"unknown predicate operator {head!r}", pos - 1)
    return node, _expect(tokens, pos, ")")


def to_tokens(lf):
    """Serialize an AST back to its token list (inverse of ``parse_lf``)."""
    if isinstance(lf, Relation):
        return ["(", "relation", lf.name, ")"]
    if isinstance(lf, Filter):
        return ["(", "filter", *to_tokens(lf.child), *to_tokens(lf.pred), ")"]
    if isinstance(lf, Count):
        return ["(", "count", *to_tokens(lf.child), ")"]
    if isinstance(lf, (Project, Argmax, Argmin)):
        head = {Project: "project", Argmax: "argmax", Argmin: "argmin"}[type(lf)]
        return ["(", head, *to_tokens(lf.child), lf.field, ")"]
    if isinstance(lf, Predicate):
        return ["(", lf.op, lf.field, lf.literal, ")"]
    if isinstance(lf, And):
        out = ["(", "and"]
        for p in lf.preds:
            out += to_tokens(p)
        return out + [")"]
    raise TypeError(f"not a logical form node: {lf!r}")


# execution


def _literal(value, ftype, fld):
    if ftype == "integer":
        try:
            return int(value)
        except ValueError:
            raise ExecutionError(f"literal {value!r} does not match integer field {fld!r}") from None
    return value


def output_schema(lf, kb):
    """Ordered (field, type) pairs produced by ``lf``; ``None`` for a count."""
    if isinstance(lf, Relation):
        if lf.name not in kb.relations:
            raise ExecutionError(f"unknown relation {lf.name!r}")
        t = kb[lf.name]
        return [(f, t.schema[f]) for f in t.fields]
    if isinstance(lf, Count):
        if output_schema(lf.child, kb) is None:
            raise ExecutionError("count over a count")
        return None
    child = output_schema(lf.child, kb)
    if child is None:
        raise ExecutionError(f"{type(lf).__name__} applied to a count")
    types = dict(child)
    if isinstance(lf, Filter):
        _check_pred(lf.pred, types)
        return child
    if lf.field not in types:
        raise ExecutionError(f"unknown field {lf.field!r}")
    if isinstance(lf, Project):
        return [(lf.field, types[lf.field])]
    if types[lf.field] != "integer":
        raise ExecutionError(f"{type(lf).__name__.lower()} over non-integer field {lf.field!r}")
    return child


def _check_pred(pred, types):
    if isinstance(pred, And):
        for p in pred.preds:
            _check_pred(p, types)
        return
    if pred.field not in types:
        raise ExecutionError(f"unknown field {pred.field!r}")
    if pred.op != "=" and types[pred.field] != "integer":
        raise ExecutionError(f"ordering comparison on non-integer field {pred.field!r}")
    _literal(pred.literal, types[pred.field], pred.field)


def _holds(pred, row, index, types):
    if isinstance(pred, And):
        return all(_holds(p, row, index, types) for p in pred.preds)
    v = row[index[pred.field]]
    lit = _literal(pred.literal, types[pred.field], pred.field)
    if pred.op == "=":
        return v == lit
    if pred.op == "<":
        return v < lit
    return v > lit


def _rows(lf, kb):
    """(fields, types, rows) for a non-count query."""
    if isinstance(lf, Relation):
        t = kb[lf.name]
        return t.fields, t.schema, list(t.rows)
    fields, types, rows = _rows(lf.child, kb)
    if isinstance(lf, Filter):
        index = {f: i for i, f in enumerate(fields)}
        return fields, types, [r for r in rows if _holds(lf.pred, r, index, types)]
    i = fields.index(lf.field)
    if isinstance(lf, Project):
        return [lf.field], {lf.field: types[lf.field]}, [(r[i],) for r in rows]
    if not rows:
        return fields, types, []
    if isinstance(lf, Argmax):
        best = max(r[i] for r in rows)
    else:
        best = min(r[i] for r in rows)
    # ties: lexicographically smallest full row
    return fields, types, [min(r for r in rows if r[i] == best)]


def execute(lf, kb):
    if isinstance(lf, (list, tuple, str)):
        lf = parse_lf(lf)
    output_schema(lf, kb)
    if isinstance(lf, Count):
        _, _, rows = _rows(lf.child, kb)
        return Denotation(count=len(set(rows)))
    _, _, rows = _rows(lf, kb)
    return Denotation.of_rows(rows)


def try_execute(tokens, kb):
    """Return ``(denotation, failure)`` where failure is None, "parse" or "execution"."""
    try:
        lf = parse_lf(tokens)
    except LFParseError:
        return None, "parse"
    try:
        return execute(lf, kb), None
    except ExecutionError:
        return None, "execution"


def evaluate_predictions(predictions, golds, kb):
    """Denotation accuracy plus diagnostics (exact logical-form match, failure counts)."""
    if len(predictions) != len(golds):
        raise DatasetError(f"{len(predictions)} predictions for {len(golds)} golds")
    correct = exact = parse_fail = exec_fail = 0
    for pred, gold in zip(predictions, golds):
        want, failure = try_execute(gold, kb)
        if failure:
            raise DatasetError(f"gold logical form fails to {failure}: {' '.join(gold)}")
        got, failure = try_execute(pred, kb)
        parse_fail += failure == "parse"
        exec_fail += failure == "execution"
        correct += got is not None and got == want
        exact += list(pred) == list(gold)
    n = max(len(golds), 1)
    return {
        "denotation_accuracy": correct / n if golds else 0.0,
        "exact_match": exact / n if golds else 0.0,
        "parse_errors": parse_fail,
        "execution_errors": exec_fail,
        "n": len(golds),
    }


def denotation_accuracy(predictions, golds, kb):
    return evaluate_predictions(predictions, golds, kb)["denotation_accuracy"]
