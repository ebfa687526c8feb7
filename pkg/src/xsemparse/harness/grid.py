"""Exhaustive grid search ranked by dev denotation accuracy, then dev loss."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

from ..errors import ConfigurationError, ParameterError
from .experiment import build_model, build_view, evaluate, parse_system
from .train import train

ENSEMBLE_AXES = ("n_encoders", "comb_mode", "p_shuffle")


@dataclass
class GridRow:
    rank: int
    params: dict
    dev_accuracy: float
    dev_loss: float
    best_epoch: int


def apply_axes(config, params):
    """Copy of ``config`` with grid ``params`` set (ensemble axes go into the ensemble config)."""
    ens_kw = {k: v for k, v in params.items() if k in ENSEMBLE_AXES}
    kw = {k: v for k, v in params.items() if k not in ENSEMBLE_AXES}
    for k in kw:
        if not hasattr(config, k) or k == "ensemble":
            raise ConfigurationError(f"unknown grid axis {k!r}")
    if ens_kw:
        kw["ensemble"] = replace(config.ensemble, **ens_kw)
    return replace(config, **kw)


def expand_grid(grid):
    if not grid:
        raise ParameterError("grid has no axes")
    for axis, values in grid.items():
        if not values:
            raise ParameterError(f"grid axis {axis!r} has no values")
    axes = sorted(grid)
    return [dict(zip(axes, combo)) for combo in itertools.product(*(grid[a] for a in axes))]


def evaluate_cell(params, base, data, system=None):
    """Train one grid cell and return (dev denotation accuracy, best dev loss, best epoch, model)."""
    cfg = apply_axes(base, params)
    spec = parse_system(system or cfg.system)
    view = build_view(spec, data, partial_seed=cfg.seed)
    model = build_model(spec, view, cfg, data.grammar)
    res = train(model, view.train, view.dev, cfg)
    acc = evaluate(model, view.dev, data.kb, cfg)["denotation_accuracy"]
    return acc, res.best_dev_loss, res.best_epoch, model


def grid_search(grid, base, data, system=None, log=None):
    """Train every combination; rows sorted by (-dev accuracy, dev loss)."""
    cells = expand_grid(grid)
    rows = []
    for params in cells:
        acc, loss, epoch, _ = evaluate_cell(params, base, data, system)
        if log:
            log(f"{params} dev_acc={acc:.3f} dev_loss={loss:.4f}")
        rows.append(GridRow(0, params, acc, loss, epoch))
    rows.sort(key=lambda r: (-r.dev_accuracy, r.dev_loss))
    for i, r in enumerate(rows, 1):
        r.rank = i
    return rows


def format_grid(rows):
    if not rows:
        return ""
    axes = list(rows[0].params)
    head = ["rank"] + axes + ["dev_acc", "dev_loss", "epoch"]
    lines = ["\t".join(head)]
    for r in rows:
        lines.append("\t".join([str(r.rank)] + [str(r.params[a]) for a in axes]
                               + [f"{r.dev_accuracy:.4f}", f"{r.dev_loss:.4f}", str(r.best_epoch)]))
    return "\n".join(lines)
