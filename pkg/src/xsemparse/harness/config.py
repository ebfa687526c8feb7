"""INI config files for training runs, suites and grids.

A run config has a ``[train]`` section (TrainConfig fields) and an optional
``[ensemble]`` section; a suite config adds ``[suite]``; a grid spec has a
``[grid]`` section whose values are comma-separated lists.
"""
from __future__ import annotations

import configparser
import dataclasses

from ..ensemble import EnsembleConfig
from ..errors import ConfigurationError
from .experiment import SuiteConfig
from .train import TrainConfig


def _convert(value, default, name):
    try:
        if isinstance(default, bool):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            items = [v.strip() for v in value.split(",") if v.strip()]
            if default and isinstance(default[0], int):
                return [int(v) for v in items]
            if name.endswith("gold_fractions"):
                return [float(v) for v in items]
            return items
    except ValueError:
        raise ConfigurationError(f"bad value {value!r} for {name}") from None
    return value


def _fill(cls, section, name):
    obj = cls()
    kwargs = {}
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key, raw in section.items():
        if key not in known or key in ("ensemble", "train"):
            raise ConfigurationError(f"unknown key {key!r} in [{name}]")
        kwargs[key] = _convert(raw, getattr(obj, key), f"{name}.{key}")
    return kwargs


def _parser(path=None, text=None):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        if text is not None:
            cp.read_string(text)
        elif not cp.read(path, encoding="utf-8"):
            raise ConfigurationError(f"cannot read config file {path}")
    except configparser.Error as e:
        raise ConfigurationError(f"malformed config: {e}") from None
    return cp


def train_config_from_parser(cp):
    kwargs = _fill(TrainConfig, cp["train"], "train") if cp.has_section("train") else {}
    if cp.has_section("ensemble"):
        ens = _fill(EnsembleConfig, cp["ensemble"], "ensemble")
        kwargs["ensemble"] = EnsembleConfig(**{**dataclasses.asdict(TrainConfig().ensemble), **ens})
    try:
        return TrainConfig(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(str(e)) from None


def load_train_config(path=None, text=None):
    return train_config_from_parser(_parser(path, text))


def load_suite_config(path=None, text=None):
    cp = _parser(path, text)
    kwargs = _fill(SuiteConfig, cp["suite"], "suite") if cp.has_section("suite") else {}
    kwargs["train"] = train_config_from_parser(cp)
    try:
        return SuiteConfig(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(str(e)) from None


def load_grid(path=None, text=None):
    """{axis: [values]} with values typed after the matching TrainConfig / EnsembleConfig field."""
    cp = _parser(path, text)
    if not cp.has_section("grid"):
        raise ConfigurationError("grid spec has no [grid] section")
    base, ens = TrainConfig(), TrainConfig().ensemble
    grid = {}
    for key, raw in cp["grid"].items():
        target = ens if key in ("n_encoders", "comb_mode", "p_shuffle") else base
        if not hasattr(target, key) or key == "ensemble":
            raise ConfigurationError(f"unknown grid axis {key!r}")
        default = getattr(target, key)
        grid[key] = [_convert(v.strip(), default, key) for v in raw.split(",") if v.strip()]
    return grid


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return ", ".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def dump_train_config(config, cp=None):
    cp = cp or configparser.ConfigParser(interpolation=None)
    d = dataclasses.asdict(config)
    ens = d.pop("ensemble")
    cp["train"] = {k: _fmt(v) for k, v in d.items()}
    cp["ensemble"] = {k: _fmt(v) for k, v in ens.items()}
    return cp


def save_resolved(config, path):
    """Write the fully resolved (defaults filled in) config next to a run's outputs."""
    if isinstance(config, SuiteConfig):
        cp = dump_train_config(config.train)
        d = dataclasses.asdict(config)
        d.pop("train")
        cp["suite"] = {k: _fmt(v) for k, v in d.items()}
    else:
        cp = dump_train_config(config)
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)


__all__ = ["dump_train_config", "load_grid", "load_suite_config", "load_train_config", "save_resolved"]
