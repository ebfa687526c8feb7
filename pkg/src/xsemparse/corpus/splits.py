"""Stratified splits and partial gold/MT training mixes."""
from __future__ import annotations

import math
from collections import defaultdict

from ..errors import ParameterError
from ..numeric import Rng

DEFAULT_RATIOS = (4473 / 5418, 497 / 5418, 448 / 5418)
SPLIT_NAMES = ("train", "dev", "test")


def _apportion(n, ratios):
    """Largest-remainder rounding of ``n * ratios`` to integers summing to ``n``."""
    raw = [n * r for r in ratios]
    counts = [math.floor(x) for x in raw]
    for i in sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))[:n - sum(counts)]:
        counts[i] += 1
    return counts


def split_dataset(examples, ratios=DEFAULT_RATIOS, seed=0, key=lambda ex: ex.family):
    """Disjoint, exhaustive train/dev/test split, stratified by ``key``.

    Global split sizes are the largest-remainder rounding of ``n * ratios``.
    Each stratum gets the floor of its own share per split; the leftover
    units go to the (stratum, split) cells with the largest fractional share
    that still have room. Members of a stratum are shuffled before slicing.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterError(f"split ratios must be three non-negatives summing to 1, got {ratios}")
    examples = list(examples)
    rng = Rng(seed).child("split")
    groups = defaultdict(list)
    for i, ex in enumerate(examples):
        groups[key(ex)].append(i)
    names = sorted(groups)

    counts = {g: [math.floor(len(groups[g]) * r) for r in ratios] for g in names}
    need = [t - sum(counts[g][k] for g in names) for k, t in enumerate(_apportion(len(examples), ratios))]
    rem = {g: len(groups[g]) - sum(counts[g]) for g in names}
    cells = sorted(((len(groups[g]) * ratios[k] - counts[g][k], g, k) for g in names for k in range(3)),
                   key=lambda c: (-c[0], c[1], c[2]))
    for _, g, k in cells:
        if rem[g] > 0 and need[k] > 0:
            counts[g][k] += 1
            rem[g] -= 1
            need[k] -= 1
    for g in names:
        while rem[g] > 0:
            k = next(k for k in range(3) if need[k] > 0)
            counts[g][k] += 1
            rem[g] -= 1
            need[k] -= 1

    label = [0] * len(examples)
    for g in names:
        members = [groups[g][j] for j in rng.permutation(len(groups[g]))]
        start = 0
        for k, c in enumerate(counts[g]):
            for i in members[start:start + c]:
                label[i] = k
            start += c
    out = {name: [] for name in SPLIT_NAMES}
    for i, ex in enumerate(examples):
        out[SPLIT_NAMES[label[i]]].append(ex)
    return out


def partial_gold_mix(d_gold, d_mt, fraction, seed=0, mode="mix"):
    """Use gold-L items for ``round(fraction * |ids|)`` ids.

    ``mode="mix"`` fills the remaining ids from ``d_mt``; ``mode="gold_only"``
    omits them. Both inputs are lists of items with an ``id`` attribute.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError(f"gold fraction must lie in [0, 1], got {fraction}")
    if mode not in ("mix", "gold_only"):
        raise ParameterError(f"unknown partial-mix mode {mode!r}")
    gold = {it.id: it for it in d_gold}
    mt = {it.id: it for it in d_mt}
    if mode == "mix" and set(gold) != set(mt):
        raise ParameterError("gold and MT datasets must cover the same ids")
    ids = sorted(gold)
    k = math.floor(fraction * len(ids) + 0.5)
    perm = Rng(seed).child("partial-gold").permutation(len(ids))
    chosen = {ids[i] for i in perm[:k]}
    out = []
    for i in ids:
        if i in chosen:
            out.append(gold[i])
        elif mode == "mix":
            out.append(mt[i])
    return out
