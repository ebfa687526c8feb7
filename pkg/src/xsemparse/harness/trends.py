"""Checks of the qualitative orderings an experiment report should show."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class TrendCheck:
    name: str
    passed: bool
    detail: str


def _mean_std(values):
    values = list(values)
    return float(np.mean(values)), float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def system_ordering(report, baseline="backtranslation", single="seq2seq", ensemble="mt-ensemble+shared"):
    """Baseline below the single-channel parser; ensemble no worse than the single one minus one std.

    Means are over seeds; only seeds present for all three systems count.
    """
    rows = {(r.system, r.seed): r.test_accuracy for r in report.rows if r.gold_fraction is None}
    seeds = sorted({s for (_, s) in rows if all((n, s) in rows for n in (baseline, single, ensemble))})
    if not seeds:
        return [TrendCheck("ordering", False, "no seed has all three systems")]
    base_m, _ = _mean_std(rows[baseline, s] for s in seeds)
    single_m, single_sd = _mean_std(rows[single, s] for s in seeds)
    ens_m, _ = _mean_std(rows[ensemble, s] for s in seeds)
    return [
        TrendCheck(f"{baseline} < {single}", base_m < single_m,
                   f"{100 * base_m:.1f} vs {100 * single_m:.1f} over {len(seeds)} seeds"),
        TrendCheck(f"{ensemble} >= {single} - 1 std", ens_m >= single_m - single_sd,
                   f"{100 * ens_m:.1f} vs {100 * single_m:.1f} - {100 * single_sd:.1f}"),
    ]


def fraction_curve(report, system):
    """[(fraction, mean, std, n)] sorted by fraction."""
    out = {}
    for r in report.rows:
        if r.system == system and r.gold_fraction is not None:
            out.setdefault(r.gold_fraction, []).append(r.test_accuracy)
    return [(f, *_mean_std(v), len(v)) for f, v in sorted(out.items())]


def non_decreasing(curve, name="non-decreasing"):
    """Each mean is at least the previous one minus the pooled std of the two fractions."""
    if len(curve) < 2:
        return TrendCheck(name, False, "needs at least two fractions")
    bad = []
    for (f0, m0, s0, _), (f1, m1, s1, _) in zip(curve, curve[1:]):
        pooled = math.sqrt((s0 ** 2 + s1 ** 2) / 2)
        if m1 < m0 - pooled:
            bad.append(f"{f0:g}->{f1:g}: {100 * m0:.1f} -> {100 * m1:.1f} (pooled std {100 * pooled:.1f})")
    means = ", ".join(f"{f:g}:{100 * m:.1f}" for f, m, _, _ in curve)
    return TrendCheck(name, not bad, "; ".join(bad) if bad else means)


def within_points(curve, frac, ref_frac, points, name=None):
    means = {f: m for f, m, _, _ in curve}
    name = name or f"{frac:g} within {points:g} points of {ref_frac:g}"
    if frac not in means or ref_frac not in means:
        return TrendCheck(name, False, "fraction missing from report")
    gap = 100 * (means[ref_frac] - means[frac])
    return TrendCheck(name, gap <= points, f"gap {gap:.1f} points")


__all__ = ["TrendCheck", "fraction_curve", "non_decreasing", "system_ordering", "within_points"]
