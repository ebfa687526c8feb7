"""Accuracy as a function of the fraction of gold target-language training data.

Runs the in-language parser at every configured gold fraction, plus the
shared-encoder variant (English training data added) at 0.5 and 1.0.

    python scripts/run_partial_translation.py --out runs/partial
"""
import argparse
import json
import os
import sys
from dataclasses import replace

from xsemparse.harness.config import load_suite_config, save_resolved
from xsemparse.harness.experiment import Report, prepare_data, run_experiment
from xsemparse.harness.trends import fraction_curve, non_decreasing, within_points

HERE = os.path.dirname(os.path.abspath(__file__))


def run(suite, shared_system="shared-gold", shared_fractions=(0.5, 1.0), log=None):
    data = prepare_data(suite.n_train, suite.corpus_seed, suite.channel_seed)
    report = run_experiment(suite, data, log=log)
    shared = replace(suite, systems=[shared_system], gold_fractions=list(shared_fractions))
    report.rows += run_experiment(shared, data, log=log).rows
    return report


def checks(report, system, shared_system="shared-gold", points=5.0):
    curve = fraction_curve(report, system)
    return [non_decreasing(curve, f"{system} non-decreasing in gold fraction"),
            within_points(fraction_curve(report, shared_system), 0.5, 1.0, points,
                          f"{shared_system} at 0.5 within {points:g} points of 1.0")]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=os.path.join(HERE, "configs", "partial.ini"))
    ap.add_argument("--out", default="runs/partial")
    ap.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")])
    args = ap.parse_args(argv)

    suite = load_suite_config(args.config)
    if args.seeds:
        suite = replace(suite, seeds=args.seeds)
    os.makedirs(args.out, exist_ok=True)
    save_resolved(suite, os.path.join(args.out, "resolved_config.ini"))
    report = run(suite, log=lambda m: print(m, flush=True))
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=1)
    print()
    print(report.format_table())
    ok = True
    for check in checks(report, suite.systems[0]):
        ok &= check.passed
        print(f"{'PASS' if check.passed else 'FAIL'}  {check.name}: {check.detail}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
