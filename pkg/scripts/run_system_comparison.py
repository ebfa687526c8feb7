"""Compare the back-translation baseline, a single-channel parser and the shared ensemble.

    python scripts/run_system_comparison.py --config scripts/configs/comparison.ini --out runs/comparison
"""
import argparse
import json
import os
import sys
import time
from dataclasses import replace

from xsemparse.harness.config import load_suite_config, save_resolved
from xsemparse.harness.experiment import Report, run_experiment
from xsemparse.harness.trends import system_ordering

HERE = os.path.dirname(os.path.abspath(__file__))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=os.path.join(HERE, "configs", "comparison.ini"))
    ap.add_argument("--out", default="runs/comparison")
    ap.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")])
    ap.add_argument("--systems", type=lambda s: s.split(","))
    args = ap.parse_args(argv)

    suite = load_suite_config(args.config)
    if args.seeds:
        suite = replace(suite, seeds=args.seeds)
    if args.systems:
        suite = replace(suite, systems=args.systems)
    os.makedirs(args.out, exist_ok=True)
    save_resolved(suite, os.path.join(args.out, "resolved_config.ini"))

    log_path = os.path.join(args.out, "runs.jsonl")
    start = time.perf_counter()
    with open(log_path, "w", encoding="utf-8") as fh:
        def on_record(rec):
            fh.write(json.dumps(Report([rec]).to_json()["rows"][0]) + "\n")
            fh.flush()
        report = run_experiment(suite, log=lambda m: print(m, flush=True), on_record=on_record)

    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=1)
    print()
    print(report.format_table())
    ok = True
    for check in system_ordering(report):
        ok &= check.passed
        print(f"{'PASS' if check.passed else 'FAIL'}  {check.name}: {check.detail}")
    print(f"total {time.perf_counter() - start:.0f}s")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
