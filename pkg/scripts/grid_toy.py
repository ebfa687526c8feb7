"""Small hyper-parameter grid over the toy model, ranked by dev accuracy.

    python scripts/grid_toy.py --grid scripts/configs/grid_toy.ini --system seq2seq
"""
import argparse
import os
import sys
from dataclasses import replace

from xsemparse.harness.config import load_grid, load_train_config
from xsemparse.harness.experiment import prepare_data
from xsemparse.harness.grid import format_grid, grid_search

HERE = os.path.dirname(os.path.abspath(__file__))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", default=os.path.join(HERE, "configs", "grid_toy.ini"))
    ap.add_argument("--config", default=os.path.join(HERE, "configs", "toy.ini"))
    ap.add_argument("--system", default="seq2seq")
    ap.add_argument("--n-train", type=int, default=300)
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args(argv)

    base = load_train_config(args.config)
    if args.epochs:
        base = replace(base, epochs=args.epochs)
    data = prepare_data(args.n_train)
    rows = grid_search(load_grid(args.grid), base, data, args.system, log=lambda m: print(m, flush=True))
    table = format_grid(rows)
    print(table)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
