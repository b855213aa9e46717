#!/usr/bin/env python3
"""Sweep the pseudo-bag count n and section count l, report mean AUC per cell.

The n=1 column is shared across l values (sections are irrelevant when the
bag is not divided).  Output is a CSV grid with one row per l.

    python3 scripts/pseudo_bag_grid.py --data data/synth --seeds 0 1 2
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from protomil.trainer import TrainConfig, run_sweep, write_sweep_csv

from scheme_comparison import ensure_corpus


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", type=Path, default=Path("data/synth"))
    ap.add_argument("--scheme", default="proto_mean")
    ap.add_argument("--n-values", type=int, nargs="+", default=[1, 3, 6, 8])
    ap.add_argument("--l-values", type=int, nargs="+", default=[4, 8])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--out", type=Path, default=Path("sweep_grid.csv"))
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    bags = ensure_corpus(args.data)
    grids = []
    for seed in args.seeds:
        grid = run_sweep(
            bags,
            args.n_values,
            args.l_values,
            args.scheme,
            TrainConfig(seed=seed, epochs=args.epochs, mil_lr=args.lr),
            divider_seed=seed,
            folds_seed=seed,
        )
        grids.append(grid)
        logging.info("seed %d done", seed)

    mean_grid = {cell: float(np.mean([g[cell] for g in grids])) for cell in grids[0]}
    write_sweep_csv(mean_grid, args.n_values, args.l_values, args.out)
    print(f"wrote {args.out}")
    header = "l\\n " + " ".join(f"{n:>7}" for n in args.n_values)
    print(header)
    for l in args.l_values:
        print(f"{l:>4} " + " ".join(f"{mean_grid[(n, l)]:7.4f}" for n in args.n_values))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
