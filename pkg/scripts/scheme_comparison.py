#!/usr/bin/env python3
"""Compare division schemes on the synthetic corpus.

Runs cross-validated training for each scheme at the default (n=8, l=8),
plus the undivided n=1 baseline, over several seeds, and prints mean/std
test AUC per scheme together with the wall-clock division bench.  This is
the headline comparison; expect ~25 minutes at the default settings.

    python3 scripts/scheme_comparison.py --data data/synth --seeds 0 1 2 3 4
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from protomil.bagdata import load_corpus, load_manifest
from protomil.divider import DividerConfig
from protomil.synthgen import SynthConfig, generate
from protomil.trainer import TrainConfig, bench_division, run_experiment

SCHEMES = ("random", "kmeans", "proto_mean", "proto_attn")


def ensure_corpus(data_dir: Path):
    manifest = data_dir / "manifest.csv"
    if not manifest.exists():
        logging.info("generating default synthetic corpus in %s", data_dir)
        generate(SynthConfig(), data_dir)
    return load_corpus(load_manifest(manifest))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", type=Path, default=Path("data/synth"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--l", type=int, default=8)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--lr", type=float, default=1e-3,
                    help="on the small synthetic corpus the library default 2e-4 underfits")
    ap.add_argument("--out", type=Path, default=None, help="also dump results as JSON")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    bags = ensure_corpus(args.data)
    rows = {}
    for scheme in SCHEMES + ("baseline_n1",):
        actual = "random" if scheme == "baseline_n1" else scheme
        n, l = (1, 1) if scheme == "baseline_n1" else (args.n, args.l)
        aucs = []
        for seed in args.seeds:
            t0 = time.time()
            rep = run_experiment(
                bags,
                DividerConfig(scheme=actual, n=n, l=l, seed=seed),
                TrainConfig(seed=seed, epochs=args.epochs, mil_lr=args.lr),
                folds_seed=seed,
            )
            aucs.append(rep.auc)
            logging.info("%s seed=%d auc=%.4f (%.0fs)", scheme, seed, rep.auc, time.time() - t0)
        rows[scheme] = aucs

    print(f"\n{'scheme':<14} {'mean AUC':>9} {'std':>7}   seeds={args.seeds}")
    for scheme, aucs in rows.items():
        std = float(np.std(aucs, ddof=1)) if len(aucs) > 1 else 0.0
        print(f"{scheme:<14} {np.mean(aucs):>9.4f} {std:>7.4f}")

    print("\ndivision timing (100 sampled bags):")
    timings = bench_division(bags, n=args.n, l=args.l)
    for scheme, seconds in timings:
        print(f"  {scheme:<12} {seconds:8.3f} s")

    if args.out:
        args.out.write_text(json.dumps({"auc": rows, "timing": dict(timings)}, indent=2))
        logging.info("wrote %s", args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
