"""Command-line interface.

Subcommands: gen, divide, train, sweep, bench, export-prototypes.  All
randomness flows from explicit --seed flags, so every command is
deterministic given its flags.  Machine-readable outputs (CSV/JSON) go to
files or stdout; human-readable diagnostics go to stderr.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import mil as mil_mod
from . import prototype as proto_mod
from . import synthgen, trainer
from .bagdata import load_corpus, load_manifest
from .divider import SCHEMES, DividerConfig, divide, write_assignments
from .errors import ConfigError, InsufficientInstancesError, ProtomilError
from .seeds import derive_seed

logger = logging.getLogger("protomil")


def _add_corpus_arg(parser):
    parser.add_argument("--data", required=True, help="corpus directory containing manifest.csv")


def _load_bags(data_dir: str):
    manifest = load_manifest(Path(data_dir) / "manifest.csv")
    return load_corpus(manifest)


def _proto_module_for(bags, hidden_dim, seed, checkpoint):
    """Attention-prototype module, freshly seeded or restored from a checkpoint."""
    module = proto_mod.PrototypeModule.create(
        bags[0].dim, hidden_dim, seed=derive_seed(seed, "proto-init")
    )
    if checkpoint:
        tensors, _ = mil_mod.load_checkpoint(checkpoint)
        saved = {k[len("proto."):]: v for k, v in tensors.items() if k.startswith("proto.")}
        if not saved:
            raise ConfigError(f"{checkpoint}: no prototype-module tensors in checkpoint")
        mil_mod.restore_tensors(module.tensors(), saved)
    return module


def cmd_gen(args) -> int:
    cfg = synthgen.SynthConfig(
        num_bags=args.bags,
        k_min=args.k_min,
        k_max=args.k_max,
        dim=args.dim,
        num_phenotypes=args.phenotypes,
        witness_fraction=args.witness,
        noise_sigma=args.sigma,
        seed=args.seed,
    )
    manifest = synthgen.generate(cfg, args.out)
    print(json.dumps({"config": cfg.to_dict(), "bags": len(manifest)}, sort_keys=True, indent=2))
    return 0


def cmd_divide(args) -> int:
    bags = _load_bags(args.data)
    proto_module = None
    if args.scheme == "proto_attn":
        proto_module = _proto_module_for(bags, args.hidden, args.seed, args.checkpoint)
    items = []
    skipped = 0
    for bag in bags:
        if bag.num_instances < args.n:
            logger.warning(
                "skipping bag '%s': K=%d < n=%d", bag.bag_id, bag.num_instances, args.n
            )
            skipped += 1
            continue
        prototype = trainer._bag_prototype(args.scheme, bag, proto_module)
        cfg = DividerConfig(scheme=args.scheme, n=args.n, l=args.l, seed=derive_seed(args.seed, bag.bag_id))
        items.append((bag, divide(bag, prototype, cfg)))
    if not items:
        raise ProtomilError(f"all {skipped} bags skipped (K < n={args.n})")
    write_assignments(items, args.out)
    logger.info("wrote %d assignments (%d bags skipped) to %s", len(items), skipped, args.out)
    return 0


def _train_cfg_from(args) -> trainer.TrainConfig:
    return trainer.TrainConfig(
        hidden_dim=args.hidden,
        proto_hidden_dim=args.proto_hidden,
        mil_lr=args.lr,
        proto_lr=args.proto_lr,
        epochs=args.epochs,
        seed=args.seed,
        parallel_folds=args.parallel_folds,
    )


def cmd_train(args) -> int:
    bags = _load_bags(args.data)
    divider_cfg = DividerConfig(scheme=args.scheme, n=args.n, l=args.l, seed=args.seed)
    report = trainer.run_experiment(
        bags,
        divider_cfg,
        _train_cfg_from(args),
        folds_seed=args.folds_seed,
        checkpoint_dir=args.checkpoint_dir,
    )
    Path(args.out).write_text(report.to_json(include_timings=args.emit_timings))
    logger.info("mean test auc %.4f; metrics written to %s", report.auc, args.out)
    return 0


def cmd_sweep(args) -> int:
    bags = _load_bags(args.data)
    n_values = [int(v) for v in args.n_values.split(",")]
    l_values = [int(v) for v in args.l_values.split(",")]
    grid = trainer.run_sweep(
        bags, n_values, l_values, args.scheme, _train_cfg_from(args),
        divider_seed=args.seed, folds_seed=args.folds_seed,
    )
    trainer.write_sweep_csv(grid, n_values, l_values, args.out)
    logger.info("sweep grid (%d cells) written to %s", len(grid), args.out)
    return 0


def cmd_bench(args) -> int:
    bags = _load_bags(args.data)
    schemes = SCHEMES if args.schemes == "all" else tuple(args.schemes.split(","))
    timings = trainer.bench_division(bags, schemes, n=args.n, l=args.l, seed=args.seed)
    print("scheme,total_seconds")
    for scheme, seconds in timings:
        print(f"{scheme},{seconds!r}")
    if args.out:
        trainer.write_timings_csv(timings, args.out)
    return 0


def cmd_export_prototypes(args) -> int:
    bags = _load_bags(args.data)
    if args.kind == "mean":
        rows = [(b.bag_id, b.label, proto_mod.mean_prototype(b).vector) for b in bags]
    else:
        module = _proto_module_for(bags, args.hidden, args.seed, args.checkpoint)
        rows = [
            (b.bag_id, b.label, proto_mod.attention_prototype(module, b).vector) for b in bags
        ]
    proto_mod.export_prototypes(rows, args.out)
    logger.info("exported %d prototypes to %s", len(rows), args.out)
    return 0


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protomil",
        description="Prototype-guided pseudo-bag division and MIL training",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--bags", type=_positive_int, default=60)
    p.add_argument("--k-min", type=_positive_int, default=100)
    p.add_argument("--k-max", type=_positive_int, default=400)
    p.add_argument("--dim", type=_positive_int, default=32)
    p.add_argument("--phenotypes", type=_positive_int, default=4)
    p.add_argument("--witness", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("divide", help="divide every bag and write the assignment CSV")
    _add_corpus_arg(p)
    p.add_argument("--scheme", choices=SCHEMES, required=True)
    p.add_argument("--n", type=_positive_int, default=8)
    p.add_argument("--l", type=_positive_int, default=8)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--hidden", type=_positive_int, default=proto_mod.DEFAULT_HIDDEN_DIM)
    p.add_argument("--checkpoint", default=None, help="restore the prototype module from this checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_divide)

    for name, fn in (("train", cmd_train), ("sweep", cmd_sweep)):
        p = sub.add_parser(name, help=f"{name} over 4 cross-validation splits")
        _add_corpus_arg(p)
        p.add_argument("--scheme", choices=SCHEMES, default="proto_mean")
        if name == "train":
            p.add_argument("--n", type=_positive_int, default=8)
            p.add_argument("--l", type=_positive_int, default=8)
            p.add_argument("--checkpoint-dir", default=None)
            p.add_argument("--emit-timings", action="store_true",
                           help="include wall-clock timings in the metrics JSON")
        else:
            p.add_argument("--n-values", default="1,3,6,8")
            p.add_argument("--l-values", default="4,8")
        p.add_argument("--epochs", type=_positive_int, default=50)
        p.add_argument("--lr", type=float, default=2e-4)
        p.add_argument("--proto-lr", type=float, default=1e-4)
        p.add_argument("--hidden", type=_positive_int, default=128)
        p.add_argument("--proto-hidden", type=_positive_int, default=proto_mod.DEFAULT_HIDDEN_DIM)
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--folds-seed", type=int, default=None)
        p.add_argument("--parallel-folds", action=argparse.BooleanOptionalAction, default=True)
        p.add_argument("--out", required=True)
        p.set_defaults(func=fn)

    p = sub.add_parser("bench", help="time the division schemes on up to 100 bags")
    _add_corpus_arg(p)
    p.add_argument("--schemes", default="all", help="'all' or comma-separated scheme names")
    p.add_argument("--n", type=_positive_int, default=8)
    p.add_argument("--l", type=_positive_int, default=8)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-prototypes", help="write per-bag prototype vectors as CSV")
    _add_corpus_arg(p)
    p.add_argument("--kind", choices=("mean", "attention"), default="mean")
    p.add_argument("--hidden", type=_positive_int, default=proto_mod.DEFAULT_HIDDEN_DIM)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_prototypes)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        parser.error(str(exc))  # exits 2
    except (ProtomilError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
