"""End-to-end training, hyperparameter sweeps, and the division benchmark.

Per fold and per epoch: (1) for the attention-prototype scheme, the prototype
module takes one training pass over all training bags first; (2) prototypes
are recomputed and every training bag is re-divided with an epoch-derived
sub-seed; (3) the MIL model trains bag by bag in seeded shuffled order;
(4) validation AUC picks the best checkpoint, which is finally evaluated on
the test split.  Division sub-seeds come from derive_seed(seed, bag_id,
epoch); evaluation-time divisions use a fixed "eval" tag instead of an epoch
so inference is deterministic across epochs and runs.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mil as mil_mod
from . import prototype as proto_mod
from .bagdata import FeatureBag
from .divider import DividerConfig, DivisionAssignment, divide
from .errors import ConfigError
from .metrics import FoldSplit, MetricsReport, accuracy_sensitivity, auc, make_folds
from .seeds import derive_seed, make_rng

logger = logging.getLogger(__name__)

EVAL_TAG = "eval"


@dataclass(frozen=True)
class TrainConfig:
    hidden_dim: int = 128
    proto_hidden_dim: int = proto_mod.DEFAULT_HIDDEN_DIM
    mil_lr: float = 2e-4
    proto_lr: float = 1e-4
    epochs: int = 50
    seed: int = 42
    parallel_folds: bool = True


@dataclass
class FoldResult:
    fold_id: int
    auc: float
    acc: float
    sen: float
    seconds: float
    best_epoch: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)


def _bag_prototype(scheme: str, bag: FeatureBag, proto_module):
    if scheme == "proto_mean":
        return proto_mod.mean_prototype(bag)
    if scheme == "proto_attn":
        return proto_mod.attention_prototype(proto_module, bag)
    return None


def _divide_bag(bag, scheme, n, l, seed, prototype) -> DivisionAssignment:
    k = bag.num_instances
    n_eff = min(n, k)
    if n_eff < n:
        logger.warning("bag '%s' has K=%d < n=%d; clamping n to %d", bag.bag_id, k, n, n_eff)
    l_eff = l
    if scheme == "kmeans" and l > k:
        logger.warning("bag '%s' has K=%d < l=%d; clamping l to %d", bag.bag_id, k, l, k)
        l_eff = k
    cfg = DividerConfig(scheme=scheme, n=n_eff, l=l_eff, seed=seed)
    return divide(bag, prototype, cfg)


def _evaluate_scores(bags, model, proto_module, divider_cfg) -> np.ndarray:
    scores = np.empty(len(bags))
    for i, bag in enumerate(bags):
        prototype = _bag_prototype(divider_cfg.scheme, bag, proto_module)
        seed = derive_seed(divider_cfg.seed, bag.bag_id, EVAL_TAG)
        assignment = _divide_bag(bag, divider_cfg.scheme, divider_cfg.n, divider_cfg.l, seed, prototype)
        scores[i] = mil_mod.infer_bag(model, assignment, bag)
    return scores


def run_fold(
    bags_by_id: dict[str, FeatureBag],
    fold: FoldSplit,
    divider_cfg: DividerConfig,
    train_cfg: TrainConfig,
) -> FoldResult:
    """Train on one fold split and evaluate its test set with the best-validation model."""
    started = time.perf_counter()
    train_bags = [bags_by_id[i] for i in fold.train_ids]
    val_bags = [bags_by_id[i] for i in fold.val_ids]
    test_bags = [bags_by_id[i] for i in fold.test_ids]
    for name, bags in (("train", train_bags), ("val", val_bags), ("test", test_bags)):
        if len({b.label for b in bags}) < 2:
            raise ConfigError(f"fold {fold.fold_id}: {name} split does not contain both classes")
    train_ids = set(fold.train_ids)
    if train_ids & set(fold.test_ids) or set(fold.val_ids) & set(fold.test_ids):
        raise ConfigError(f"fold {fold.fold_id}: test split overlaps train/val")

    dim = train_bags[0].dim
    model = mil_mod.MilModel.create(
        dim, train_cfg.hidden_dim, seed=derive_seed(train_cfg.seed, "mil-init", fold.fold_id)
    )
    proto_module = None
    if divider_cfg.scheme == "proto_attn":
        proto_module = proto_mod.PrototypeModule.create(
            dim, train_cfg.proto_hidden_dim, seed=derive_seed(train_cfg.seed, "proto-init", fold.fold_id)
        )

    best_auc = -np.inf
    best_epoch = -1
    best_tensors: dict[str, np.ndarray] = {}
    live_tensors = model.tensors("mil.")
    if proto_module is not None:
        live_tensors.update(proto_module.tensors("proto."))

    for epoch in range(train_cfg.epochs):
        order = make_rng(train_cfg.seed, "order", fold.fold_id, epoch).permutation(len(train_bags))
        if proto_module is not None:
            for i in order:
                proto_mod.train_prototype_step(proto_module, train_bags[i], train_cfg.proto_lr)
        for i in order:
            bag = train_bags[i]
            prototype = _bag_prototype(divider_cfg.scheme, bag, proto_module)
            seed = derive_seed(divider_cfg.seed, bag.bag_id, epoch)
            assignment = _divide_bag(
                bag, divider_cfg.scheme, divider_cfg.n, divider_cfg.l, seed, prototype
            )
            mil_mod.train_bag_step(model, assignment, bag, train_cfg.mil_lr)
        val_scores = _evaluate_scores(val_bags, model, proto_module, divider_cfg)
        val_auc = auc(val_scores, [b.label for b in val_bags])
        if val_auc > best_auc:
            best_auc = val_auc
            best_epoch = epoch
            best_tensors = {k: v.copy() for k, v in live_tensors.items()}

    mil_mod.restore_tensors(live_tensors, best_tensors)
    test_scores = _evaluate_scores(test_bags, model, proto_module, divider_cfg)
    test_labels = [b.label for b in test_bags]
    test_auc = auc(test_scores, test_labels)
    test_acc, test_sen = accuracy_sensitivity(test_scores, test_labels)
    return FoldResult(
        fold_id=fold.fold_id,
        auc=test_auc,
        acc=test_acc,
        sen=test_sen,
        seconds=time.perf_counter() - started,
        best_epoch=best_epoch,
        tensors=best_tensors,
    )


def run_experiment(
    bags: list[FeatureBag],
    divider_cfg: DividerConfig,
    train_cfg: TrainConfig,
    folds: list[FoldSplit] | None = None,
    folds_seed: int | None = None,
    checkpoint_dir: str | Path | None = None,
) -> MetricsReport:
    """Cross-validated training; returns per-fold and aggregate metrics."""
    bags_by_id = {b.bag_id: b for b in bags}
    if len(bags_by_id) != len(bags):
        raise ConfigError("duplicate bag_id in corpus")
    if folds is None:
        seed = train_cfg.seed if folds_seed is None else folds_seed
        folds = make_folds([b.bag_id for b in bags], [b.label for b in bags], seed)

    def one(fold):
        result = run_fold(bags_by_id, fold, divider_cfg, train_cfg)
        logger.info(
            "fold %d: test auc %.4f (best epoch %d, %.1fs)",
            fold.fold_id, result.auc, result.best_epoch, result.seconds,
        )
        return result

    if train_cfg.parallel_folds and len(folds) > 1:
        with ThreadPoolExecutor(max_workers=len(folds)) as pool:
            results = list(pool.map(one, folds))
    else:
        results = [one(fold) for fold in folds]

    config_echo = {
        "scheme": divider_cfg.scheme,
        "n": divider_cfg.n,
        "l": divider_cfg.l,
        "divider_seed": divider_cfg.seed,
        "hidden_dim": train_cfg.hidden_dim,
        "proto_hidden_dim": train_cfg.proto_hidden_dim,
        "mil_lr": train_cfg.mil_lr,
        "proto_lr": train_cfg.proto_lr,
        "epochs": train_cfg.epochs,
        "seed": train_cfg.seed,
        "folds": len(folds),
    }
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        for result in results:
            mil_mod.save_checkpoint(
                checkpoint_dir / f"fold{result.fold_id}.ckpt",
                result.tensors,
                {**config_echo, "fold": result.fold_id, "best_epoch": result.best_epoch},
            )
    return MetricsReport(
        fold_auc=[r.auc for r in results],
        fold_acc=[r.acc for r in results],
        fold_sen=[r.sen for r in results],
        config=config_echo,
        fold_seconds=[r.seconds for r in results],
    )


def run_sweep(
    bags: list[FeatureBag],
    n_values: list[int],
    l_values: list[int],
    scheme: str,
    train_cfg: TrainConfig,
    divider_seed: int = 42,
    folds_seed: int | None = None,
) -> dict[tuple[int, int], float]:
    """Mean test AUC for each (n, l) cell; n=1 is computed once and shared."""
    grid: dict[tuple[int, int], float] = {}
    shared_n1: float | None = None
    for n in n_values:
        for l in l_values:
            if n == 1:
                if shared_n1 is None:
                    cfg = DividerConfig(scheme=scheme, n=1, l=1, seed=divider_seed)
                    shared_n1 = run_experiment(bags, cfg, train_cfg, folds_seed=folds_seed).auc
                grid[(n, l)] = shared_n1
            else:
                cfg = DividerConfig(scheme=scheme, n=n, l=l, seed=divider_seed)
                grid[(n, l)] = run_experiment(bags, cfg, train_cfg, folds_seed=folds_seed).auc
    return grid


def write_sweep_csv(
    grid: dict[tuple[int, int], float], n_values: list[int], l_values: list[int], path: str | Path
) -> None:
    """Rows are l values, columns are n values."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["l"] + [f"n={n}" for n in n_values])
        for l in l_values:
            writer.writerow([l] + [repr(grid[(n, l)]) for n in n_values])


def bench_division(
    bags: list[FeatureBag],
    schemes=("random", "kmeans", "proto_mean", "proto_attn"),
    n: int = 8,
    l: int = 8,
    seed: int = 42,
    sample_size: int = 100,
    hidden_dim: int = proto_mod.DEFAULT_HIDDEN_DIM,
) -> list[tuple[str, float]]:
    """Wall-clock seconds to divide the sampled bags under each scheme.

    Features must already be in memory (file I/O is excluded by design);
    prototype computation and clustering are part of the timed region.  Runs
    strictly sequentially.
    """
    if len(bags) > sample_size:
        idx = make_rng(seed, "bench-sample").choice(len(bags), size=sample_size, replace=False)
        bags = [bags[i] for i in idx]
    proto_module = proto_mod.PrototypeModule.create(
        bags[0].dim, hidden_dim, seed=derive_seed(seed, "bench-proto")
    )
    timings = []
    for scheme in schemes:
        if scheme not in ("random", "kmeans", "proto_mean", "proto_attn"):
            raise ConfigError(f"unknown scheme {scheme!r}")
        start = time.perf_counter()
        for bag in bags:
            prototype = _bag_prototype(scheme, bag, proto_module)
            _divide_bag(bag, scheme, n, l, derive_seed(seed, bag.bag_id, EVAL_TAG), prototype)
        timings.append((scheme, time.perf_counter() - start))
    return timings


def write_timings_csv(timings: list[tuple[str, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scheme", "total_seconds"])
        for scheme, seconds in timings:
            writer.writerow([scheme, repr(seconds)])
