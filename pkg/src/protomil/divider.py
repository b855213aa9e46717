"""Division of one bag into n disjoint pseudo-bags.

Four schemes:

* ``random``    — one section holding everything, then round-robin dealing.
* ``kmeans``    — Lloyd's with k-means++ init; cluster id is the section.
* ``proto_mean``/``proto_attn`` — cosine similarity of each instance to a bag
  prototype, binned into l equal-width sections over [-1, 1].

Sections play the role of phenotype strata: within each section the instances
are shuffled and dealt round-robin to the n pseudo-bags.  A single dealing
cursor carries across sections, which makes the per-section counts AND the
total pseudo-bag sizes differ by at most one.  With l=1 the proto schemes
collapse to plain random dividing (identical assignment for the same seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bagdata import FeatureBag
from .errors import (
    ConfigError,
    DegeneratePrototypeError,
    InsufficientInstancesError,
)
from .prototype import Prototype
from .seeds import make_rng

SCHEMES = ("random", "kmeans", "proto_mean", "proto_attn")

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-4


@dataclass(frozen=True)
class DividerConfig:
    scheme: str
    n: int = 8  # pseudo-bags per parent bag
    l: int = 8  # similarity sections (ignored for scheme="random")
    seed: int = 42

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.l < 1:
            raise ConfigError(f"l must be >= 1, got {self.l}")


@dataclass(frozen=True)
class DivisionAssignment:
    """Per-instance (section, pseudo-bag) indices for one bag, plus config echo."""

    bag_id: str
    section: np.ndarray  # (K,) ints in [0, l)
    pseudo_bag: np.ndarray  # (K,) ints in [0, n)
    scheme: str
    n: int
    l: int
    seed: int

    @property
    def num_instances(self) -> int:
        return self.section.shape[0]

    def groups(self) -> list[np.ndarray]:
        """Instance index arrays of the non-empty pseudo-bags, by pseudo-bag index."""
        return [
            idx
            for i in range(self.n)
            if (idx := np.flatnonzero(self.pseudo_bag == i)).size > 0
        ]


def cosine_similarity(prototype: np.ndarray, instance: np.ndarray) -> float:
    """cos(prototype, instance) clamped to [-1, 1]; zero-norm instance maps to 0."""
    prototype = np.asarray(prototype, dtype=np.float64)
    instance = np.asarray(instance, dtype=np.float64)
    pnorm = np.linalg.norm(prototype)
    if pnorm == 0.0:
        raise DegeneratePrototypeError("prototype has zero norm")
    inorm = np.linalg.norm(instance)
    if inorm == 0.0:
        return 0.0
    return float(np.clip(prototype @ instance / (pnorm * inorm), -1.0, 1.0))


def cosine_similarities(prototype: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Vectorized cosine of every feature row against the prototype."""
    prototype = np.asarray(prototype, dtype=np.float64)
    pnorm = np.linalg.norm(prototype)
    if pnorm == 0.0:
        raise DegeneratePrototypeError("prototype has zero norm")
    norms = np.linalg.norm(features, axis=1)
    nonzero = norms > 0.0
    if nonzero.all():  # common case: skip the masked gather
        sims = (features @ prototype) / (norms * pnorm)
    else:
        sims = np.zeros(features.shape[0])
        sims[nonzero] = (features[nonzero] @ prototype) / (norms[nonzero] * pnorm)
    return np.clip(sims, -1.0, 1.0)


def assign_sections(similarities: np.ndarray, l: int) -> np.ndarray:
    """Bin similarities into l half-open intervals of width 2/l over [-1, 1].

    Section j covers [-1 + 2j/l, -1 + 2(j+1)/l); the last section is closed
    at +1.
    """
    s = np.clip(np.asarray(similarities, dtype=np.float64), -1.0, 1.0)
    return np.minimum(np.floor((s + 1.0) * l / 2.0).astype(np.int64), l - 1)


def stratified_divide(sections: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Deal each section's shuffled instances round-robin to n pseudo-bags.

    One global cursor carries across sections (in ascending section order),
    so per-section counts and total sizes both differ by at most one across
    pseudo-bags.  Deterministic given (sections, n, seed).
    """
    sections = np.asarray(sections)
    k = sections.shape[0]
    if k < n:
        raise InsufficientInstancesError(f"cannot deal {k} instances into {n} pseudo-bags")
    rng = make_rng(seed)
    out = np.empty(k, dtype=np.int64)
    cursor = 0
    for s in np.unique(sections):
        idx = np.flatnonzero(sections == s)
        rng.shuffle(idx)
        out[idx] = (cursor + np.arange(idx.size)) % n
        cursor += idx.size
    return out


def kmeans_cluster(features: np.ndarray, l: int, seed: int) -> np.ndarray:
    """Lloyd's algorithm with k-means++ init; returns cluster ids in [0, l).

    Runs at most 100 iterations, stopping when the largest centroid
    displacement drops below 1e-4.  Deterministic given the seed.
    """
    features = np.asarray(features, dtype=np.float64)
    k = features.shape[0]
    if k < l:
        raise InsufficientInstancesError(f"cannot cluster {k} instances into {l} clusters")
    if l == 1:
        return np.zeros(k, dtype=np.int64)
    rng = make_rng(seed)
    sq_norms = np.einsum("ij,ij->i", features, features)

    # k-means++ seeding
    centers = np.empty((l, features.shape[1]))
    centers[0] = features[rng.integers(k)]
    closest = _sq_dist_to(features, sq_norms, centers[0])
    for j in range(1, l):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(k))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r))
            idx = min(idx, k - 1)
        centers[j] = features[idx]
        np.minimum(closest, _sq_dist_to(features, sq_norms, centers[j]), out=closest)

    ids = np.zeros(k, dtype=np.int64)
    for _ in range(KMEANS_MAX_ITER):
        d2 = (
            sq_norms[:, None]
            - 2.0 * (features @ centers.T)
            + np.einsum("ij,ij->i", centers, centers)[None, :]
        )
        ids = np.argmin(d2, axis=1)
        new_centers = np.empty_like(centers)
        assigned_d2 = d2[np.arange(k), ids]
        for j in range(l):
            members = ids == j
            if members.any():
                new_centers[j] = features[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the worst-served point
                far = int(np.argmax(assigned_d2))
                new_centers[j] = features[far]
                assigned_d2[far] = -1.0
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < KMEANS_TOL:
            break
    return ids.astype(np.int64)


def _sq_dist_to(features, sq_norms, center):
    d2 = sq_norms - 2.0 * (features @ center) + center @ center
    return np.maximum(d2, 0.0)


def divide(bag: FeatureBag, prototype: Prototype | None, cfg: DividerConfig) -> DivisionAssignment:
    """Divide one bag into cfg.n pseudo-bags under cfg.scheme."""
    k = bag.num_instances
    if k < cfg.n:
        raise InsufficientInstancesError(
            f"bag '{bag.bag_id}' has {k} instances, fewer than n={cfg.n}"
        )
    if cfg.scheme == "random":
        sections = np.zeros(k, dtype=np.int64)
    elif cfg.scheme == "kmeans":
        sections = kmeans_cluster(bag.features, cfg.l, cfg.seed)
    else:
        if prototype is None:
            raise ConfigError(f"scheme {cfg.scheme!r} requires a prototype")
        sims = cosine_similarities(prototype.vector, bag.features)
        sections = assign_sections(sims, cfg.l)
    pseudo = stratified_divide(sections, cfg.n, cfg.seed)
    return DivisionAssignment(
        bag_id=bag.bag_id,
        section=sections,
        pseudo_bag=pseudo,
        scheme=cfg.scheme,
        n=cfg.n,
        l=cfg.l,
        seed=cfg.seed,
    )


def write_assignments(
    items: list[tuple[FeatureBag, DivisionAssignment]], path: str | Path
) -> None:
    """Assignment CSV: bag_id,instance_index,section,pseudo_bag plus x,y when
    every exported bag carries coordinates."""
    with_coords = bool(items) and all(bag.coords is not None for bag, _ in items)
    header = ["bag_id", "instance_index", "section", "pseudo_bag"]
    if with_coords:
        header += ["x", "y"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for bag, assignment in items:
            for i in range(assignment.num_instances):
                row = [bag.bag_id, i, int(assignment.section[i]), int(assignment.pseudo_bag[i])]
                if with_coords:
                    row += [int(bag.coords[i, 0]), int(bag.coords[i, 1])]
                writer.writerow(row)


def read_assignments(path: str | Path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Re-read an assignment CSV into per-bag (section, pseudo_bag) arrays."""
    per_bag: dict[str, list[tuple[int, int, int]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:4] != ["bag_id", "instance_index", "section", "pseudo_bag"]:
            raise ConfigError(f"{path}: unexpected assignment CSV header {header}")
        for row in reader:
            per_bag.setdefault(row[0], []).append((int(row[1]), int(row[2]), int(row[3])))
    out = {}
    for bag_id, triples in per_bag.items():
        triples.sort()
        indices = [t[0] for t in triples]
        if indices != list(range(len(indices))):
            raise ConfigError(f"{path}: bag '{bag_id}' instance indices are not 0..K-1")
        out[bag_id] = (
            np.array([t[1] for t in triples], dtype=np.int64),
            np.array([t[2] for t in triples], dtype=np.int64),
        )
    return out
