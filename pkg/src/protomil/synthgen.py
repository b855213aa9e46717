"""Seeded synthetic MIL corpus with planted phenotype and witness structure.

Negative bags draw each instance from one of ``num_phenotypes`` background
centers plus Gaussian noise; positive bags additionally overwrite
ceil(witness_fraction * K) instances with a dedicated witness center plus
noise, honoring the MIL assumption that a bag is positive iff it contains at
least one positive instance.  All centers are unit vectors rejection-sampled
to pairwise cosine < 0.5.  Generation is byte-deterministic given the config.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from .bagdata import (
    CorpusManifest,
    FeatureBag,
    ManifestEntry,
    load_manifest,
    write_bag,
    write_manifest,
)
from .errors import ConfigError
from .seeds import make_rng

MAX_CENTER_REJECTIONS = 10_000
CENTER_COSINE_LIMIT = 0.5


@dataclass(frozen=True)
class SynthConfig:
    num_bags: int = 60
    k_min: int = 100
    k_max: int = 400
    dim: int = 32
    num_phenotypes: int = 4
    witness_fraction: float = 0.1
    noise_sigma: float = 0.3
    seed: int = 42

    def __post_init__(self):
        if self.num_bags < 2:
            raise ConfigError("num_bags must be >= 2")
        if self.k_min < 1 or self.k_max < self.k_min:
            raise ConfigError(f"bad instance-count range [{self.k_min}, {self.k_max}]")
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        if self.num_phenotypes < 1:
            raise ConfigError("num_phenotypes must be >= 1")
        if not (0.0 < self.witness_fraction <= 1.0):
            raise ConfigError(f"witness_fraction must be in (0, 1], got {self.witness_fraction}")
        if self.noise_sigma < 0.0:
            raise ConfigError("noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _sample_centers(cfg: SynthConfig):
    """num_phenotypes background centers plus one witness center, all unit
    vectors with pairwise cosine < 0.5."""
    rng = make_rng(cfg.seed, "centers")
    centers = []
    rejections = 0
    while len(centers) < cfg.num_phenotypes + 1:
        v = rng.normal(size=cfg.dim)
        norm = float((v @ v) ** 0.5)
        if norm == 0.0:
            continue
        v /= norm
        if all(float(v @ c) < CENTER_COSINE_LIMIT for c in centers):
            centers.append(v)
        else:
            rejections += 1
            if rejections >= MAX_CENTER_REJECTIONS:
                raise ConfigError(
                    f"could not place {cfg.num_phenotypes + 1} centers with pairwise "
                    f"cosine < {CENTER_COSINE_LIMIT} in dim={cfg.dim}"
                )
    return centers[: cfg.num_phenotypes], centers[cfg.num_phenotypes]


def generate(cfg: SynthConfig, out_dir: str | Path) -> CorpusManifest:
    """Write manifest + binary bags under out_dir; returns the loaded manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    background, witness = _sample_centers(cfg)
    entries = []
    for i in range(cfg.num_bags):
        bag_id = f"bag{i:04d}"
        label = i % 2  # balanced within +/- 1
        rng = make_rng(cfg.seed, "bag", bag_id)
        k = int(rng.integers(cfg.k_min, cfg.k_max + 1))
        phenotype_idx = rng.integers(0, cfg.num_phenotypes, size=k)
        feats = rng.normal(0.0, cfg.noise_sigma, size=(k, cfg.dim))
        for j, c in enumerate(background):
            feats[phenotype_idx == j] += c
        if label == 1:
            count = math.ceil(cfg.witness_fraction * k)
            chosen = rng.choice(k, size=count, replace=False)
            feats[chosen] = witness + rng.normal(0.0, cfg.noise_sigma, size=(count, cfg.dim))
        bag = FeatureBag(bag_id=bag_id, label=label, features=feats)
        bag_path = out_dir / f"{bag_id}.bin"
        write_bag(bag, bag_path, format="binary")
        entries.append(ManifestEntry(bag_id, label, bag_path, k, cfg.dim))
    manifest_path = out_dir / "manifest.csv"
    write_manifest(entries, manifest_path)
    return load_manifest(manifest_path)
