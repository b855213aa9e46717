"""Bag-of-instances data model and corpus I/O.

File formats
------------
Binary bag (``.bin``): magic ``PDIV``, format version u16 = 1, K as u32,
d as u32, then K*d little-endian float32 row-major.  Features are widened to
float64 on load; round-trips are bit-exact for float32-representable values.

CSV bag (``.csv``): one instance per line, d comma-separated decimals, no
header.  Written with 8 significant digits, so round-trips agree to at least
6 significant digits.

Manifest CSV: header line ``bag_id,label,path,K,d``; paths are relative to
the manifest's directory.  All entries must share d and bag_ids are unique.

Instance order is load-order: row i of a file is instance index i everywhere
downstream.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BagFormatError, ManifestError

BAG_MAGIC = b"PDIV"
BAG_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHII")  # magic, version, K, d


@dataclass(frozen=True)
class FeatureBag:
    """One parent bag: K x d float64 features, binary label, optional coords."""

    bag_id: str
    label: int
    features: np.ndarray
    coords: np.ndarray | None = None  # (K, 2) integer (x, y) pairs

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise BagFormatError(f"bag '{self.bag_id}': features must be K x d with K >= 1")
        if not np.isfinite(feats).all():
            raise BagFormatError(f"bag '{self.bag_id}': non-finite feature value")
        if self.label not in (0, 1):
            raise BagFormatError(f"bag '{self.bag_id}': label must be 0 or 1, got {self.label!r}")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        if self.coords is not None:
            coords = np.asarray(self.coords, dtype=np.int64)
            if coords.shape != (feats.shape[0], 2):
                raise BagFormatError(
                    f"bag '{self.bag_id}': coords shape {coords.shape} != ({feats.shape[0]}, 2)"
                )
            coords.setflags(write=False)
            object.__setattr__(self, "coords", coords)

    @property
    def num_instances(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ManifestEntry:
    bag_id: str
    label: int
    path: Path  # resolved against the manifest directory
    num_instances: int
    dim: int


@dataclass(frozen=True)
class CorpusManifest:
    entries: tuple[ManifestEntry, ...]
    dim: int

    def __len__(self) -> int:
        return len(self.entries)


def load_manifest(path: str | Path) -> CorpusManifest:
    """Parse and validate a manifest CSV."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ManifestError(f"{path}: line 1: empty manifest")
    header = [c.strip() for c in rows[0]]
    if header != ["bag_id", "label", "path", "K", "d"]:
        raise ManifestError(f"{path}: line 1: expected header bag_id,label,path,K,d, got {rows[0]}")
    if len(rows) == 1:
        raise ManifestError(f"{path}: line 2: manifest has no entries")
    entries = []
    seen: set[str] = set()
    base = path.parent
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 5:
            raise ManifestError(f"{path}: line {lineno}: expected 5 columns, got {len(row)}")
        bag_id, label_s, rel, k_s, d_s = (c.strip() for c in row)
        if bag_id in seen:
            raise ManifestError(f"{path}: line {lineno}: duplicate bag_id '{bag_id}'")
        seen.add(bag_id)
        try:
            label = int(label_s)
            k = int(k_s)
            d = int(d_s)
        except ValueError as exc:
            raise ManifestError(f"{path}: line {lineno}: {exc}") from exc
        if label not in (0, 1):
            raise ManifestError(f"{path}: line {lineno}: label must be 0 or 1, got {label}")
        if k < 1 or d < 1:
            raise ManifestError(f"{path}: line {lineno}: K and d must be >= 1")
        entries.append(ManifestEntry(bag_id, label, base / rel, k, d))
    dims = {e.dim for e in entries}
    if len(dims) > 1:
        raise ManifestError(f"{path}: inconsistent feature dimensions across entries: {sorted(dims)}")
    return CorpusManifest(entries=tuple(entries), dim=entries[0].dim)


def write_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    """Write a manifest CSV; entry paths are stored relative to the manifest."""
    path = Path(path)
    base = path.parent
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bag_id", "label", "path", "K", "d"])
        for e in entries:
            rel = e.path.relative_to(base) if e.path.is_absolute() else e.path
            writer.writerow([e.bag_id, e.label, rel.as_posix(), e.num_instances, e.dim])


def _read_binary_features(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise BagFormatError(f"{path}: truncated header")
    magic, version, k, d = _HEADER.unpack_from(data)
    if magic != BAG_MAGIC:
        raise BagFormatError(f"{path}: bad magic {magic!r}")
    if version != BAG_FORMAT_VERSION:
        raise BagFormatError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + 4 * k * d
    if len(data) != expected:
        raise BagFormatError(f"{path}: expected {expected} bytes for K={k}, d={d}, got {len(data)}")
    feats = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(k, d)
    return feats.astype(np.float64)


def _read_csv_features(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise BagFormatError(f"{path}: line {lineno}: {exc}") from exc
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise BagFormatError(f"{path}: line {lineno}: expected {width} columns, got {len(values)}")
            rows.append(values)
    if not rows:
        raise BagFormatError(f"{path}: empty bag file")
    feats = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(feats).all():
        raise BagFormatError(f"{path}: non-finite feature value")
    return feats


def read_bag(entry: ManifestEntry) -> FeatureBag:
    """Load one bag, checking the manifest's K and d against the file."""
    data = entry.path.read_bytes() if entry.path.exists() else None
    if data is None:
        raise BagFormatError(f"{entry.path}: no such file")
    if data[:4] == BAG_MAGIC:
        feats = _read_binary_features(entry.path)
    else:
        feats = _read_csv_features(entry.path)
    if feats.shape != (entry.num_instances, entry.dim):
        raise BagFormatError(
            f"{entry.path}: manifest says {entry.num_instances} x {entry.dim}, file has {feats.shape}"
        )
    if not np.isfinite(feats).all():
        raise BagFormatError(f"{entry.path}: non-finite feature value")
    return FeatureBag(bag_id=entry.bag_id, label=entry.label, features=feats)


def write_bag(bag: FeatureBag, path: str | Path, format: str = "binary") -> None:
    """Write a bag's features to disk as 'binary' or 'csv'."""
    path = Path(path)
    k, d = bag.features.shape
    if format == "binary":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(BAG_MAGIC, BAG_FORMAT_VERSION, k, d))
            fh.write(np.ascontiguousarray(bag.features, dtype="<f4").tobytes())
    elif format == "csv":
        with open(path, "w") as fh:
            for row in bag.features:
                fh.write(",".join(f"{v:.8g}" for v in row) + "\n")
    else:
        raise ValueError(f"unknown bag format {format!r}")


def load_corpus(manifest: CorpusManifest) -> list[FeatureBag]:
    """Load every bag of a manifest, in manifest order."""
    return [read_bag(entry) for entry in manifest.entries]
