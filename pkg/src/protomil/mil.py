"""Pseudo-bag-level MIL classifier.

Architecture: gated-attention pooling of instance features into a d-dim bag
embedding, then a linear unit + sigmoid.  Each pseudo-bag inherits its parent
bag's label; training takes one optimizer step per parent bag on the mean BCE
over its pseudo-bags, and inference mean-pools the pseudo-bag probabilities.
With a single pseudo-bag holding the whole bag this is exactly classic
bag-level gated-attention MIL.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import nn
from .bagdata import FeatureBag
from .divider import DivisionAssignment
from .errors import BagFormatError, DimensionError, TrainingDivergenceError
from .seeds import make_rng

DEFAULT_HIDDEN_DIM = 128
DEFAULT_LR = 2e-4

CHECKPOINT_MAGIC = b"PDCK"
CHECKPOINT_VERSION = 1


class MilModel:
    """Gated-attention aggregator + linear bag-level head + Adam state."""

    def __init__(self, attn: nn.GatedAttentionParams, head: nn.LinearHeadParams):
        self.attn = attn
        self.head = head
        self.state = nn.AdamState.for_params(self.tensors())

    @classmethod
    def create(cls, input_dim: int, hidden_dim: int = DEFAULT_HIDDEN_DIM, seed: int = 0):
        rng = make_rng(seed)
        return cls(
            attn=nn.GatedAttentionParams.init(input_dim, hidden_dim, rng),
            head=nn.LinearHeadParams.init(input_dim, rng),
        )

    @property
    def input_dim(self) -> int:
        return self.attn.input_dim

    @property
    def hidden_dim(self) -> int:
        return self.attn.hidden_dim

    def tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = self.attn.tensors(prefix + "attn.")
        out.update(self.head.tensors(prefix + "head."))
        return out


def _forward(model: MilModel, instances: np.ndarray):
    scores, cache = nn.gated_attention_forward(model.attn, instances)
    z = scores @ cache.features
    logit = float(model.head.c @ z + model.head.b[0])
    p = nn.sigmoid(logit)
    return p, z, cache, logit


def predict_pseudo_bag(model: MilModel, instances: np.ndarray) -> float:
    """Probability sigm(c^T sum_k a_k f_k + b) for one pseudo-bag."""
    return _forward(model, instances)[0]


def bag_loss(model: MilModel, pseudo_bags: list[np.ndarray], label: int) -> float:
    """Mean BCE of the pseudo-bag predictions against the inherited label."""
    if not pseudo_bags:
        raise DimensionError("bag_loss needs at least one pseudo-bag")
    return float(
        np.mean([nn.bce_loss(predict_pseudo_bag(model, pb), label) for pb in pseudo_bags])
    )


def _check_partition(assignment: DivisionAssignment, bag: FeatureBag) -> None:
    if assignment.num_instances != bag.num_instances:
        raise DimensionError(
            f"assignment covers {assignment.num_instances} instances, bag "
            f"'{bag.bag_id}' has {bag.num_instances}"
        )
    if assignment.pseudo_bag.min() < 0 or assignment.pseudo_bag.max() >= assignment.n:
        raise DimensionError(f"pseudo-bag indices outside [0, {assignment.n})")


def train_bag_step(
    model: MilModel, assignment: DivisionAssignment, bag: FeatureBag, lr: float = DEFAULT_LR
) -> float:
    """One Adam step on the mean pseudo-bag BCE of this bag; returns pre-update loss."""
    _check_partition(assignment, bag)
    groups = assignment.groups()
    n = len(groups)
    grads = nn.zero_grads(model.tensors())
    total = 0.0
    for idx in groups:
        feats = bag.features[idx]
        p, z, cache, logit = _forward(model, feats)
        if not np.isfinite(logit):
            raise TrainingDivergenceError(f"non-finite MIL loss on bag '{bag.bag_id}'")
        total += nn.bce_loss(p, bag.label)
        dlogit = (p - bag.label) / n
        dw, dV, dU, _ = nn.gated_attention_backward(cache, d_weighted=dlogit * model.head.c)
        grads["attn.w"] += dw
        grads["attn.V"] += dV
        grads["attn.U"] += dU
        grads["head.c"] += dlogit * z
        grads["head.b"] += dlogit
    loss = total / n
    if not np.isfinite(loss):
        raise TrainingDivergenceError(f"non-finite MIL loss on bag '{bag.bag_id}'")
    nn.adam_step(model.tensors(), grads, model.state, lr)
    return loss


def infer_bag(model: MilModel, assignment: DivisionAssignment, bag: FeatureBag) -> float:
    """Bag probability: mean of the pseudo-bag probabilities."""
    _check_partition(assignment, bag)
    groups = assignment.groups()
    preds = [predict_pseudo_bag(model, bag.features[idx]) for idx in groups]
    return float(np.mean(preds))


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], config: dict) -> None:
    """Versioned binary checkpoint: JSON config echo + named float64 tensors."""
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype=np.float64)
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back; exact (bit-level) round-trip of the tensors."""
    data = Path(path).read_bytes()
    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(data):
            raise BagFormatError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, data, off)
        off += size
        return vals

    (magic,) = take("<4s")
    if magic != CHECKPOINT_MAGIC:
        raise BagFormatError(f"{path}: bad checkpoint magic {magic!r}")
    (version,) = take("<H")
    if version != CHECKPOINT_VERSION:
        raise BagFormatError(f"{path}: unsupported checkpoint version {version}")
    (blob_len,) = take("<I")
    config = json.loads(data[off : off + blob_len].decode("utf-8"))
    off += blob_len
    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I")
        size = int(np.prod(shape)) if ndim else 1
        nbytes = 8 * size
        if off + nbytes > len(data):
            raise BagFormatError(f"{path}: truncated tensor '{name}'")
        tensors[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).copy()
        off += nbytes
    if off != len(data):
        raise BagFormatError(f"{path}: {len(data) - off} trailing bytes")
    return tensors, config


def restore_tensors(target: dict[str, np.ndarray], saved: dict[str, np.ndarray]) -> None:
    """Copy saved tensor values into live parameter arrays, by name."""
    for name, arr in target.items():
        if name not in saved:
            raise BagFormatError(f"checkpoint missing tensor '{name}'")
        if saved[name].shape != arr.shape:
            raise DimensionError(
                f"checkpoint tensor '{name}' has shape {saved[name].shape}, expected {arr.shape}"
            )
        arr[...] = saved[name]
