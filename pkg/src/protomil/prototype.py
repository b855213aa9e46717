"""Bag prototypes: static mean vectors and trainable attention-weighted sums.

The attention prototype comes from a gated-attention scorer owned by a
``PrototypeModule``, which is trained with its own bag-level classification
loss (linear head + sigmoid + BCE against the bag label) so the prototype can
adapt to the task.  The module shares the gated-attention math with the MIL
classifier but never shares parameter instances with it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .bagdata import FeatureBag
from .errors import TrainingDivergenceError
from .seeds import make_rng

# The scorer is deliberately narrow: it emits one pooling weight per instance
# (not a representation) and runs inside the per-epoch division loop, where it
# has to stay cheap next to the clustering baseline it is compared against.
DEFAULT_HIDDEN_DIM = 8
DEFAULT_LR = 1e-4


@dataclass(frozen=True)
class Prototype:
    """A d-vector summarizing one bag, plus the scores that produced it."""

    vector: np.ndarray
    kind: str  # "mean" | "attention"
    attention_scores: np.ndarray | None = None


def mean_prototype(bag: FeatureBag) -> Prototype:
    """Columnwise mean of the bag's instance features."""
    return Prototype(vector=bag.features.mean(axis=0), kind="mean")


class PrototypeModule:
    """Gated-attention scorer + linear classification head + Adam state."""

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

    def tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = self.attn.tensors(prefix + "attn.")
        out.update(self.head.tensors(prefix + "head."))
        return out


def attention_prototype(module: PrototypeModule, bag: FeatureBag) -> Prototype:
    """Attention-weighted sum of the bag's instances under the module's scorer."""
    scores, _ = nn.gated_attention_forward(module.attn, bag.features)
    return Prototype(vector=scores @ bag.features, kind="attention", attention_scores=scores)


def train_prototype_step(module: PrototypeModule, bag: FeatureBag, lr: float = DEFAULT_LR) -> float:
    """One Adam step on the module's own bag-level BCE; returns the pre-update loss."""
    scores, cache = nn.gated_attention_forward(module.attn, bag.features)
    z = scores @ bag.features
    logit = float(module.head.c @ z + module.head.b[0])
    p = nn.sigmoid(logit)
    loss = nn.bce_loss(p, bag.label)
    if not (np.isfinite(logit) and np.isfinite(loss)):
        raise TrainingDivergenceError(f"non-finite prototype loss on bag '{bag.bag_id}'")
    dlogit = p - bag.label
    dw, dV, dU, _ = nn.gated_attention_backward(cache, d_weighted=dlogit * module.head.c)
    grads = {
        "attn.w": dw,
        "attn.V": dV,
        "attn.U": dU,
        "head.c": dlogit * z,
        "head.b": np.array([dlogit]),
    }
    nn.adam_step(module.tensors(), grads, module.state, lr)
    return loss


def export_prototypes(
    rows: list[tuple[str, int, np.ndarray]], path: str | Path
) -> None:
    """Write prototype vectors as CSV with columns bag_id,label,v_0..v_{d-1}."""
    rows = list(rows)
    if not rows:
        raise ValueError("no prototypes to export")
    dim = len(rows[0][2])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bag_id", "label"] + [f"v_{j}" for j in range(dim)])
        for bag_id, label, vector in rows:
            writer.writerow([bag_id, label] + [repr(float(v)) for v in vector])
