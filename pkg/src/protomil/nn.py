"""Dense math and exact reverse-mode gradients for the two small networks.

Everything is plain float64 numpy.  Forward passes return a cache of the
intermediates their hand-written backward pass needs; gradients are exact
analytic expressions and are checked against central finite differences in
the test suite.  Forward ops are pure; only ``adam_step`` mutates state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

BCE_EPS = 1e-12


def sigmoid(x):
    """Numerically stable logistic function; preserves scalar/array shape.

    Single exp pass: z = exp(-|x|) never overflows, and the two branches
    1/(1+z) (x >= 0) and z/(1+z) (x < 0) are the usual stable split.  This
    runs inside the division loop, so it is worth keeping gather-free.
    """
    arr = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(arr))
    out = np.where(arr >= 0, 1.0, z) / (1.0 + z)
    return float(out) if np.ndim(x) == 0 else out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax over a 1-D array."""
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class GatedAttentionParams:
    """Trainable tensors of one gated-attention scorer: w (h,), V (h,d), U (h,d)."""

    w: np.ndarray
    V: np.ndarray
    U: np.ndarray

    @property
    def hidden_dim(self) -> int:
        return self.w.shape[0]

    @property
    def input_dim(self) -> int:
        return self.V.shape[1]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        return cls(
            w=_uniform_init(rng, (hidden_dim,), hidden_dim),
            V=_uniform_init(rng, (hidden_dim, input_dim), input_dim),
            U=_uniform_init(rng, (hidden_dim, input_dim), input_dim),
        )

    def tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + "w": self.w, prefix + "V": self.V, prefix + "U": self.U}


@dataclass
class LinearHeadParams:
    """One linear unit over an m-dim embedding: c (m,) and bias b (1,)."""

    c: np.ndarray
    b: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.c.shape[0]

    @classmethod
    def init(cls, input_dim: int, rng: np.random.Generator):
        return cls(
            c=_uniform_init(rng, (input_dim,), input_dim),
            b=_uniform_init(rng, (1,), input_dim),
        )

    def tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + "c": self.c, prefix + "b": self.b}


@dataclass
class AttentionCache:
    """Intermediates of one gated-attention forward, consumed by backward."""

    params: GatedAttentionParams
    features: np.ndarray  # (K, d)
    T: np.ndarray  # tanh branch, (K, h)
    S: np.ndarray  # sigmoid branch, (K, h)
    G: np.ndarray  # gated product T*S, (K, h)
    scores: np.ndarray  # softmax output, (K,)


def gated_attention_forward(
    params: GatedAttentionParams, features: np.ndarray
) -> tuple[np.ndarray, AttentionCache]:
    """Attention scores softmax_k(w^T (tanh(V f_k) * sigm(U f_k))) plus cache."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise DimensionError(f"features must be a K x d matrix with K >= 1, got shape {features.shape}")
    if features.shape[1] != params.input_dim:
        raise DimensionError(
            f"feature dim {features.shape[1]} != parameter input dim {params.input_dim}"
        )
    T = np.tanh(features @ params.V.T)
    S = sigmoid(features @ params.U.T)
    G = T * S
    scores = softmax(G @ params.w)
    return scores, AttentionCache(params, features, T, S, G, scores)


def gated_attention_backward(
    cache: AttentionCache,
    d_scores: np.ndarray | None = None,
    d_weighted: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients (dw, dV, dU, dfeatures) for a scalar loss.

    Upstream gradients may arrive through the scores a (``d_scores``, shape K)
    and/or through the attention-weighted sum z = sum_k a_k f_k
    (``d_weighted``, shape d).  Either may be None (treated as zero).
    """
    F = cache.features
    K, d = F.shape
    a = cache.scores
    da = np.zeros(K)
    if d_scores is not None:
        d_scores = np.asarray(d_scores, dtype=np.float64)
        if d_scores.shape != (K,):
            raise DimensionError(f"d_scores shape {d_scores.shape} does not match cache K={K}")
        da = da + d_scores
    if d_weighted is not None:
        d_weighted = np.asarray(d_weighted, dtype=np.float64)
        if d_weighted.shape != (d,):
            raise DimensionError(f"d_weighted shape {d_weighted.shape} does not match cache d={d}")
        da = da + F @ d_weighted
    # softmax jacobian applied to da
    dlogits = a * (da - a @ da)
    dw = cache.G.T @ dlogits
    dG = np.outer(dlogits, cache.params.w)
    dT = dG * cache.S
    dS = dG * cache.T
    dA = dT * (1.0 - cache.T * cache.T)
    dB = dS * cache.S * (1.0 - cache.S)
    dV = dA.T @ F
    dU = dB.T @ F
    dF = dA @ cache.params.V + dB @ cache.params.U
    if d_weighted is not None:
        dF = dF + np.outer(a, d_weighted)
    return dw, dV, dU, dF


def bce_loss(prediction: float, label: int) -> float:
    """Binary cross-entropy with the prediction clamped into [eps, 1-eps]."""
    p = min(max(float(prediction), BCE_EPS), 1.0 - BCE_EPS)
    y = float(label)
    return -(y * math.log(p) + (1.0 - y) * math.log(1.0 - p))


@dataclass
class AdamState:
    """First/second moment estimates plus the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]):
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place on the parameter arrays."""
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != param shape {p.shape} for '{name}'")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Fresh zero gradient accumulators matching a parameter dict."""
    return {k: np.zeros_like(p) for k, p in params.items()}
