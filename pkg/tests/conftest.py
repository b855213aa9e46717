"""Shared test helpers: finite-difference oracle and random bag construction."""

from __future__ import annotations

import numpy as np

from protomil.bagdata import FeatureBag


def finite_diff_grads(loss_fn, tensors: dict[str, np.ndarray], step: float = 1e-5):
    """Central finite differences of a scalar loss wrt every tensor entry.

    Perturbs the live arrays in place and restores them, so ``loss_fn`` can
    simply close over the model under test.
    """
    grads = {}
    for name, arr in tensors.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn()
            flat[i] = orig - step
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads[name] = g
    return grads


def max_rel_error(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray],
                  floor: float = 1e-5) -> float:
    """Worst elementwise relative error between two gradient dicts."""
    worst = 0.0
    for name in analytic:
        a = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        f = np.asarray(numeric[name], dtype=np.float64).reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


def random_bag(rng: np.random.Generator, k: int, d: int, label: int | None = None,
               bag_id: str = "bag", coords: bool = False) -> FeatureBag:
    feats = rng.normal(size=(k, d))
    xy = rng.integers(0, 100, size=(k, 2)) if coords else None
    lab = int(rng.integers(0, 2)) if label is None else label
    return FeatureBag(bag_id=bag_id, label=lab, features=feats, coords=xy)
