"""Running estimate of the target class distribution (the transport row marginal).

Initialized from the corpus-wide histogram of hard classifier labels, then
tracked as an exponential moving average of each image's rectified-label
distribution. ``as_marginal`` floors the estimate before it constrains the
transport solve: a marginal entry of exactly zero would starve that class
permanently, since multiplicative scaling cannot create mass from nothing.
"""

from __future__ import annotations

import numpy as np

from .sampling import class_distribution

_SUM_TOL = 1e-9


def check_simplex(probs: np.ndarray, name: str = "distribution") -> np.ndarray:
    v = np.asarray(probs, dtype=np.float64)
    if (v < 0.0).any():
        raise ValueError(f"{name} has negative entries")
    if abs(float(v.sum()) - 1.0) > _SUM_TOL:
        raise ValueError(f"{name} sums to {float(v.sum())}, not 1")
    return v


def init_from_corpus(hard_pseudo_labels, num_classes: int) -> np.ndarray:
    """Global class histogram over all images, ignore pixels excluded."""
    counts = np.zeros(num_classes, dtype=np.int64)
    n_maps = 0
    for labels in hard_pseudo_labels:
        lab = np.asarray(labels).reshape(-1)
        counts += np.bincount(lab[lab < num_classes], minlength=num_classes)
        n_maps += 1
    if n_maps == 0 or counts.sum() == 0:
        raise ValueError("corpus has no labeled pixels")
    return counts.astype(np.float64) / counts.sum()


def ema_update(delta: np.ndarray, delta_obs: np.ndarray, alpha: float) -> np.ndarray:
    """alpha * delta + (1 - alpha) * delta_obs; stays on the simplex."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    d = check_simplex(delta, "delta")
    o = check_simplex(delta_obs, "delta_obs")
    return alpha * d + (1.0 - alpha) * o


def as_marginal(delta: np.ndarray, floor: float) -> np.ndarray:
    """Pin entries below ``floor`` at the floor, rescale the rest to sum 1.

    The floor holds exactly in the output (plain renormalization would push
    pinned entries back below it). Rescaling can drag further entries under
    the floor, so pinning repeats until stable; terminates within C passes.
    """
    d = check_simplex(delta, "delta")
    if floor < 0.0 or floor * d.shape[0] >= 1.0:
        raise ValueError("floor must satisfy 0 <= floor * C < 1")
    out = d.copy()
    pinned = np.zeros(d.shape[0], dtype=bool)
    for _ in range(d.shape[0]):
        low = (out < floor) & ~pinned
        if not low.any():
            break
        pinned |= low
        out[pinned] = floor
        free = ~pinned
        budget = 1.0 - floor * pinned.sum()
        out[free] = d[free] * (budget / d[free].sum())
    return out


__all__ = [
    "check_simplex",
    "class_distribution",
    "init_from_corpus",
    "ema_update",
    "as_marginal",
]
