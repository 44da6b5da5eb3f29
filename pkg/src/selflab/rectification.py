"""Pseudo-label rectification and the loss utilities around it.

Rectification takes the per-pixel argmax of the elementwise product of two
probability maps: the cluster-assignment map acts as a weight map modulating
the classifier's soft pseudo labels. The cluster side reflects the target
data's own structure, so it corrects pixels the source-biased classifier
gets wrong.
"""

from __future__ import annotations

import numpy as np

CLAMP = 1e-12


def _check_probmap(p: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim < 2:
        raise ValueError(f"{name} must have a trailing class axis")
    if (arr < 0.0).any():
        raise ValueError(f"{name} has negative entries")
    if np.any(np.abs(arr.sum(axis=-1) - 1.0) > 1e-6):
        raise ValueError(f"{name} pixels must sum to 1")
    return arr


def rectify(
    cluster_probs: np.ndarray, classifier_probs: np.ndarray
) -> tuple[np.ndarray, int]:
    """Argmax of the elementwise product of the two maps, per pixel.

    Ties break toward the lowest class index. Pixels whose product vector is
    all zero (possible only with exact zeros in both maps) fall back to the
    classifier argmax and are counted.

    Returns (hard label map, zero-product pixel count).
    """
    sl = _check_probmap(cluster_probs, "cluster_probs")
    st = _check_probmap(classifier_probs, "classifier_probs")
    if sl.shape != st.shape:
        raise ValueError(f"shape mismatch {sl.shape} vs {st.shape}")
    product = sl * st
    labels = np.argmax(product, axis=-1)
    dead = product.sum(axis=-1) == 0.0
    n_dead = int(dead.sum())
    if n_dead:
        labels = np.where(dead, np.argmax(st, axis=-1), labels)
    return labels.astype(np.uint16), n_dead


def cross_entropy(
    pred: np.ndarray,
    target: np.ndarray,
    num_classes: int,
    reduction: str = "mean",
    return_clamp_count: bool = False,
):
    """Cross-entropy of a probability map against hard labels.

    Ignore pixels are skipped. Predicted probabilities below 1e-12 at the
    target class are clamped there and counted. ``reduction`` is "mean"
    (default, per counted pixel) or "sum".
    """
    p = _check_probmap(pred, "pred")
    lab = np.asarray(target).reshape(-1)
    flat = p.reshape(-1, p.shape[-1])
    if flat.shape[0] != lab.shape[0]:
        raise ValueError("prediction and target pixel counts differ")
    keep = lab < num_classes
    lab = lab[keep]
    if lab.size == 0:
        raise ValueError("no non-ignore pixels to score")
    at_target = flat[keep, lab]
    n_clamped = int((at_target < CLAMP).sum())
    losses = -np.log(np.maximum(at_target, CLAMP))
    if reduction == "mean":
        value = float(losses.mean())
    elif reduction == "sum":
        value = float(losses.sum())
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    if return_clamp_count:
        return value, n_clamped
    return value


def symmetric_kl(p: np.ndarray, q: np.ndarray) -> float:
    """Sum over pixels of KL(p||q) + KL(q||p), both maps clamped at 1e-12."""
    a = _check_probmap(p, "p")
    b = _check_probmap(q, "q")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    a = np.maximum(a, CLAMP)
    b = np.maximum(b, CLAMP)
    log_ratio = np.log(a) - np.log(b)
    return float((a * log_ratio).sum() - (b * log_ratio).sum())


def total_loss(
    l_seg_t: float,
    l_seg_s: float,
    l_sl: float,
    l_reg: float,
    lambda1: float,
    lambda2: float,
) -> float:
    """Weighted sum (l_seg_t + l_seg_s) + lambda1 * l_sl + lambda2 * l_reg."""
    return (l_seg_t + l_seg_s) + lambda1 * l_sl + lambda2 * l_reg
