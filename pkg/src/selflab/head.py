"""Linear self-labeling head: prototype init, temperature softmax, SGDM training.

The head is a bias-free C x D matrix scoring unit-norm features against one
weight row per class. Rows are initialized to per-class feature means under
hard classifier labels so cluster indices line up with classifier classes
from the start. A slowly-tracking momentum copy produces the assignment maps
used downstream.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor_io


@dataclass
class HeadWeights:
    matrix: np.ndarray  # (C, D) float64
    version: int = 0

    def copy(self) -> "HeadWeights":
        return HeadWeights(self.matrix.copy(), self.version)


@dataclass
class TrainConfig:
    """SGDM hyperparameters with polynomial learning-rate decay."""

    tau: float = 0.08
    learning_rate: float = 5e-4
    lr_decay_power: float = 0.9
    weight_decay: float = 2e-4
    momentum: float = 0.9
    total_steps: int = 1000

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    def lr_at(self, step_index: int) -> float:
        """Base rate scaled by (1 - k/K)**power, clamped at zero."""
        frac = 1.0 - step_index / self.total_steps
        return self.learning_rate * max(frac, 0.0) ** self.lr_decay_power


def init_from_prototypes(
    features, hard_labels, num_classes: int
) -> HeadWeights:
    """Set each weight row to the mean unit feature of its class.

    ``features`` and ``hard_labels`` are aligned sequences, one entry per
    image: (H, W, D) or (N, D) features and (H, W) or (N,) labels. Pixels
    carrying the ignore sentinel are skipped. A class with no pixels gets a
    zero row and a warning; the marginal floor downstream keeps such classes
    from being starved indefinitely.
    """
    dim = np.asarray(features[0]).shape[-1]
    sums = np.zeros((num_classes, dim), dtype=np.float64)
    counts = np.zeros(num_classes, dtype=np.int64)
    for feats, labels in zip(features, hard_labels):
        z = np.asarray(feats, dtype=np.float64).reshape(-1, dim)
        lab = np.asarray(labels).reshape(-1)
        keep = lab < num_classes
        z, lab = z[keep], lab[keep]
        np.add.at(sums, lab, z)
        counts += np.bincount(lab, minlength=num_classes)
    empty = counts == 0
    if empty.any():
        warnings.warn(
            f"classes {np.flatnonzero(empty).tolist()} have no labeled pixels; "
            "their prototype rows are zero"
        )
    matrix = sums / np.where(empty, 1, counts)[:, None]
    return HeadWeights(matrix=matrix, version=0)


def forward(
    w: HeadWeights, features: np.ndarray, tau: float
) -> tuple[np.ndarray, np.ndarray]:
    """Score features and softmax per sample.

    Returns (probs (C, N) with simplex columns, raw scores (C, N)). The raw
    scores feed the transport solver; the softmax uses temperature ``tau``
    with log-sum-exp stabilization.
    """
    z = np.asarray(features, dtype=np.float64)
    scores = w.matrix @ z.T
    scaled = scores / tau
    scaled -= scaled.max(axis=0, keepdims=True)
    e = np.exp(scaled)
    probs = e / e.sum(axis=0, keepdims=True)
    return probs, scores


def sl_loss_and_grad(
    w: HeadWeights, features: np.ndarray, targets: np.ndarray, tau: float
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy against fixed simplex targets, with exact gradient.

    loss = -(1/M) sum_m sum_c targets[c,m] * log p[c,m]
    grad = (1/(M*tau)) (P - targets) @ Z

    Targets take no gradient. Columns must sum to 1; a zero column is a
    contract violation and raises.
    """
    z = np.asarray(features, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    m = z.shape[0]
    if t.shape != (w.matrix.shape[0], m):
        raise ValueError(f"targets shape {t.shape} does not match (C, M)")
    col = t.sum(axis=0)
    if np.any(np.abs(col - 1.0) > 1e-6):
        raise ValueError("target columns must sum to 1")
    scaled = (w.matrix @ z.T) / tau
    mx = scaled.max(axis=0, keepdims=True)
    lse = mx + np.log(np.exp(scaled - mx).sum(axis=0, keepdims=True))
    log_p = scaled - lse
    loss = float(-(t * log_p).sum() / m)
    probs = np.exp(log_p)
    grad = (probs - t) @ z / (m * tau)
    return loss, grad


def sgd_step(
    w: HeadWeights,
    grad: np.ndarray,
    cfg: TrainConfig,
    step_index: int,
    momentum_buffer: np.ndarray | None = None,
) -> tuple[HeadWeights, np.ndarray]:
    """One SGDM update; returns the new weights and momentum buffer.

    Weight decay is folded into the gradient before the momentum
    accumulation (coupled form):

        buf <- momentum * buf + (grad + weight_decay * w)
        w   <- w - lr_at(step_index) * buf
    """
    if grad.shape != w.matrix.shape:
        raise ValueError("gradient shape does not match weights")
    if momentum_buffer is None:
        momentum_buffer = np.zeros_like(w.matrix)
    buf = cfg.momentum * momentum_buffer + (grad + cfg.weight_decay * w.matrix)
    matrix = w.matrix - cfg.lr_at(step_index) * buf
    return HeadWeights(matrix=matrix, version=w.version + 1), buf


def ema_update(target: HeadWeights, source: HeadWeights, momentum: float) -> HeadWeights:
    """target <- momentum * target + (1 - momentum) * source, elementwise."""
    if target.matrix.shape != source.matrix.shape:
        raise ValueError("weight shapes do not match")
    matrix = momentum * target.matrix + (1.0 - momentum) * source.matrix
    return HeadWeights(matrix=matrix, version=target.version + 1)


def save_weights(path_tensor, path_json, w: HeadWeights, tau: float) -> None:
    """Serialize weights as an SLT1 tensor plus a small JSON sidecar."""
    tensor_io.save_tensor(path_tensor, w.matrix.astype(np.float32))
    with open(path_json, "w") as fh:
        json.dump({"version": w.version, "tau": tau}, fh, indent=2)
        fh.write("\n")


def load_weights(path_tensor, path_json) -> tuple[HeadWeights, float]:
    matrix = tensor_io.load_tensor(path_tensor).astype(np.float64)
    with open(path_json) as fh:
        meta = json.load(fh)
    return HeadWeights(matrix=matrix, version=int(meta["version"])), float(meta["tau"])
