"""Synthetic desk-scale segmentation world.

Images are Voronoi mosaics: random seed points partition each image into
contiguous cells, cells draw classes from a long-tailed prior (floor quota
plus weighted-remainder rounding, so the corpus histogram tracks the prior
closely while per-image composition still varies). Pixel features are
unit-normalized class means plus Gaussian noise. A fabricated classifier
scores pixels against the true means and gets corrupted per-pixel with
probability ``label_noise``, where corruption redirects the top class to a
uniformly random class — so accuracy lands near
1 - label_noise * (C-1)/C.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_io

DEFAULT_PRIOR = (0.52, 0.24, 0.12, 0.08, 0.04)


@dataclass
class WorldSpec:
    num_classes: int = 5
    feature_dim: int = 16
    class_prior: tuple = DEFAULT_PRIOR
    noise_sigma: float = 0.25
    label_noise: float = 0.375  # top-class accuracy ~ 1 - 0.8 * label_noise
    image_size: tuple = (64, 64)
    n_images: int = 40
    seed: int = 0
    cells_per_image: int = 40
    # softmax temperature of the fabricated scorer; 0.45 keeps its confidence
    # roughly in line with its ~0.70 accuracy instead of near-one-hot
    classifier_temp: float = 0.45

    def __post_init__(self):
        prior = np.asarray(self.class_prior, dtype=np.float64)
        if prior.shape[0] != self.num_classes:
            raise ValueError("class_prior length must equal num_classes")
        if abs(float(prior.sum()) - 1.0) > 1e-9 or (prior < 0).any():
            raise ValueError("class_prior must be a probability vector")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be nonnegative")
        if not 0.0 <= self.label_noise <= 1.0:
            raise ValueError("label_noise must lie in [0, 1]")


@dataclass
class SynthWorld:
    features: list        # per image (H, W, D) float32, unit pixel rows
    truth: list           # per image (H, W) uint16
    classifier_probs: list  # per image (H, W, C) float32, simplex pixels
    means: np.ndarray     # (C, D) unit class means
    spec: WorldSpec


def _class_means(num_classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal rows: pairwise distance sqrt(2), well separated."""
    if num_classes > dim:
        raise ValueError("feature_dim must be >= num_classes for orthonormal means")
    gauss = rng.standard_normal((dim, num_classes))
    q, _ = np.linalg.qr(gauss)
    return q.T[:num_classes].copy()


def _cell_classes(
    k: int, prior: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Quota class counts per image: floor(k * prior) plus weighted remainder."""
    quota = np.floor(k * prior).astype(np.int64)
    short = k - int(quota.sum())
    if short > 0:
        frac = k * prior - quota
        if frac.sum() == 0:
            frac = np.ones_like(prior)
        extra = rng.choice(prior.shape[0], size=short, replace=False, p=frac / frac.sum())
        quota[extra] += 1
    classes = np.repeat(np.arange(prior.shape[0]), quota)
    rng.shuffle(classes)
    return classes


def generate(spec: WorldSpec) -> SynthWorld:
    """Deterministic per seed: the same WorldSpec yields byte-identical arrays."""
    if spec.noise_sigma < 0.0:
        raise ValueError("noise_sigma must be nonnegative")
    prior = np.asarray(spec.class_prior, dtype=np.float64)
    h, w = spec.image_size
    root = np.random.SeedSequence(spec.seed)
    mean_seed, *image_seeds = root.spawn(spec.n_images + 1)
    means = _class_means(spec.num_classes, spec.feature_dim, np.random.default_rng(mean_seed))

    ys, xs = np.mgrid[0:h, 0:w]
    grid = np.stack([ys.ravel(), xs.ravel()], axis=1).astype(np.float64)

    features, truth, probs = [], [], []
    for seed in image_seeds:
        rng = np.random.default_rng(seed)
        seeds_yx = rng.uniform([0, 0], [h, w], size=(spec.cells_per_image, 2))
        cell_cls = _cell_classes(spec.cells_per_image, prior, rng)
        d2 = ((grid[:, None, :] - seeds_yx[None, :, :]) ** 2).sum(axis=2)
        labels = cell_cls[np.argmin(d2, axis=1)]

        z = means[labels] + spec.noise_sigma * rng.standard_normal(
            (h * w, spec.feature_dim)
        )
        z, _ = tensor_io.normalize_rows(z)

        scores = z @ means.T
        corrupt = rng.random(h * w) < spec.label_noise
        target = rng.integers(0, spec.num_classes, size=h * w)
        if corrupt.any():
            rows = np.flatnonzero(corrupt)
            top = np.argmax(scores[rows], axis=1)
            tgt = target[rows]
            top_vals = scores[rows, top]
            tgt_vals = scores[rows, tgt]
            scores[rows, top] = tgt_vals
            scores[rows, tgt] = top_vals
        scaled = scores / spec.classifier_temp
        scaled -= scaled.max(axis=1, keepdims=True)
        e = np.exp(scaled)
        cls_probs = e / e.sum(axis=1, keepdims=True)

        features.append(z.reshape(h, w, spec.feature_dim).astype(np.float32))
        truth.append(labels.reshape(h, w).astype(np.uint16))
        probs.append(cls_probs.reshape(h, w, spec.num_classes).astype(np.float32))

    return SynthWorld(
        features=features, truth=truth, classifier_probs=probs, means=means, spec=spec
    )


def oracle_accuracy(pred, truth, num_classes: int | None = None) -> float:
    """Micro-averaged pixel accuracy over aligned label-map lists.

    Pixels carrying the ignore sentinel in truth are excluded (requires
    ``num_classes``; with None every pixel counts).
    """
    if len(pred) == 0 or len(pred) != len(truth):
        raise ValueError("pred and truth must be aligned non-empty lists")
    hits = 0
    total = 0
    for p, t in zip(pred, truth):
        p = np.asarray(p).reshape(-1)
        t = np.asarray(t).reshape(-1)
        if p.shape != t.shape:
            raise ValueError("label map shapes differ")
        if num_classes is not None:
            keep = t < num_classes
            p, t = p[keep], t[keep]
        hits += int((p == t).sum())
        total += t.size
    if total == 0:
        raise ValueError("no pixels to score")
    return hits / total
