"""Class-balanced per-image pixel sampling and the FIFO feature memory bank.

Each image contributes M pixels: floor(M * share_c) drawn uniformly without
replacement from every class present, and the remainder drawn uniformly from
the not-yet-chosen eligible pixels. Sampled features accumulate in a
fixed-capacity FIFO queue that augments later batches so the online
clustering sees a class-representative sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import tensor_io


@dataclass
class SampleSet:
    features: np.ndarray        # (M, D) unit rows
    source_indices: np.ndarray  # (M, 2) int64, (image_id, pixel_index)
    class_hints: np.ndarray     # (M,) int32 hard label used for balancing


def class_distribution(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Per-class pixel share of one label map, ignore pixels excluded.

    Raises ValueError when every pixel carries the ignore sentinel.
    """
    lab = np.asarray(labels).reshape(-1)
    tensor_io.check_labels(lab, num_classes)
    counts = np.bincount(lab[lab < num_classes], minlength=num_classes)
    total = int(counts.sum())
    if total == 0:
        raise ValueError("label map has no non-ignore pixels")
    return counts.astype(np.float64) / total


def balanced_sample(
    features: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    m: int,
    rng: np.random.Generator,
    image_id: int = 0,
) -> SampleSet:
    """Draw M pixels with per-class quotas floor(M * share_c).

    Zero-norm feature rows are excluded from eligibility (flagged upstream by
    normalize_rows); ignore pixels never qualify. The quota shares come from
    the label counts alone, so floor(M * share_c) <= count_c whenever
    m <= non-ignore count.
    """
    lab = np.asarray(labels).reshape(-1)
    z = np.asarray(features, dtype=np.float64).reshape(lab.shape[0], -1)
    valid = lab < num_classes
    n_valid = int(valid.sum())
    if m > n_valid:
        raise ValueError(f"requested {m} samples from {n_valid} non-ignore pixels")

    delta = class_distribution(lab, num_classes)
    eligible = valid & (np.linalg.norm(z, axis=1) > 0.0)

    chosen: list[np.ndarray] = []
    hints: list[np.ndarray] = []
    taken = np.zeros(lab.shape[0], dtype=bool)
    for c in range(num_classes):
        quota = int(np.floor(m * delta[c]))
        if quota == 0:
            continue
        pool = np.flatnonzero(eligible & (lab == c))
        if pool.shape[0] < quota:
            raise ValueError(
                f"class {c}: quota {quota} exceeds {pool.shape[0]} eligible pixels "
                "(zero-norm features removed too many)"
            )
        pick = rng.choice(pool, size=quota, replace=False)
        chosen.append(pick)
        hints.append(np.full(quota, c, dtype=np.int32))
        taken[pick] = True

    remainder = m - sum(p.shape[0] for p in chosen)
    if remainder > 0:
        pool = np.flatnonzero(eligible & ~taken)
        if pool.shape[0] < remainder:
            raise ValueError("not enough eligible pixels left for the remainder")
        pick = rng.choice(pool, size=remainder, replace=False)
        chosen.append(pick)
        hints.append(lab[pick].astype(np.int32))

    idx = np.concatenate(chosen)
    source = np.stack([np.full(m, image_id, dtype=np.int64), idx.astype(np.int64)], axis=1)
    return SampleSet(
        features=z[idx],
        source_indices=source,
        class_hints=np.concatenate(hints),
    )


class FeatureBank:
    """Fixed-capacity FIFO queue of pixel features with class hints.

    Single-writer by contract; eviction is strictly oldest-first via a ring
    buffer. ``snapshot`` returns contents oldest-first.
    """

    def __init__(self, capacity: int, dim: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.dim = dim
        self._features = np.zeros((capacity, dim), dtype=np.float64)
        self._hints = np.zeros(capacity, dtype=np.int32)
        self._cursor = 0
        self._size = 0
        self.total_pushed = 0
        self.total_evicted = 0

    @property
    def size(self) -> int:
        return self._size

    def push(self, features: np.ndarray, class_hints: np.ndarray) -> None:
        """Append a batch, evicting the oldest entries beyond capacity."""
        feats = np.asarray(features, dtype=np.float64).reshape(-1, self.dim)
        hints = np.asarray(class_hints, dtype=np.int32).reshape(-1)
        if feats.shape[0] != hints.shape[0]:
            raise ValueError("features and class_hints length mismatch")
        n = feats.shape[0]
        self.total_pushed += n
        if n >= self.capacity:
            # batch alone overfills the queue: only its newest entries survive
            self.total_evicted += self._size + (n - self.capacity)
            self._features[:] = feats[n - self.capacity:]
            self._hints[:] = hints[n - self.capacity:]
            self._cursor = 0
            self._size = self.capacity
            return
        overflow = max(0, self._size + n - self.capacity)
        self.total_evicted += overflow
        end = self._cursor + n
        if end <= self.capacity:
            self._features[self._cursor:end] = feats
            self._hints[self._cursor:end] = hints
        else:
            first = self.capacity - self._cursor
            self._features[self._cursor:] = feats[:first]
            self._hints[self._cursor:] = hints[:first]
            self._features[:end - self.capacity] = feats[first:]
            self._hints[:end - self.capacity] = hints[first:]
        self._cursor = end % self.capacity
        self._size = min(self.capacity, self._size + n)

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        """Copy of (features, hints) in insertion order, oldest first."""
        if self._size < self.capacity:
            return self._features[:self._size].copy(), self._hints[:self._size].copy()
        order = np.r_[self._cursor:self.capacity, 0:self._cursor]
        return self._features[order].copy(), self._hints[order].copy()

    def save(self, path_tensor, path_json) -> None:
        """Checkpoint as SLT1 (size x D) plus cursor metadata, for resume."""
        feats, hints = self.snapshot()
        tensor_io.save_tensor(path_tensor, feats.astype(np.float32))
        meta = {
            "capacity": self.capacity,
            "dim": self.dim,
            "size": self._size,
            "cursor": 0,  # snapshot is rewritten oldest-first
            "class_hints": hints.tolist(),
            "total_pushed": self.total_pushed,
            "total_evicted": self.total_evicted,
        }
        with open(path_json, "w") as fh:
            json.dump(meta, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path_tensor, path_json) -> "FeatureBank":
        with open(path_json) as fh:
            meta = json.load(fh)
        bank = cls(int(meta["capacity"]), int(meta["dim"]))
        feats = tensor_io.load_tensor(path_tensor).astype(np.float64)
        hints = np.asarray(meta["class_hints"], dtype=np.int32)
        if feats.shape[0] != int(meta["size"]):
            raise ValueError("bank checkpoint size mismatch")
        bank.push(feats, hints)
        bank.total_pushed = int(meta.get("total_pushed", bank.total_pushed))
        bank.total_evicted = int(meta.get("total_evicted", bank.total_evicted))
        return bank


def push_batch(bank: FeatureBank, s: SampleSet) -> FeatureBank:
    """Append a sample set's features to the bank (mutates and returns it)."""
    bank.push(s.features, s.class_hints)
    return bank


def augment(current: SampleSet, bank: FeatureBank) -> tuple[np.ndarray, slice]:
    """Stack the current batch ahead of the bank contents.

    Returns (features (M + bank size, D), span) where ``span`` slices the
    current batch's rows (and, transposed, its plan columns) back out.
    """
    feats, _ = bank.snapshot()
    m = current.features.shape[0]
    if feats.shape[0] == 0:
        return current.features.copy(), slice(0, m)
    return np.vstack([current.features, feats]), slice(0, m)
