"""Datasets and client-side data plumbing: synthetic Gaussian blobs, the
big-endian IDX image format, and Dirichlet non-IID partitioning."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Base class for malformed IDX files."""


class BadMagicError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


@dataclass(frozen=True)
class DataShard:
    """One client's local training data.

    Attributes:
        features: (k, input_dim) float array.
        labels: (k,) integer class array.
        owner: client id the shard belongs to.
    """

    features: np.ndarray
    labels: np.ndarray
    owner: int

    def __post_init__(self):
        if len(self.features) == 0:
            raise ValueError(f"shard for client {self.owner} is empty")
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be (k, d), labels (k,)")
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels disagree on sample count")

    def __len__(self) -> int:
        return len(self.labels)


def synth_blobs(
    num_classes: int,
    input_dim: int,
    per_class: int,
    spread: float,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian point clouds, one per class, around seeded random centers.

    Returns (features, labels) with per_class samples for every class, in
    class order. Deterministic for a given seed.
    """
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-1.0, 1.0, size=(num_classes, input_dim))
    features = np.empty((num_classes * per_class, input_dim), dtype=np.float64)
    labels = np.empty(num_classes * per_class, dtype=np.int64)
    for c in range(num_classes):
        block = slice(c * per_class, (c + 1) * per_class)
        features[block] = centers[c] + spread * rng.standard_normal((per_class, input_dim))
        labels[block] = c
    return features, labels


def _read_exact(f, count: int, path: Path) -> bytes:
    buf = f.read(count)
    if len(buf) != count:
        raise TruncatedFileError(f"{path}: expected {count} more bytes, got {len(buf)}")
    return buf


def load_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Parse an IDX image/label file pair (the MNIST container format).

    Images are big-endian uint8 pixels under magic 0x00000803 with header
    (count, rows, cols); labels are uint8 under magic 0x00000801 with
    (count). Pixels come back flattened and scaled to [0, 1].

    Raises:
        BadMagicError / TruncatedFileError / CountMismatchError on the
        corresponding defects.
    """
    images_path = Path(images_path)
    labels_path = Path(labels_path)

    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise BadMagicError(
                f"{images_path}: magic 0x{magic:08x} != 0x{IDX_IMAGES_MAGIC:08x}"
            )
        raw = _read_exact(f, count * rows * cols, images_path)
    features = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    features = features.reshape(count, rows * cols)

    with open(labels_path, "rb") as f:
        magic, label_count = struct.unpack(">II", _read_exact(f, 8, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise BadMagicError(
                f"{labels_path}: magic 0x{magic:08x} != 0x{IDX_LABELS_MAGIC:08x}"
            )
        raw = _read_exact(f, label_count, labels_path)
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if count != label_count:
        raise CountMismatchError(
            f"{count} images in {images_path} vs {label_count} labels in {labels_path}"
        )
    return features, labels


def _largest_remainder_counts(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total``, closest to the real-valued quotas."""
    quotas = proportions * total
    counts = np.floor(quotas).astype(np.int64)
    shortfall = total - int(counts.sum())
    if shortfall > 0:
        # stable sort so quota ties go to the lower client index
        order = np.argsort(-(quotas - counts), kind="stable")
        counts[order[:shortfall]] += 1
    return counts


def dirichlet_partition(
    features: np.ndarray,
    labels: np.ndarray,
    n: int,
    alpha: float,
    seed: int,
) -> list[DataShard]:
    """Split a dataset into n client shards with Dirichlet class skew.

    For each class, client proportions are drawn from Dirichlet(alpha) and
    the class's samples are dealt out by largest-remainder rounding. Every
    client ends up with at least one sample (rebalanced from the largest
    shard when needed) and the shards partition the dataset exactly.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if n > len(labels):
        raise ValueError(f"cannot split {len(labels)} samples across {n} clients")

    rng = np.random.default_rng(seed)
    assigned: list[list[int]] = [[] for _ in range(n)]
    for c in np.unique(labels):
        class_idx = np.flatnonzero(labels == c)
        rng.shuffle(class_idx)
        proportions = rng.dirichlet(np.full(n, alpha))
        counts = _largest_remainder_counts(proportions, len(class_idx))
        start = 0
        for client, count in enumerate(counts):
            assigned[client].extend(class_idx[start : start + count].tolist())
            start += count

    # nobody may sit out a round: top up empty shards from the largest one
    while any(len(a) == 0 for a in assigned):
        empty = min(i for i in range(n) if len(assigned[i]) == 0)
        donor = max(range(n), key=lambda i: (len(assigned[i]), -i))
        assigned[empty].append(assigned[donor].pop())
        logger.debug("moved one sample from client %d to empty client %d", donor, empty)

    return [
        DataShard(features=features[idx], labels=labels[idx], owner=client)
        for client, idx in enumerate(assigned)
    ]
