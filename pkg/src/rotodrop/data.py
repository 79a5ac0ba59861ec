"""Dataset loading: IDX-format MNIST files plus synthetic generators.

There is no downloader here; loaders expect local files and the CLI
prints fetch instructions when they are missing.  Synthetic datasets
(xor, gaussian blobs) exist so experiments and CI can run offline and
deterministically.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

DATA_DIR_ENV = "ROTODROP_DATA_DIR"

FETCH_INSTRUCTIONS = """\
MNIST files were not found under {root!r}.
Place the standard IDX quartet there (decompressed):
  train-images-idx3-ubyte   train-labels-idx1-ubyte
  t10k-images-idx3-ubyte    t10k-labels-idx1-ubyte
e.g. download the four .gz archives from a MNIST mirror and `gunzip` them,
or point {env} (or --data-dir) at a directory that already has them."""


class IdxError(ValueError):
    """Base error for malformed IDX files."""


class IdxMagicError(IdxError):
    """File starts with the wrong magic number for the requested kind."""


class IdxTruncatedError(IdxError):
    """File ends before the payload promised by its header."""


class IdxCountMismatchError(IdxError):
    """Paired image/label files disagree on item count."""


@dataclass
class Dataset:
    """Feature vectors in [0, 1] with integer class labels."""

    images: np.ndarray          # (N, d) float64 in [0, 1]
    labels: np.ndarray          # (N,) int64 in [0, num_classes)
    split: str = "train"
    num_classes: int = 10

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2:
            raise ValueError(f"images must be 2-D (N, d), got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"images ({len(self.images)}) and labels ({len(self.labels)}) differ in length")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("features must lie in [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{self.labels.min()}, {self.labels.max()}]")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.images.shape[1]


def _read_exact(f, count: int, path, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise IdxTruncatedError(
            f"{path}: truncated while reading {what} ({len(data)} of {count} bytes)")
    return data


def load_idx_images(path) -> np.ndarray:
    """Parse a big-endian IDX image file to a (count, rows, cols) array in [0, 1]."""
    with open(path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, path, "header"))
        if magic != IDX_IMAGE_MAGIC:
            raise IdxMagicError(
                f"{path}: bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
        raw = _read_exact(f, count * rows * cols, path, f"{count}x{rows}x{cols} pixels")
        if f.read(1):
            raise IdxError(f"{path}: trailing bytes after {count} images")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)
    return pixels.astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    """Parse a big-endian IDX label file to a (count,) int array."""
    with open(path, "rb") as f:
        magic, count = struct.unpack(">II", _read_exact(f, 8, path, "header"))
        if magic != IDX_LABEL_MAGIC:
            raise IdxMagicError(
                f"{path}: bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}")
        raw = _read_exact(f, count, path, f"{count} labels")
        if f.read(1):
            raise IdxError(f"{path}: trailing bytes after {count} labels")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a (count, rows, cols) array of [0, 1] floats (or uint8) as IDX."""
    arr = np.asarray(images)
    if arr.ndim != 3:
        raise ValueError(f"images must be 3-D (count, rows, cols), got {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.round(arr * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, *arr.shape))
        f.write(arr.tobytes())


def write_idx_labels(path, labels) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError("labels must fit in a byte")
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, arr.size))
        f.write(arr.astype(np.uint8).tobytes())


def load_mnist_split(root, split: str, num_classes: int = 10) -> Dataset:
    """Load one MNIST split from the standard file quartet under ``root``."""
    image_name, label_name = MNIST_FILES[split]
    images = load_idx_images(os.path.join(root, image_name))
    labels = load_idx_labels(os.path.join(root, label_name))
    if len(images) != len(labels):
        raise IdxCountMismatchError(
            f"{root}: {image_name} has {len(images)} items but {label_name} has {len(labels)}")
    if labels.size and labels.max() >= num_classes:
        raise IdxError(f"{root}: label {labels.max()} out of range for {num_classes} classes")
    return Dataset(images.reshape(len(images), -1), labels, split=split,
                   num_classes=num_classes)


def mnist_root(data_dir=None) -> str:
    """Dataset root: explicit argument, else $ROTODROP_DATA_DIR, else ./data."""
    return str(data_dir) if data_dir else os.environ.get(DATA_DIR_ENV, "data")


def mnist_available(root) -> bool:
    return all(os.path.exists(os.path.join(root, name))
               for pair in MNIST_FILES.values() for name in pair)


def subset(dataset: Dataset, k: int, seed: int) -> Dataset:
    """Seeded class-stratified sample of k items.

    Items are dealt round-robin across classes in a seeded order, so
    class counts differ by at most 1 until a class runs out of items,
    and k = len(dataset) returns a permutation of the whole set.
    """
    n = len(dataset)
    if not (1 <= k <= n):
        raise ValueError(f"subset size must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    pools = [np.flatnonzero(dataset.labels == c) for c in range(dataset.num_classes)]
    pools = [idx for idx in pools if idx.size]
    for idx in pools:
        rng.shuffle(idx)
    pools = [pools[i] for i in rng.permutation(len(pools))]
    chosen = []
    depth = 0
    while len(chosen) < k:
        dealt = False
        for idx in pools:
            if depth < idx.size:
                chosen.append(idx[depth])
                dealt = True
                if len(chosen) == k:
                    break
        if not dealt:
            raise AssertionError("ran out of items before reaching k <= len(dataset)")
        depth += 1
    chosen = np.array(chosen)
    rng.shuffle(chosen)
    return Dataset(dataset.images[chosen], dataset.labels[chosen],
                   split=dataset.split, num_classes=dataset.num_classes)


XOR_POINTS = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_LABELS = np.array([0, 1, 1, 0])


def make_synthetic(kind: str, n: int, seed: int = 0, *, dim: int = 16,
                   classes: int = 4, center_scale: float = 1.0,
                   noise: float = 0.1, label_noise: float = 0.0,
                   split: str = "train") -> Dataset:
    """Deterministic labeled data with no files involved.

    * ``xor``   -- the four canonical points, cycled up to n items.
    * ``blobs`` -- ``classes`` gaussian clusters with centers on a sphere
      of radius ``center_scale`` and isotropic ``noise``; features are
      squashed into [0, 1] with a logistic map.  ``label_noise`` flips
      that fraction of labels to a random other class, which is the knob
      used to make small training sets overfit convincingly.
    """
    if n < 1:
        raise ValueError(f"dataset size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    if kind == "xor":
        reps = np.arange(n) % 4
        return Dataset(XOR_POINTS[reps], XOR_LABELS[reps], split=split, num_classes=2)
    if kind not in ("blobs", "gaussian-blobs"):
        raise ValueError(f"unknown synthetic dataset kind {kind!r}")
    if classes < 2 or dim < 1:
        raise ValueError(f"blobs need classes >= 2 and dim >= 1, got {classes}, {dim}")
    centers = rng.standard_normal((classes, dim))
    centers *= center_scale / np.linalg.norm(centers, axis=1, keepdims=True)
    labels = np.arange(n) % classes
    points = centers[labels] + noise * rng.standard_normal((n, dim))
    features = 1.0 / (1.0 + np.exp(-points))
    order = rng.permutation(n)
    features, labels = features[order], labels[order]
    # flips come last so a label_noise=0 dataset with the same seed shares
    # the exact same points in the exact same order
    if label_noise > 0.0:
        flip = rng.random(n) < label_noise
        shift = rng.integers(1, classes, size=n)
        labels = np.where(flip, (labels + shift) % classes, labels)
    return Dataset(features, labels, split=split, num_classes=classes)
