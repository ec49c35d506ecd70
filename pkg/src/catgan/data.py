"""Datasets: synthetic 2-D benchmarks, MNIST IDX files, and labeled splits."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ContractError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

DEFAULT_SIZE = 1000
DEFAULT_NOISE = 0.08
DEFAULT_RADIUS_RATIO = 0.5
BLOB_STD = 1.0
BLOB_SIDE = 10.0


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = "dataset"
    class_count: int = 0

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        if x.ndim != 2 or len(x) < 1:
            raise ContractError(f"inputs must be a non-empty N x I matrix, got shape {x.shape}")
        object.__setattr__(self, "inputs", x)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64)
            if y.shape != (len(x),):
                raise ContractError(f"{len(y)} labels for {len(x)} inputs")
            k = self.class_count or (int(y.max()) + 1)
            if y.min() < 0 or y.max() >= k:
                raise ContractError(f"labels must lie in [0, {k})")
            object.__setattr__(self, "labels", y)
            object.__setattr__(self, "class_count", k)

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def feature_dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, index, name: Optional[str] = None) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.inputs[index], labels, name or self.name, self.class_count)

    def one_hot(self) -> np.ndarray:
        if self.labels is None:
            raise ContractError(f"dataset {self.name!r} has no labels")
        return np.eye(self.class_count)[self.labels]


@dataclass(frozen=True)
class LabeledSplit:
    labeled: Dataset
    unlabeled: Dataset
    validation: Optional[Dataset] = None


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine map to zero mean and unit variance."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 0, std, 1.0))

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def invert(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.std + self.mean

    def transform(self, ds: Dataset) -> Dataset:
        return Dataset(self.apply(ds.inputs), ds.labels, ds.name, ds.class_count)


# ---------------------------------------------------------------- synthetic

def _split_even(n: int, k: int) -> list[int]:
    return [n // k + (1 if i < n % k else 0) for i in range(k)]


def blob_centers(side: float = BLOB_SIDE) -> np.ndarray:
    """Vertices of an equilateral triangle with the given side, centred at the origin."""
    radius = side / math.sqrt(3.0)
    angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def gen_blobs(n: int = DEFAULT_SIZE, seed=0, std: float = BLOB_STD) -> Dataset:
    if n < 3:
        raise ContractError("need at least 3 points for 3 blobs")
    rng = np.random.default_rng(seed)
    centers = blob_centers(BLOB_SIDE * std)
    counts = _split_even(n, 3)
    x = np.concatenate([c + rng.normal(0.0, std, size=(m, 2)) for c, m in zip(centers, counts)])
    y = np.repeat(np.arange(3), counts)
    return Dataset(x, y, "blobs", 3)


def gen_two_moons(n: int = DEFAULT_SIZE, noise_std: float = DEFAULT_NOISE, seed=0) -> Dataset:
    """Two interleaved unit half-circles: upper arc centred at (0, 0), lower at (1, 0.5)."""
    rng = np.random.default_rng(seed)
    n0, n1 = _split_even(n, 2)
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    upper = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    lower = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
    x = np.concatenate([upper, lower])
    if noise_std > 0:
        x = x + rng.normal(0.0, noise_std, size=x.shape)
    return Dataset(x, np.repeat([0, 1], [n0, n1]), "moons", 2)


def gen_circles(n: int = DEFAULT_SIZE, radius_ratio: float = DEFAULT_RADIUS_RATIO,
                noise_std: float = DEFAULT_NOISE, seed=0) -> Dataset:
    """Concentric rings of radius 1 (label 0) and ``radius_ratio`` (label 1)."""
    if not 0 < radius_ratio < 1:
        raise ContractError(f"radius_ratio must be in (0, 1), got {radius_ratio}")
    rng = np.random.default_rng(seed)
    n0, n1 = _split_even(n, 2)
    t0 = np.linspace(0.0, 2 * np.pi, n0, endpoint=False)
    t1 = np.linspace(0.0, 2 * np.pi, n1, endpoint=False)
    outer = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    inner = radius_ratio * np.stack([np.cos(t1), np.sin(t1)], axis=1)
    x = np.concatenate([outer, inner])
    if noise_std > 0:
        x = x + rng.normal(0.0, noise_std, size=x.shape)
    return Dataset(x, np.repeat([0, 1], [n0, n1]), "circles", 2)


SYNTHETIC = ("blobs", "moons", "circles")


def make_synthetic(name: str, n: int = DEFAULT_SIZE, seed=0, noise_std: float = DEFAULT_NOISE) -> Dataset:
    """Experiment datasets.

    Moons and circles are standardized before the noise is added, so
    ``noise_std`` is measured in units of the standardized data.  Blobs keep
    their intrinsic unit-variance spread.
    """
    if name == "blobs":
        return gen_blobs(n, seed)
    if name == "moons":
        clean = gen_two_moons(n, 0.0, seed)
    elif name == "circles":
        clean = gen_circles(n, DEFAULT_RADIUS_RATIO, 0.0, seed)
    else:
        raise ContractError(f"unknown synthetic dataset {name!r}; valid: {SYNTHETIC}")
    x = Standardizer.fit(clean.inputs).apply(clean.inputs)
    if noise_std > 0:
        x = x + np.random.default_rng(seed).normal(0.0, noise_std, size=x.shape)
    return Dataset(x, clean.labels, name, clean.class_count)


# ---------------------------------------------------------------------- IDX

def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for an IDX header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise FormatError(f"{path}: bad IDX magic 0x{found:08x}, expected 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims))
    if len(raw) - header < expected:
        raise FormatError(f"{path}: truncated payload, expected {expected} bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as IDX (images if 3-D, labels if 1-D)."""
    a = np.asarray(array, dtype=np.uint8)
    magic = {1: IDX_LABELS_MAGIC, 3: IDX_IMAGES_MAGIC}.get(a.ndim)
    if magic is None:
        raise ContractError("IDX writer supports 1-D labels or 3-D images only")
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(f">{a.ndim}I", *a.shape))
        f.write(a.tobytes(order="C"))


def load_mnist_idx(images_path, labels_path, name: str = "mnist") -> Dataset:
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels")
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64), name, 10)


def load_mnist_dir(directory, split: str = "train") -> Dataset:
    """Load ``train`` or ``t10k`` files from a directory with the standard file names."""
    prefix = "train" if split == "train" else "t10k"
    d = Path(directory)
    return load_mnist_idx(d / f"{prefix}-images-idx3-ubyte", d / f"{prefix}-labels-idx1-ubyte",
                          name=f"mnist-{split}")


# ------------------------------------------------------------------- splits

def split_semi_supervised(ds: Dataset, n_labeled: int, n_validation: int, seed=0) -> LabeledSplit:
    """Class-balanced labeled subset, held-out validation set, and the rest unlabeled."""
    if ds.labels is None:
        raise ContractError("splitting needs ground-truth labels")
    k = ds.class_count
    if n_labeled + n_validation > len(ds):
        raise ContractError(f"{n_labeled} labeled + {n_validation} validation exceeds {len(ds)} examples")
    if n_labeled % k:
        raise ContractError(f"n_labeled={n_labeled} is not divisible by {k} classes (remainder {n_labeled % k})")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    validation = order[:n_validation]
    rest = order[n_validation:]
    per_class = n_labeled // k
    labeled = []
    for c in range(k):
        members = rest[ds.labels[rest] == c]
        if len(members) < per_class:
            raise ContractError(f"class {c} has only {len(members)} examples, need {per_class}")
        labeled.append(members[:per_class])
    labeled = np.sort(np.concatenate(labeled)) if labeled else np.zeros(0, dtype=np.int64)
    unlabeled = np.setdiff1d(rest, labeled)
    return LabeledSplit(
        labeled=ds.subset(labeled, f"{ds.name}-labeled") if len(labeled) else None,
        unlabeled=ds.subset(unlabeled, f"{ds.name}-unlabeled"),
        validation=ds.subset(validation, f"{ds.name}-validation") if n_validation else None,
    )


# ---------------------------------------------------------------------- CSV

def write_csv(path, ds: Dataset) -> None:
    """Header ``x0,x1,...,label``; the label column is empty when unlabeled."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(ds.feature_dim)] + ["label"])
        for i, row in enumerate(ds.inputs):
            label = "" if ds.labels is None else str(int(ds.labels[i]))
            w.writerow([repr(float(v)) for v in row] + [label])


def read_csv(path, name: Optional[str] = None) -> Dataset:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or not rows[0] or rows[0][-1] != "label":
        raise FormatError(f"{path}: expected a header x0,...,label")
    body = rows[1:]
    if not body:
        raise FormatError(f"{path}: no data rows")
    x = np.array([[float(v) for v in r[:-1]] for r in body])
    labels = [r[-1] for r in body]
    y = None if all(v == "" for v in labels) else np.array([int(v) for v in labels])
    return Dataset(x, y, name or Path(path).stem)
