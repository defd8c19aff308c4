"""
Dataset ingestion and partitioning

- MNIST IDX reader (plain or gzip), pixels scaled to [0, 1]
- seeded synthetic Gaussian blobs
- task views (binary pair, multi-class, imbalanced one-vs-rest)
- seed set / device shard / test set partitioning
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from sklearn.preprocessing import MinMaxScaler

from ..errors import ConfigError, InsufficientDataError, MnistFormatError, UsageError

if TYPE_CHECKING:
    from ..config.settings import DatasetSpec, SyntheticSource

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MNIST_PIXEL_MAX = 255.0


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int


@dataclass
class LabeledSet:
    """Row-stacked samples; labels are class indices 0..C-1"""

    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.features.shape[1])

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "LabeledSet":
        if not samples:
            raise UsageError("cannot build a labeled set from no samples")
        return cls(np.stack([s.features for s in samples]), np.array([s.label for s in samples], dtype=int))

    def samples(self) -> list[Sample]:
        return [Sample(x, int(c)) for x, c in zip(self.features, self.labels)]


@dataclass(frozen=True)
class TaskView:
    """A dataset relabeled for one learning task"""

    kind: str
    class_names: tuple[str, ...]
    train: LabeledSet
    test: LabeledSet

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    @property
    def imbalanced(self) -> bool:
        return self.kind == "imbalanced"


@dataclass
class SeedSet:
    """Clean labeled samples available at the server before acquisition"""

    samples: LabeledSet


@dataclass
class DeviceShard:
    """Backlogged buffer of one edge device"""

    device_id: int
    queue: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.queue)


@dataclass
class Partition:
    seed_set: SeedSet
    shards: list[DeviceShard]
    test_set: LabeledSet
    pool: LabeledSet

    @property
    def class_ratio(self) -> list[int]:
        """Per-class sample counts of the acquisition pool"""
        return np.bincount(self.pool.labels, minlength=int(self.pool.labels.max()) + 1).tolist()


# ---------------------------------------------------------------------------
# MNIST IDX
# ---------------------------------------------------------------------------

def _read_bytes(path: str) -> bytes:
    opener = gzip.open if path.endswith(".gz") else open
    if not os.path.exists(path) and os.path.exists(path + ".gz"):
        path, opener = path + ".gz", gzip.open
    with opener(path, "rb") as f:
        return f.read()


def _read_header(raw: bytes, path: str, magic: int, dims: int) -> list[int]:
    needed = 4 * (1 + dims)
    if len(raw) < needed:
        raise MnistFormatError(f"header needs {needed} bytes, file has {len(raw)}", path, len(raw))
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise MnistFormatError(f"bad magic number 0x{found:08x}, expected 0x{magic:08x}", path, 0)
    return list(struct.unpack(f">{dims}I", raw[4:needed]))


def read_idx_images(path: str) -> np.ndarray:
    raw = _read_bytes(path)
    count, rows, cols = _read_header(raw, path, IDX_IMAGES_MAGIC, 3)
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        offset = min(len(raw), expected)
        raise MnistFormatError(
            f"header declares {count} images of {rows}x{cols} ({expected} bytes), file has {len(raw)}",
            path, offset,
        )
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows * cols)
    return pixels.astype(np.float64) / MNIST_PIXEL_MAX


def read_idx_labels(path: str) -> np.ndarray:
    raw = _read_bytes(path)
    (count,) = _read_header(raw, path, IDX_LABELS_MAGIC, 1)
    expected = 8 + count
    if len(raw) != expected:
        raise MnistFormatError(
            f"header declares {count} labels ({expected} bytes), file has {len(raw)}", path, min(len(raw), expected)
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=8).astype(int)


def load_mnist_idx(images_path: str, labels_path: str) -> list[Sample]:
    """
    Read an IDX image/label file pair.

    Returns:
        Samples with p = rows*cols features in [0, 1] and integer digit labels

    Raises:
        MnistFormatError: bad magic, truncated file or count mismatch
    """
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise MnistFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels", labels_path, 4
        )
    return [Sample(x, int(c)) for x, c in zip(images, labels)]


# ---------------------------------------------------------------------------
# Synthetic blobs
# ---------------------------------------------------------------------------

def make_synthetic(spec: "SyntheticSource") -> tuple[list[Sample], list[Sample]]:
    """
    Seeded Gaussian blobs, one per class mean, min-max scaled to [0, 1]
    with a transform shared by train and test.

    Returns:
        (train samples, test samples)
    """
    if not spec.covariance_scale > 0:
        raise ConfigError(f"degenerate covariance scale {spec.covariance_scale}")
    rng = np.random.default_rng(spec.seed)
    means = np.asarray(spec.class_means, dtype=float)
    std = np.sqrt(spec.covariance_scale)

    def draw(per_class: int) -> tuple[np.ndarray, np.ndarray]:
        X = np.concatenate([m + std * rng.standard_normal((per_class, means.shape[1])) for m in means])
        y = np.repeat(np.arange(means.shape[0]), per_class)
        return X, y

    X_train, y_train = draw(spec.samples_per_class)
    X_test, y_test = draw(spec.test_samples_per_class)
    scaler = MinMaxScaler(clip=True).fit(X_train)
    X_train, X_test = scaler.transform(X_train), scaler.transform(X_test)
    return (
        [Sample(x, int(c)) for x, c in zip(X_train, y_train)],
        [Sample(x, int(c)) for x, c in zip(X_test, y_test)],
    )


def load_dataset(spec: "DatasetSpec") -> tuple[list[Sample], list[Sample]]:
    """Raw (train, test) samples for a dataset spec, before any task relabeling"""
    source = spec.source
    if source.kind == "mnist_idx":
        train = load_mnist_idx(source.resolve(source.train_images), source.resolve(source.train_labels))
        test = load_mnist_idx(source.resolve(source.test_images), source.resolve(source.test_labels))
        return train, test
    return make_synthetic(source)


# ---------------------------------------------------------------------------
# Tasks and partitioning
# ---------------------------------------------------------------------------

def apply_task(train: Sequence[Sample], test: Sequence[Sample], task) -> TaskView:
    """
    Relabel raw samples to class indices for ``task``.

    binary(a, b):    a -> 0, b -> 1, other classes dropped
    multiclass:      sorted distinct labels -> 0..C-1
    imbalanced(m):   m -> 0 (positive), every other class -> 1 (negative)
    """
    train_set = LabeledSet.from_samples(train)
    test_set = LabeledSet.from_samples(test)
    present = sorted(set(train_set.labels.tolist()))

    if task.kind == "binary":
        for c in (task.class_a, task.class_b):
            if c not in present:
                raise InsufficientDataError(f"class {c} has no training samples")
        mapping = {task.class_a: 0, task.class_b: 1}
        names = (str(task.class_a), str(task.class_b))
    elif task.kind == "imbalanced":
        if task.minority_class not in present:
            raise InsufficientDataError(f"minority class {task.minority_class} has no training samples")
        mapping = {c: (0 if c == task.minority_class else 1) for c in present}
        names = (str(task.minority_class), "rest")
    else:
        mapping = {c: i for i, c in enumerate(present)}
        names = tuple(str(c) for c in present)

    def relabel(data: LabeledSet) -> LabeledSet:
        keep = np.array([c in mapping for c in data.labels.tolist()], dtype=bool)
        labels = np.array([mapping[c] for c in data.labels[keep].tolist()], dtype=int)
        return LabeledSet(data.features[keep], labels)

    return TaskView(task.kind, names, relabel(train_set), relabel(test_set))


def seed_counts_for(task: TaskView) -> dict[int, int]:
    """2 per class for balanced tasks, 1 minority + 8 majority for imbalanced"""
    if task.imbalanced:
        return {0: 1, 1: 8}
    return {c: 2 for c in range(task.class_count)}


def partition(
    task: TaskView,
    device_count: int,
    rng: np.random.Generator,
    seed_counts: Optional[dict[int, int]] = None,
) -> Partition:
    """
    Split the task's training data into the clean seed set and device shards.

    The seed set is drawn per class without replacement, the rest is shuffled
    and dealt evenly (sizes differ by at most one). The test set is untouched.
    """
    seed_counts = seed_counts or seed_counts_for(task)
    labels = task.train.labels
    seed_idx: list[int] = []
    for c in sorted(seed_counts):
        members = np.flatnonzero(labels == c)
        if members.size < seed_counts[c]:
            raise InsufficientDataError(
                f"class {task.class_names[c]} has {members.size} samples, seed rule needs {seed_counts[c]}"
            )
        seed_idx.extend(rng.choice(members, size=seed_counts[c], replace=False).tolist())

    rest = np.setdiff1d(np.arange(len(task.train)), np.array(seed_idx, dtype=int))
    rest = rng.permutation(rest)
    if rest.size < device_count:
        raise InsufficientDataError(f"{rest.size} samples cannot fill {device_count} device shards")
    shards = [
        DeviceShard(device_id=d, queue=chunk.tolist())
        for d, chunk in enumerate(np.array_split(rest, device_count))
    ]
    seed = np.array(seed_idx, dtype=int)
    return Partition(
        seed_set=SeedSet(LabeledSet(task.train.features[seed], labels[seed])),
        shards=shards,
        test_set=task.test,
        pool=LabeledSet(task.train.features[rest], labels[rest]),
    )
