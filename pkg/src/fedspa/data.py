"""Dataset synthesis, IDX ingestion, and non-IID partitioning."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Inputs in [0,1] with integer labels in [0, class_count)."""

    inputs: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels must have equal length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError("labels outside [0, class_count)")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.inputs[idx], self.labels[idx], self.class_count)


@dataclass
class PartitionPlan:
    """Disjoint cover of training indices across clients."""

    assignments: list[np.ndarray]
    alpha: float
    seed: int

    def validate(self, total: int) -> None:
        flat = np.concatenate(self.assignments) if self.assignments else np.array([], dtype=np.intp)
        if len(flat) != total or len(np.unique(flat)) != total:
            raise ValueError("assignments are not a disjoint cover of the dataset")
        if any(len(a) == 0 for a in self.assignments):
            raise ValueError("empty client shard")


def gen_blobs(
    classes: int,
    per_class: int,
    input_dim: int,
    separation: float,
    noise_sigma: float,
    seed: int,
) -> tuple[Dataset, Dataset]:
    """Gaussian class blobs rescaled into [0,1], split 80/20 per class.

    Class centers sit at deterministic directions on a sphere of radius
    `separation`; the affine rescale keeps the geometry intact so class
    separability is governed by separation / noise_sigma alone.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    rng = np.random.Generator(np.random.PCG64(seed))
    dirs = rng.standard_normal((classes, input_dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centers = separation * dirs
    # half-width of the affine window; tails beyond it clip, which keeps
    # the usable feature range wide without losing separability
    scale = max((separation + noise_sigma) / 2.0, 1e-9)

    train_x, train_y, test_x, test_y = [], [], [], []
    n_train = int(0.8 * per_class)
    for c in range(classes):
        raw = centers[c] + noise_sigma * rng.standard_normal((per_class, input_dim))
        scaled = np.clip(0.5 + raw / (2.0 * scale), 0.0, 1.0).astype(np.float32)
        train_x.append(scaled[:n_train])
        test_x.append(scaled[n_train:])
        train_y.append(np.full(n_train, c, dtype=np.int64))
        test_y.append(np.full(per_class - n_train, c, dtype=np.int64))
    train = Dataset(np.concatenate(train_x), np.concatenate(train_y), classes)
    test = Dataset(np.concatenate(test_x), np.concatenate(test_y), classes)
    return train, test


def _read_idx_header(blob: bytes, magic: int, n_dims: int, path) -> tuple[tuple[int, ...], int]:
    header_len = 4 * (1 + n_dims)
    if len(blob) < header_len:
        raise DataFormatError(f"{path}: truncated header, file ends at offset {len(blob)}")
    got_magic = struct.unpack(">I", blob[:4])[0]
    if got_magic != magic:
        raise DataFormatError(f"{path}: bad magic 0x{got_magic:08x} at offset 0, expected 0x{magic:08x}")
    dims = struct.unpack(f">{n_dims}I", blob[4:header_len])
    return dims, header_len


def load_idx(path_images, path_labels, num_classes: int | None = None) -> Dataset:
    """Load an IDX image/label pair, pixels scaled to [0,1]."""
    with open(path_images, "rb") as fh:
        img_blob = fh.read()
    with open(path_labels, "rb") as fh:
        lab_blob = fh.read()
    (n_img, rows, cols), img_off = _read_idx_header(img_blob, IDX_IMAGES_MAGIC, 3, path_images)
    (n_lab,), lab_off = _read_idx_header(lab_blob, IDX_LABELS_MAGIC, 1, path_labels)
    expected = n_img * rows * cols
    if len(img_blob) - img_off != expected:
        raise DataFormatError(
            f"{path_images}: payload is {len(img_blob) - img_off} bytes at offset {img_off}, expected {expected}"
        )
    if len(lab_blob) - lab_off != n_lab:
        raise DataFormatError(
            f"{path_labels}: payload is {len(lab_blob) - lab_off} bytes at offset {lab_off}, expected {n_lab}"
        )
    if n_img != n_lab:
        raise DataFormatError(f"image count {n_img} does not match label count {n_lab}")
    pixels = np.frombuffer(img_blob, dtype=np.uint8, offset=img_off)
    inputs = (pixels.astype(np.float32) / 255.0).reshape(n_img, rows * cols)
    labels = np.frombuffer(lab_blob, dtype=np.uint8, offset=lab_off).astype(np.int64)
    class_count = num_classes if num_classes is not None else int(labels.max()) + 1
    if len(labels) and labels.max() >= class_count:
        raise DataFormatError(f"label {int(labels.max())} outside [0, {class_count})")
    return Dataset(inputs, labels, class_count)


def _largest_remainder(props: np.ndarray, total: int) -> np.ndarray:
    raw = props * total
    counts = np.floor(raw).astype(np.intp)
    shortfall = total - counts.sum()
    if shortfall > 0:
        # stable argsort on negated remainders: ties favour lower client id
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:shortfall]] += 1
    return counts


def dirichlet_partition(labels, n_clients: int, alpha: float, seed: int) -> PartitionPlan:
    """Split sample indices across clients with per-class Dirichlet proportions.

    Clients left empty are repaired by stealing one sample at a time from
    the currently largest client, so every shard is non-empty.
    """
    labels = np.asarray(labels)
    if n_clients < 2:
        raise ValueError(f"need at least 2 clients, got {n_clients}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if n_clients > len(labels):
        raise ValueError(f"{n_clients} clients exceed {len(labels)} samples")
    rng = np.random.Generator(np.random.PCG64(seed))
    shards: list[list[int]] = [[] for _ in range(n_clients)]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        props = rng.dirichlet(np.full(n_clients, alpha))
        counts = _largest_remainder(props, len(idx))
        start = 0
        for k in range(n_clients):
            shards[k].extend(idx[start : start + counts[k]].tolist())
            start += counts[k]
    while any(len(s) == 0 for s in shards):
        needy = min(k for k in range(n_clients) if len(shards[k]) == 0)
        donor = max(range(n_clients), key=lambda k: (len(shards[k]), -k))
        shards[needy].append(shards[donor].pop())
    assignments = [np.array(sorted(s), dtype=np.intp) for s in shards]
    plan = PartitionPlan(assignments=assignments, alpha=alpha, seed=seed)
    plan.validate(len(labels))
    return plan
