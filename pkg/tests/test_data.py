import struct

import numpy as np
import pytest

from fedspa import data
from fedspa.errors import DataFormatError


def test_blobs_split_counts():
    train, test = data.gen_blobs(classes=8, per_class=100, input_dim=16, separation=2.0, noise_sigma=1.0, seed=0)
    assert len(train) == 640 and len(test) == 160
    for c in range(8):
        assert (train.labels == c).sum() == 80
        assert (test.labels == c).sum() == 20
    assert train.inputs.min() >= 0 and train.inputs.max() <= 1
    assert train.inputs.dtype == np.float32


def test_blobs_determinism():
    a = data.gen_blobs(5, 40, 8, 3.0, 1.0, seed=9)
    b = data.gen_blobs(5, 40, 8, 3.0, 1.0, seed=9)
    assert np.array_equal(a[0].inputs, b[0].inputs)
    assert np.array_equal(a[1].labels, b[1].labels)


def test_blobs_zero_separation_centroids_identical():
    train, _ = data.gen_blobs(4, 50, 6, separation=0.0, noise_sigma=1.0, seed=1)
    cents = np.stack([train.inputs[train.labels == c].mean(axis=0) for c in range(4)])
    # only sampling noise distinguishes the class means
    assert np.abs(cents - cents.mean(axis=0)).max() < 0.1


def _idx_pair(tmp_path, n=4, rows=2, cols=3, labels=(0, 1, 2, 1), img_magic=data.IDX_IMAGES_MAGIC, trunc=0):
    pix = bytes(range(n * rows * cols))
    img = struct.pack(">IIII", img_magic, n, rows, cols) + pix
    if trunc:
        img = img[:-trunc]
    lab = struct.pack(">II", data.IDX_LABELS_MAGIC, len(labels)) + bytes(labels)
    pi = tmp_path / "img.idx"
    pl = tmp_path / "lab.idx"
    pi.write_bytes(img)
    pl.write_bytes(lab)
    return pi, pl


def test_load_idx_fixture(tmp_path):
    pi, pl = _idx_pair(tmp_path)
    ds = data.load_idx(pi, pl)
    assert len(ds) == 4
    assert ds.input_dim == 6
    assert ds.class_count == 3
    assert ds.inputs[0, 1] == pytest.approx(1 / 255)
    assert list(ds.labels) == [0, 1, 2, 1]


def test_load_idx_bad_magic(tmp_path):
    pi, pl = _idx_pair(tmp_path, img_magic=0x00000805)
    with pytest.raises(DataFormatError, match="magic"):
        data.load_idx(pi, pl)


def test_load_idx_truncated(tmp_path):
    pi, pl = _idx_pair(tmp_path, trunc=3)
    with pytest.raises(DataFormatError, match="offset"):
        data.load_idx(pi, pl)


def test_load_idx_label_out_of_range(tmp_path):
    pi, pl = _idx_pair(tmp_path, labels=(0, 1, 5, 1))
    with pytest.raises(DataFormatError, match="label"):
        data.load_idx(pi, pl, num_classes=3)


def test_partition_disjoint_cover():
    labels = np.repeat(np.arange(6), 40)
    for seed in range(3):
        plan = data.dirichlet_partition(labels, n_clients=10, alpha=1.0, seed=seed)
        plan.validate(len(labels))


def test_partition_determinism():
    labels = np.repeat(np.arange(4), 30)
    a = data.dirichlet_partition(labels, 8, 0.5, seed=2)
    b = data.dirichlet_partition(labels, 8, 0.5, seed=2)
    assert all(np.array_equal(x, y) for x, y in zip(a.assignments, b.assignments))


def test_partition_near_uniform_at_high_alpha():
    labels = np.repeat(np.arange(8), 100)
    for seed in range(5):
        plan = data.dirichlet_partition(labels, 10, alpha=1000.0, seed=seed)
        for shard in plan.assignments:
            hist = np.bincount(labels[shard], minlength=8)
            assert np.all(hist >= 0.8 * 10)
            assert np.all(hist <= 1.2 * 10)


def test_partition_skew_at_low_alpha():
    labels = np.repeat(np.arange(8), 100)
    for seed in range(5):
        plan = data.dirichlet_partition(labels, 10, alpha=0.1, seed=seed)
        max_share = 0.0
        for shard in plan.assignments:
            hist = np.bincount(labels[shard], minlength=8)
            max_share = max(max_share, hist.max() / hist.sum())
        assert max_share > 0.6


def test_partition_monotone_heterogeneity():
    labels = np.repeat(np.arange(8), 100)
    means = []
    for alpha in [0.5, 1.0, 5.0, 10.0, 1000.0]:
        shares = []
        for seed in range(5):
            plan = data.dirichlet_partition(labels, 10, alpha=alpha, seed=seed)
            for shard in plan.assignments:
                hist = np.bincount(labels[shard], minlength=8)
                shares.append(hist.max() / hist.sum())
        means.append(np.mean(shares))
    assert all(means[i] >= means[i + 1] - 1e-9 for i in range(len(means) - 1))


def test_partition_rejects_bad_args():
    labels = np.zeros(5, dtype=int)
    with pytest.raises(ValueError):
        data.dirichlet_partition(labels, 6, 1.0, seed=0)
    with pytest.raises(ValueError):
        data.dirichlet_partition(labels, 1, 1.0, seed=0)
    with pytest.raises(ValueError):
        data.dirichlet_partition(labels, 2, 0.0, seed=0)
