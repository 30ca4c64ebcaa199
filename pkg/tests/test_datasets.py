"""Blob generation, Dirichlet sharding, label histograms, IDX parsing."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from gossipseg.datasets import (
    LabeledDataset,
    dirichlet_partition,
    label_distribution,
    load_idx_array,
    load_idx_dataset,
    synthetic_blobs,
)
from gossipseg.errors import ConfigurationError, InvalidInputError, SerializationError


def test_blobs_shapes_and_label_counts(rng):
    data = synthetic_blobs(num_classes=3, samples_per_class=40, input_dim=5, rng=rng)
    assert data.features.shape == (120, 5)
    assert data.labels.shape == (120,)
    counts = np.bincount(data.labels, minlength=3)
    assert counts.tolist() == [40, 40, 40]


def test_blobs_classes_are_separated(rng):
    data = synthetic_blobs(num_classes=4, samples_per_class=50, input_dim=8, rng=rng)
    centers = np.stack([data.features[data.labels == k].mean(axis=0) for k in range(4)])
    within = max(
        np.linalg.norm(data.features[data.labels == k] - centers[k], axis=1).mean()
        for k in range(4)
    )
    between = min(
        np.linalg.norm(centers[i] - centers[j])
        for i in range(4)
        for j in range(i + 1, 4)
    )
    assert between > within


def test_dataset_validation():
    with pytest.raises(InvalidInputError):
        LabeledDataset(np.zeros((3, 2)), np.array([0, 1]), 2)
    with pytest.raises(InvalidInputError):
        LabeledDataset(np.zeros((2, 2)), np.array([0, 5]), 2)
    with pytest.raises(InvalidInputError):
        LabeledDataset(np.zeros((0, 2)), np.array([], dtype=int), 2)


@settings(max_examples=40)
@given(
    num_clients=st.integers(min_value=1, max_value=12),
    beta=st.sampled_from([0.1, 0.5, 1.0, 10.0]),
    seed=st.integers(min_value=0, max_value=10**6),
)
def test_partition_is_exact_cover(num_clients, beta, seed):
    rng = np.random.default_rng(0)
    data = synthetic_blobs(num_classes=3, samples_per_class=30, input_dim=2, rng=rng)
    shards = dirichlet_partition(data, num_clients, beta, seed)
    assert len(shards) == num_clients
    assert all(len(s) > 0 for s in shards)
    merged = np.concatenate(shards)
    # disjoint and covering: sorted union is exactly 0..n-1
    assert np.array_equal(np.sort(merged), np.arange(len(data)))


def test_partition_deterministic():
    rng = np.random.default_rng(0)
    data = synthetic_blobs(num_classes=2, samples_per_class=50, input_dim=2, rng=rng)
    a = dirichlet_partition(data, 5, 0.5, seed=77)
    b = dirichlet_partition(data, 5, 0.5, seed=77)
    c = dirichlet_partition(data, 5, 0.5, seed=78)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert any(not np.array_equal(x, y) for x, y in zip(a, c))


def test_small_beta_is_more_skewed_than_large_beta():
    rng = np.random.default_rng(1)
    data = synthetic_blobs(num_classes=4, samples_per_class=100, input_dim=2, rng=rng)

    def mean_max_share(beta):
        shares = []
        for seed in range(20):
            for shard in dirichlet_partition(data, 6, beta, seed):
                probs = label_distribution(shard, data).probs
                shares.append(probs.max())
        return float(np.mean(shares))

    assert mean_max_share(0.1) > mean_max_share(10.0) + 0.1


def test_partition_guards():
    rng = np.random.default_rng(2)
    data = synthetic_blobs(num_classes=2, samples_per_class=3, input_dim=2, rng=rng)
    with pytest.raises(ConfigurationError):
        dirichlet_partition(data, 0, 0.5, 1)
    with pytest.raises(ConfigurationError):
        dirichlet_partition(data, 5, 0.0, 1)
    with pytest.raises(ConfigurationError):
        dirichlet_partition(data, 7, 0.5, 1)


def test_label_distribution_matches_manual_count(rng):
    data = synthetic_blobs(num_classes=3, samples_per_class=20, input_dim=2, rng=rng)
    shard = np.array([0, 1, 2, 20, 21, 40])
    dist = label_distribution(shard, data).probs
    want = np.zeros(3)
    for idx in shard:
        want[data.labels[idx]] += 1
    want /= len(shard)
    assert np.allclose(dist, want, atol=0)
    assert abs(dist.sum() - 1.0) < 1e-12


def write_idx(path, dtype_code, dims, payload_bytes):
    header = struct.pack(">BBBB", 0, 0, dtype_code, len(dims))
    header += b"".join(struct.pack(">I", d) for d in dims)
    path.write_bytes(header + payload_bytes)


def test_idx_array_roundtrip(tmp_path):
    values = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    p = tmp_path / "images.idx"
    write_idx(p, 0x08, values.shape, values.tobytes())
    back = load_idx_array(p)
    assert back.dtype == np.uint8
    assert np.array_equal(back, values)


def test_idx_rejects_bad_magic_and_size(tmp_path):
    p = tmp_path / "bad.idx"
    p.write_bytes(b"\x01\x00\x08\x01" + struct.pack(">I", 1) + b"\x00")
    with pytest.raises(SerializationError):
        load_idx_array(p)
    write_idx(p, 0x08, (4,), b"\x00\x01")  # dims claim 4, payload has 2
    with pytest.raises(SerializationError):
        load_idx_array(p)
    write_idx(p, 0x77, (1,), b"\x00")
    with pytest.raises(SerializationError):
        load_idx_array(p)


def test_idx_dataset_flattens_and_normalizes(tmp_path):
    images = np.full((5, 2, 2), 255, dtype=np.uint8)
    labels = np.array([0, 1, 0, 1, 1], dtype=np.uint8)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(ip, 0x08, images.shape, images.tobytes())
    write_idx(lp, 0x08, labels.shape, labels.tobytes())
    data = load_idx_dataset(ip, lp, num_classes=2)
    assert data.features.shape == (5, 4)
    assert data.features.max() == 1.0
    assert np.array_equal(data.labels, labels)
