import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from catgan import data
from catgan.data import Dataset, Standardizer
from catgan.errors import ContractError, FormatError


def test_blobs_even_split_and_centers():
    ds = data.gen_blobs(300, seed=0)
    assert ds.class_count == 3
    assert np.bincount(ds.labels).tolist() == [100, 100, 100]
    centers = data.blob_centers(data.BLOB_SIDE * data.BLOB_STD)
    side = np.linalg.norm(centers[0] - centers[1])
    assert side >= 8 * data.BLOB_STD
    for c in range(3):
        assert np.linalg.norm(ds.inputs[ds.labels == c].mean(axis=0) - centers[c]) < 0.5 * data.BLOB_STD


def _arc_distance_upper(p):
    return abs(np.linalg.norm(p) - 1.0)


def test_moons_noiseless_lie_on_arcs():
    ds = data.gen_two_moons(400, noise_std=0.0, seed=0)
    assert np.bincount(ds.labels).tolist() == [200, 200]
    up = ds.inputs[ds.labels == 0]
    lo = ds.inputs[ds.labels == 1]
    assert np.abs(np.linalg.norm(up, axis=1) - 1).max() < 1e-9 and (up[:, 1] >= -1e-12).all()
    assert np.abs(np.linalg.norm(lo - [1.0, 0.5], axis=1) - 1).max() < 1e-9 and (lo[:, 1] <= 0.5 + 1e-12).all()
    assert ds.class_count == 2


def test_circles_noiseless_two_radii():
    ds = data.gen_circles(200, noise_std=0.0, seed=0)
    radii = np.unique(np.round(np.linalg.norm(ds.inputs, axis=1), 9))
    assert radii.tolist() == [0.5, 1.0]
    assert ds.class_count == 2
    with pytest.raises(ContractError):
        data.gen_circles(10, radius_ratio=1.0)


def test_make_synthetic_noise_on_standardized_scale():
    clean = data.make_synthetic("circles", noise_std=0.0, seed=0)
    np.testing.assert_allclose(clean.inputs.std(axis=0), 1.0)
    noisy = data.make_synthetic("circles", noise_std=0.08, seed=0)
    resid = noisy.inputs - clean.inputs
    assert resid.std() == pytest.approx(0.08, rel=0.1)
    with pytest.raises(ContractError):
        data.make_synthetic("spirals")


@pytest.mark.parametrize("name", data.SYNTHETIC)
def test_generators_deterministic(name):
    a, b = data.make_synthetic(name, seed=4), data.make_synthetic(name, seed=4)
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.labels, b.labels)


def test_dataset_invariants():
    with pytest.raises(ContractError):
        Dataset(np.zeros((0, 2)), None, "empty")
    with pytest.raises(ContractError):
        Dataset(np.zeros((2, 2)), np.array([0, 3]), "bad", 2)


def test_standardizer_round_trip():
    x = np.random.default_rng(0).normal(5, 3, size=(50, 3))
    s = Standardizer.fit(x)
    z = s.apply(x)
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(z.std(axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(s.invert(z), x)


# ---------------------------------------------------------------------- IDX

def _idx_bytes(magic, dims, payload):
    return struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims) + bytes(payload)


def test_idx_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(5, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, size=5, dtype=np.uint8)
    data.write_idx(tmp_path / "img", images)
    data.write_idx(tmp_path / "lab", labels)
    raw = (tmp_path / "img").read_bytes()
    assert raw[:4] == bytes([0, 0, 8, 3])
    assert (tmp_path / "lab").read_bytes()[:4] == bytes([0, 0, 8, 1])
    ds = data.load_mnist_idx(tmp_path / "img", tmp_path / "lab")
    assert np.array_equal((ds.inputs * 255).round().astype(np.uint8).reshape(images.shape), images)
    assert np.array_equal(ds.labels, labels)
    assert ds.feature_dim == 784


def test_idx_pixel_scaling(tmp_path):
    (tmp_path / "i").write_bytes(_idx_bytes(0x803, (2, 1, 2), [0, 255, 128, 1]))
    (tmp_path / "l").write_bytes(_idx_bytes(0x801, (2,), [3, 9]))
    ds = data.load_mnist_idx(tmp_path / "i", tmp_path / "l")
    assert ds.inputs[0].tolist() == [0.0, 1.0]
    assert ds.labels.tolist() == [3, 9]


def test_idx_wrong_magic_names_value(tmp_path):
    (tmp_path / "i").write_bytes(_idx_bytes(0x801, (1, 1, 1), [0]))
    (tmp_path / "l").write_bytes(_idx_bytes(0x801, (1,), [0]))
    with pytest.raises(FormatError, match="0x00000801"):
        data.load_mnist_idx(tmp_path / "i", tmp_path / "l")


def test_idx_truncated(tmp_path):
    (tmp_path / "i").write_bytes(_idx_bytes(0x803, (2, 2, 2), [1, 2, 3]))
    (tmp_path / "l").write_bytes(_idx_bytes(0x801, (2,), [0, 1]))
    with pytest.raises(FormatError):
        data.load_mnist_idx(tmp_path / "i", tmp_path / "l")


# -------------------------------------------------------------------- splits

def _mnist_like(n=1000, k=10, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(n, 3)), np.arange(n) % k, "toy", k)


def test_split_balanced_and_disjoint():
    ds = _mnist_like()
    split = data.split_semi_supervised(ds, 100, 200, seed=1)
    assert np.bincount(split.labeled.labels).tolist() == [10] * 10
    assert len(split.validation) == 200
    assert len(split.labeled) + len(split.unlabeled) + len(split.validation) == len(ds)
    rows = lambda d: {tuple(r) for r in d.inputs}
    assert not rows(split.labeled) & rows(split.validation)
    assert not rows(split.unlabeled) & rows(split.validation)
    assert not rows(split.labeled) & rows(split.unlabeled)


def test_split_deterministic():
    ds = _mnist_like()
    a = data.split_semi_supervised(ds, 50, 100, seed=3)
    b = data.split_semi_supervised(ds, 50, 100, seed=3)
    assert np.array_equal(a.labeled.inputs, b.labeled.inputs)
    assert np.array_equal(a.validation.inputs, b.validation.inputs)


def test_split_divisibility_error_names_remainder():
    with pytest.raises(ContractError, match="remainder 5"):
        data.split_semi_supervised(_mnist_like(), 105, 0)


def test_split_too_large():
    with pytest.raises(ContractError):
        data.split_semi_supervised(_mnist_like(100), 50, 60)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), per_class=st.integers(0, 8), n_val=st.integers(0, 50))
def test_split_partition_property(seed, per_class, n_val):
    ds = _mnist_like(200, 5, seed)
    split = data.split_semi_supervised(ds, per_class * 5, n_val, seed)
    sizes = [len(p) if p is not None else 0 for p in (split.labeled, split.unlabeled, split.validation)]
    assert sum(sizes) == 200
    if per_class:
        assert np.bincount(split.labeled.labels, minlength=5).tolist() == [per_class] * 5


def test_csv_round_trip(tmp_path):
    ds = data.make_synthetic("moons", n=20, seed=0)
    data.write_csv(tmp_path / "m.csv", ds)
    back = data.read_csv(tmp_path / "m.csv")
    assert np.array_equal(back.inputs, ds.inputs) and np.array_equal(back.labels, ds.labels)
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "x0,x1,label"
