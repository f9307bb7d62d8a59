import numpy as np
import pytest

from tue_lab.core.errors import BadConfig, FormatError
from tue_lab.datasets.cifar import load_cifar_binary, parse_cifar_records
from tue_lab.datasets.dataset import class_capped_sample, make_dataset, shuffle_labels, subset
from tue_lab.datasets.io import dataset_from_bytes, dataset_to_bytes, load_dataset, save_dataset


def test_tued_round_trip(tmp_path, tiny_train):
    path = save_dataset(tiny_train, tmp_path / "train.tued")
    loaded = load_dataset(path)
    assert loaded.equals(tiny_train), "TUED round trip must be bit-exact"
    assert loaded.name == "train"
    assert dataset_to_bytes(loaded) == dataset_to_bytes(tiny_train)


def test_tued_rejects_corruption(tiny_train):
    payload = dataset_to_bytes(tiny_train)
    with pytest.raises(FormatError):
        dataset_from_bytes(b"TUEP" + payload[4:])
    with pytest.raises(FormatError):
        dataset_from_bytes(payload[:10])
    with pytest.raises(FormatError):
        dataset_from_bytes(payload + b"\x00")
    bad_version = payload[:4] + (2).to_bytes(4, "little") + payload[8:]
    with pytest.raises(FormatError):
        dataset_from_bytes(bad_version)


def test_make_dataset_clamps_and_quantizes():
    ds = make_dataset(np.array([[-0.5, 0.1], [1.5, 0.3]]), np.array([0, 1]), 2, 2, 1, 1)
    assert ds.images.min() == 0.0 and ds.images.max() == 1.0
    assert np.array_equal(ds.images, ds.images.astype(np.float32).astype(np.float64))
    with pytest.raises(BadConfig):
        make_dataset(np.zeros((2, 2)), np.array([0, 0]), 2, 2, 1, 1)


def _cifar_bytes(labels, d, seed=0):
    draw = np.random.default_rng(seed)
    rows = [bytes([y]) + draw.integers(0, 256, size=d, dtype=np.uint8).tobytes() for y in labels]
    return b"".join(rows)


def test_cifar_records(tmp_path):
    payload = _cifar_bytes([0, 1, 2, 1], d=12)
    images, labels = parse_cifar_records(payload, width=2, height=2, channels=3)
    assert labels.tolist() == [0, 1, 2, 1]
    assert images.shape == (4, 12) and images.max() <= 1.0
    assert images[0, 0] == payload[1] / 255.0
    with pytest.raises(FormatError):
        parse_cifar_records(payload[:-1], width=2, height=2, channels=3)

    (tmp_path / "a.bin").write_bytes(payload)
    (tmp_path / "b.bin").write_bytes(_cifar_bytes([2, 0], d=12, seed=1))
    ds = load_cifar_binary([tmp_path / "a.bin", tmp_path / "b.bin"], width=2, height=2, channels=3, name="mini")
    assert ds.n == 6 and ds.K == 3 and ds.shape == (3, 2, 2)


def test_class_capped_sample(tiny_train):
    capped = class_capped_sample(tiny_train, 2, seed=1)
    assert capped.class_counts().tolist() == [2] * tiny_train.K
    again = class_capped_sample(tiny_train, 2, seed=1)
    assert capped.equals(again), "seeded"
    assert class_capped_sample(tiny_train, 100, seed=1).equals(tiny_train), "cap above class size keeps all"
    with pytest.raises(BadConfig):
        class_capped_sample(tiny_train, 0, seed=1)


def test_subset_and_shuffled_labels(tiny_train):
    part = subset(tiny_train, np.arange(0, tiny_train.n, 2))
    assert part.n == tiny_train.n // 2
    shuffled = shuffle_labels(tiny_train, seed=3)
    assert np.array_equal(np.sort(shuffled.labels), np.sort(tiny_train.labels))
    assert np.array_equal(shuffled.images, tiny_train.images)
