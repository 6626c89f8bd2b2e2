"""Shared fixtures: synthetic dataset files and small learnable datasets."""

import os
import struct
from pathlib import Path

import numpy as np
import pytest

from polunet import data as datamod

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def write_idx_images(path, images_u8: np.ndarray) -> None:
    count, rows, cols = images_u8.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", IMAGE_MAGIC, count, rows, cols))
        fh.write(images_u8.astype(np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ii", LABEL_MAGIC, len(labels)))
        fh.write(labels.astype(np.uint8).tobytes())


def make_mnist_dir(root: Path, n_train: int, n_test: int, seed: int = 0) -> Path:
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for split, count in (("train", n_train), ("t10k", n_test)):
        images = rng.integers(0, 256, (count, 28, 28), dtype=np.uint8)
        labels = rng.integers(0, 10, count, dtype=np.uint8)
        write_idx_images(root / f"{split}-images-idx3-ubyte", images)
        write_idx_labels(root / f"{split}-labels-idx1-ubyte", labels)
    return root


def write_cifar_file(path, count: int, label_bytes: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    records = np.empty((count, label_bytes + 3072), np.uint8)
    if label_bytes == 2:
        records[:, 0] = rng.integers(0, 20, count)   # coarse
        records[:, 1] = rng.integers(0, 100, count)  # fine
    else:
        records[:, 0] = rng.integers(0, 10, count)
    records[:, label_bytes:] = rng.integers(0, 256, (count, 3072))
    records.tofile(path)


def make_cifar10_dir(root: Path, per_batch: int, n_test: int, seed: int = 0) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    for i in range(1, 6):
        write_cifar_file(root / f"data_batch_{i}.bin", per_batch, 1, seed + i)
    write_cifar_file(root / "test_batch.bin", n_test, 1, seed + 99)
    return root


def make_cifar100_dir(root: Path, n_train: int, n_test: int, seed: int = 0) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    write_cifar_file(root / "train.bin", n_train, 2, seed)
    write_cifar_file(root / "test.bin", n_test, 2, seed + 1)
    return root


def synthetic_classification(count: int, seed: int, side: int = 8,
                             classes: int = 10) -> datamod.Dataset:
    """Linearly separable-ish images: the class is the argmax of fixed projections."""
    proj_rng = np.random.default_rng(1234)
    proj = proj_rng.standard_normal((side * side, classes))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((count, side, side, 1)).astype(np.float32)
    y = (x.reshape(count, -1) @ proj).argmax(axis=1)
    return datamod.Dataset(x, y, "train", classes)


def real_dataset_dir(name: str):
    """Directory holding the real dataset files, or None when absent."""
    candidates = []
    env = os.environ.get("POLUNET_DATA_DIR")
    if env:
        candidates.append(Path(env) / name)
        candidates.append(Path(env))
    candidates.append(datamod.default_data_dir() / name)
    probes = {
        "mnist": ("train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"),
        "cifar10": ("data_batch_1.bin", "cifar-10-batches-bin/data_batch_1.bin"),
        "cifar100": ("train.bin", "cifar-100-binary/train.bin"),
    }[name]
    for base in candidates:
        for probe in probes:
            if (base / probe).exists():
                return base
    return None


@pytest.fixture(scope="session")
def mnist_small(tmp_path_factory):
    """A small synthetic MNIST-format directory (valid files, random content)."""
    root = tmp_path_factory.mktemp("mnist_small")
    return make_mnist_dir(root, n_train=256, n_test=64)
