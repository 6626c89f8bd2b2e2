"""Dataset loading, preprocessing, and train-time augmentation.

Parsers work on local files only and are bit-deterministic; downloading is
a separate fetch step driven by a manifest of URLs and content digests.
Images come out as float32 NHWC in [0, 1]. CIFAR additionally goes through
per-image global contrast normalization and ZCA whitening before training;
MNIST gets only the [0, 1] scaling.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import os
import struct
import tarfile
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class FormatError(ValueError):
    """A dataset file does not match its documented binary layout."""


@dataclass
class Dataset:
    images: np.ndarray  # [count, height, width, channels] float32
    labels: np.ndarray  # [count] int64
    split: str
    class_count: int

    def __len__(self) -> int:
        return len(self.labels)


def default_data_dir() -> Path:
    env = os.environ.get("POLUNET_DATA_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "polunet"


def _open_maybe_gz(path: Path):
    if path.exists():
        return open(path, "rb")
    gz = path.with_name(path.name + ".gz")
    if gz.exists():
        return gzip.open(gz, "rb")
    raise FileNotFoundError(f"missing dataset file {path} (or {gz.name})")


def _read_exact(fh, count: int, path: Path, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"{path}: truncated while reading {what} "
                          f"(wanted {count} bytes, got {len(data)})")
    return data


def _load_idx_images(path: Path) -> np.ndarray:
    with _open_maybe_gz(path) as fh:
        magic, count, rows, cols = struct.unpack(">iiii", _read_exact(fh, 16, path, "header"))
        if magic != IMAGE_MAGIC:
            raise FormatError(f"{path}: bad image magic 0x{magic:08x} at offset 0")
        raw = _read_exact(fh, count * rows * cols, path, "pixels")
    pixels = np.frombuffer(raw, np.uint8).reshape(count, rows, cols, 1)
    return pixels.astype(np.float32) / 255.0


def _load_idx_labels(path: Path) -> np.ndarray:
    with _open_maybe_gz(path) as fh:
        magic, count = struct.unpack(">ii", _read_exact(fh, 8, path, "header"))
        if magic != LABEL_MAGIC:
            raise FormatError(f"{path}: bad label magic 0x{magic:08x} at offset 0")
        raw = _read_exact(fh, count, path, "labels")
    return np.frombuffer(raw, np.uint8).astype(np.int64)


def load_mnist(data_dir) -> Tuple[Dataset, Dataset]:
    """Parse the four big-endian IDX files into train/test splits."""
    d = Path(data_dir)
    train = Dataset(
        images=_load_idx_images(d / "train-images-idx3-ubyte"),
        labels=_load_idx_labels(d / "train-labels-idx1-ubyte"),
        split="train", class_count=10,
    )
    test = Dataset(
        images=_load_idx_images(d / "t10k-images-idx3-ubyte"),
        labels=_load_idx_labels(d / "t10k-labels-idx1-ubyte"),
        split="test", class_count=10,
    )
    for ds in (train, test):
        if len(ds.images) != len(ds.labels):
            raise FormatError(f"mnist {ds.split}: {len(ds.images)} images "
                              f"but {len(ds.labels)} labels")
    return train, test


def _find_cifar_dir(data_dir: Path, variant: str) -> Path:
    sub = "cifar-10-batches-bin" if variant == "c10" else "cifar-100-binary"
    probe = "data_batch_1.bin" if variant == "c10" else "train.bin"
    for candidate in (data_dir, data_dir / sub):
        if (candidate / probe).exists():
            return candidate
    raise FileNotFoundError(f"no {variant} binaries under {data_dir}")


def _parse_cifar_file(path: Path, label_bytes: int) -> Tuple[np.ndarray, np.ndarray]:
    raw = np.fromfile(path, np.uint8)
    record = label_bytes + 3072
    if raw.size == 0 or raw.size % record:
        raise FormatError(f"{path}: size {raw.size} is not a multiple of the "
                          f"{record}-byte record length")
    rows = raw.reshape(-1, record)
    labels = rows[:, label_bytes - 1].astype(np.int64)  # fine label is the last one
    planar = rows[:, label_bytes:].reshape(-1, 3, 32, 32)
    images = planar.transpose(0, 2, 3, 1).astype(np.float32) / 255.0
    return images, labels


def load_cifar(data_dir, variant: str = "c10") -> Tuple[Dataset, Dataset]:
    """Parse CIFAR binary batches; c100 keeps the fine labels."""
    if variant not in ("c10", "c100"):
        raise ValueError(f"variant must be 'c10' or 'c100', got {variant!r}")
    d = _find_cifar_dir(Path(data_dir), variant)
    if variant == "c10":
        parts = [_parse_cifar_file(d / f"data_batch_{i}.bin", 1) for i in range(1, 6)]
        train_images = np.concatenate([p[0] for p in parts])
        train_labels = np.concatenate([p[1] for p in parts])
        test_images, test_labels = _parse_cifar_file(d / "test_batch.bin", 1)
        classes = 10
    else:
        train_images, train_labels = _parse_cifar_file(d / "train.bin", 2)
        test_images, test_labels = _parse_cifar_file(d / "test.bin", 2)
        classes = 100
    train = Dataset(train_images, train_labels, "train", classes)
    test = Dataset(test_images, test_labels, "test", classes)
    return train, test


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def global_contrast_normalize(images: np.ndarray, scale: float = 55.0,
                              epsilon: float = 1e-8) -> np.ndarray:
    """Per image: subtract the mean, then divide by max(epsilon, l2_norm/scale).

    Centering runs in float64 (exact for float32 pixels), so a constant
    image comes out exactly zero instead of epsilon-amplified rounding
    residue; work is chunked to bound the temporary.
    """
    images = np.asarray(images, np.float32)
    flat = images.reshape(len(images), -1)
    out = np.empty_like(flat)
    step = max(1, (1 << 25) // max(flat.shape[1], 1))
    for start in range(0, len(flat), step):
        block = flat[start:start + step].astype(np.float64)
        block -= block.mean(axis=1, keepdims=True)
        norms = np.linalg.norm(block, axis=1, keepdims=True)
        out[start:start + step] = (block / np.maximum(epsilon, norms / scale)
                                   ).astype(np.float32)
    return out.reshape(images.shape)


@dataclass(frozen=True)
class ZcaTransform:
    mean: np.ndarray              # [dims] float32
    whitening_matrix: np.ndarray  # [dims, dims] float32, symmetric
    epsilon: float
    image_shape: Tuple[int, int, int]


def zca_fit(images: np.ndarray, epsilon: float = 1e-2,
            max_samples: int = 10_000, seed: int = 0) -> ZcaTransform:
    """Fit the symmetric whitening transform U (L + eps I)^-1/2 U^T on pixel covariance.

    At most max_samples images (uniform seeded subsample) feed the
    covariance so the eigendecomposition stays affordable.
    """
    images = np.asarray(images)
    if images.ndim != 4 or len(images) < 2:
        raise ValueError("zca_fit needs at least two NHWC images")
    if len(images) > max_samples:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(images), max_samples, replace=False)
        images = images[np.sort(pick)]
    flat = images.reshape(len(images), -1).astype(np.float64)
    mean = flat.mean(axis=0)
    centered = flat - mean
    cov = centered.T @ centered / len(centered)
    eigvals, eigvecs = np.linalg.eigh(cov)
    scaled = eigvecs / np.sqrt(eigvals + epsilon)
    white = scaled @ eigvecs.T
    white = 0.5 * (white + white.T)
    return ZcaTransform(
        mean=mean.astype(np.float32),
        whitening_matrix=white.astype(np.float32),
        epsilon=float(epsilon),
        image_shape=tuple(images.shape[1:]),
    )


def zca_apply(transform: ZcaTransform, images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, np.float32)
    if images.shape[1:] != transform.image_shape:
        raise ValueError(
            f"images {images.shape[1:]} do not match the fitted shape "
            f"{transform.image_shape}"
        )
    flat = images.reshape(len(images), -1)
    out = (flat - transform.mean) @ transform.whitening_matrix
    return out.reshape(images.shape)


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

PAD = 4


def apply_crop_flip(batch: np.ndarray, offsets: np.ndarray, flips: np.ndarray) -> np.ndarray:
    """Deterministic core of the augmentation: pad 4, crop at offsets, flip where told."""
    batch = np.asarray(batch)
    if batch.ndim != 4 or batch.shape[1] != 32 or batch.shape[2] != 32:
        raise ValueError(f"augmentation expects [B, 32, 32, C] batches, got {batch.shape}")
    padded = np.pad(batch, ((0, 0), (PAD, PAD), (PAD, PAD), (0, 0)))
    out = np.empty_like(batch)
    for i in range(len(batch)):
        dy, dx = offsets[i]
        img = padded[i, dy:dy + 32, dx:dx + 32, :]
        out[i] = img[:, ::-1, :] if flips[i] else img
    return out


def augment(batch: np.ndarray, seed) -> np.ndarray:
    """Random 32x32 crop from 4-pixel zero padding plus a fair horizontal flip.

    Deterministic given (seed, position in batch): draws are vectorized
    from a generator seeded with `seed`.
    """
    rng = np.random.default_rng(seed)
    offsets = rng.integers(0, 2 * PAD + 1, size=(len(batch), 2))
    flips = rng.random(len(batch)) < 0.5
    return apply_crop_flip(batch, offsets, flips)


# ---------------------------------------------------------------------------
# Fetching
# ---------------------------------------------------------------------------

def _digest(path: Path, algo: str) -> str:
    h = hashlib.new(algo)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_manifest(path=None) -> dict:
    if path is None:
        path = Path(__file__).with_name("datasets.json")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def fetch_dataset(name: str, data_dir=None, manifest=None, verify: bool = True) -> Path:
    """Download and unpack one dataset per the manifest; returns its directory.

    Every file is digest-checked when the manifest carries a digest and
    `verify` is true. Already-present files are kept (and re-verified).
    """
    entries = manifest if isinstance(manifest, dict) else load_manifest(manifest)
    if name not in entries:
        raise KeyError(f"dataset {name!r} not in manifest (have {sorted(entries)})")
    base = Path(data_dir) if data_dir else default_data_dir()
    dest = base / name
    dest.mkdir(parents=True, exist_ok=True)
    for item in entries[name]["files"]:
        target = dest / item["name"]
        if not target.exists():
            urllib.request.urlretrieve(item["url"], target)
        if verify:
            for algo in ("sha256", "md5"):
                if algo in item:
                    got = _digest(target, algo)
                    if got != item[algo]:
                        raise FormatError(
                            f"{target}: {algo} mismatch (expected {item[algo]}, got {got})"
                        )
        if item.get("extract") and tarfile.is_tarfile(target):
            with tarfile.open(target) as tar:
                tar.extractall(dest)
    return dest
