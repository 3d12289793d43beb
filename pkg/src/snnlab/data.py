"""IDX (MNIST / Fashion-MNIST) ingestion, normalization and batching."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from snnlab.errors import DataError, FormatError, ParameterError
from snnlab.numerics import Rng

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
DATA_DIR_ENV = "SNNLAB_DATA_DIR"

FILENAMES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # [N, ...] float64
    labels: np.ndarray  # [N] int64
    normalization: tuple[float, float] | None = None

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def take(self, idx) -> "Dataset":
        return replace(self, images=self.images[idx], labels=self.labels[idx])

    def flat(self) -> "Dataset":
        return replace(self, images=self.images.reshape(len(self), -1))


@dataclass(frozen=True)
class SyntheticInput:
    values: np.ndarray
    seed: int


def synthetic_input(seed: int, batch: int, n: int) -> SyntheticInput:
    """Standard-normal input rows, reproducible from ``seed``."""
    return SyntheticInput(Rng(seed).substream(0).generator().standard_normal((batch, n)), seed)


def _read_bytes(path) -> bytes:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, magic: int, what: str) -> np.ndarray:
    if len(raw) < 4:
        raise FormatError(f"{what}: file too short for a header", 0)
    (found,) = struct.unpack_from(">I", raw, 0)
    if found != magic:
        raise FormatError(f"{what}: bad magic number 0x{found:08x}, expected 0x{magic:08x}", 0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{what}: truncated dimension header", len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    size = int(np.prod(dims))
    if len(raw) < header + size:
        raise FormatError(f"{what}: truncated payload, need {size} bytes after the header", len(raw))
    if len(raw) > header + size:
        raise FormatError(f"{what}: {len(raw) - header - size} trailing bytes", header + size)
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Raw dataset with pixel values in [0, 255]; gzip files are read transparently."""
    images = _parse_idx(_read_bytes(images_path), IMAGES_MAGIC, str(images_path))
    labels = _parse_idx(_read_bytes(labels_path), LABELS_MAGIC, str(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"count mismatch: {images.shape[0]} images in {images_path}, {labels.shape[0]} labels in {labels_path}",
            4,
        )
    return Dataset(images.astype(np.float64), labels.astype(np.int64))


def idx_bytes(array: np.ndarray) -> bytes:
    """Serialize a uint8 array (1-D labels or 3-D images) in IDX layout."""
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255 or not np.array_equal(arr, np.round(arr)):
            raise ParameterError("IDX payload must hold integers in [0, 255]")
        arr = arr.astype(np.uint8)
    magic = 0x00000800 | arr.ndim
    return struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray, compress: bool = False) -> None:
    for path, arr in ((images_path, images), (labels_path, labels)):
        payload = idx_bytes(arr)
        if compress:
            payload = gzip.compress(payload, mtime=0)
        Path(path).write_bytes(payload)


def normalize(train: Dataset, *others: Dataset) -> tuple[Dataset, ...]:
    """Scale every split by the training split's scalar mean and std."""
    mean = float(train.images.mean())
    std = float(train.images.std())
    if not std > 0:
        raise DataError("training images have zero variance; cannot normalize")
    return tuple(replace(d, images=(d.images - mean) / std, normalization=(mean, std)) for d in (train, *others))


def data_dir(explicit=None) -> Path:
    if explicit:
        return Path(explicit)
    env = os.environ.get(DATA_DIR_ENV)
    if not env:
        raise DataError(f"no data directory given; set {DATA_DIR_ENV} or pass data_dir")
    return Path(env)


def _find(directory: Path, stem: str) -> Path | None:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
        if (directory / name).is_file():
            return directory / name
    return None


def load_split(directory, split: str = "train") -> Dataset | None:
    """Load ``split`` from a directory in the standard file naming; ``None`` if absent."""
    directory = Path(directory)
    img_stem, lbl_stem = FILENAMES[split]
    img, lbl = _find(directory, img_stem), _find(directory, lbl_stem)
    if img is None or lbl is None:
        return None
    return load_idx(img, lbl)


def load_dataset(name: str = "mnist", directory=None) -> tuple[Dataset, Dataset | None]:
    """Train (and test, when present) splits of ``mnist`` or ``fashion`` under the data root."""
    if name not in ("mnist", "fashion"):
        raise DataError(f"unknown dataset {name!r}; only 'mnist' and 'fashion' are supported")
    root = data_dir(directory)
    candidates = [root / name, root]
    for d in candidates:
        train = load_split(d, "train")
        if train is not None:
            return train, load_split(d, "test")
    raise DataError(
        f"no IDX training files for {name!r} under {root}; expected {FILENAMES['train'][0]}[.gz] "
        f"(set {DATA_DIR_ENV} or run scripts/fetch_mnist_subset.py)"
    )


def subset(dataset: Dataset, n_subset: int, seed: int | Rng) -> Dataset:
    if not 0 <= n_subset <= len(dataset):
        raise ParameterError(f"n_subset must lie in [0, {len(dataset)}], got {n_subset}")
    rng = seed if isinstance(seed, Rng) else Rng(seed)
    perm = rng.generator().permutation(len(dataset))
    return dataset.take(perm[:n_subset])


def iter_batches(dataset: Dataset, batch_size: int, seed: int | Rng) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Seeded shuffle then consecutive batches; the last batch may be short."""
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    rng = seed if isinstance(seed, Rng) else Rng(seed)
    order = rng.generator().permutation(len(dataset))
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        yield dataset.images[idx], dataset.labels[idx]


def subset_and_batch(dataset: Dataset, n_subset: int, batch_size: int, seed: int):
    return iter_batches(subset(dataset, n_subset, Rng(seed).substream(0)), batch_size, Rng(seed).substream(1))
