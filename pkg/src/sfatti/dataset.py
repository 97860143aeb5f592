"""MNIST ingestion from IDX files (raw or gzip-wrapped)."""
from __future__ import annotations

import gzip
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"

# (images, labels) basenames per split
STANDARD_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    def __init__(self, path, offset, message):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.path = path
        self.offset = offset


@dataclass(frozen=True)
class ImageSample:
    pixels: np.ndarray  # (784,) in [0, 1]
    label: int


class DatasetSplit:
    """An immutable, ordered set of samples.

    Pixels are held as one float32 matrix so batches slice without copies.
    """

    def __init__(self, pixels: np.ndarray, labels: np.ndarray, split_tag: str, index=None):
        pixels = np.ascontiguousarray(pixels, dtype=np.float32)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        if pixels.ndim != 2 or pixels.shape[1] != 784:
            raise ValueError(f"expected (N, 784) pixels, got {pixels.shape}")
        if len(labels) != len(pixels):
            raise ValueError("pixel/label count mismatch")
        # position of each sample in the source file; keys the spike encoder
        index = np.arange(len(labels), dtype=np.int64) if index is None else np.asarray(index, np.int64)
        for arr in (pixels, labels, index):
            arr.setflags(write=False)
        self.index = index
        self.pixels = pixels
        self.labels = labels
        self.split_tag = split_tag

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> ImageSample:
        return ImageSample(self.pixels[i], int(self.labels[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, indices) -> "DatasetSplit":
        indices = np.asarray(indices, dtype=np.int64)
        return DatasetSplit(self.pixels[indices], self.labels[indices], self.split_tag,
                            self.index[indices])

    def head(self, n: int) -> "DatasetSplit":
        return self.subset(np.arange(min(n, len(self))))


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == GZIP_MAGIC:
        data = gzip.decompress(data)
    return data


def _header(data: bytes, path, magic: int, ndims: int) -> tuple[int, ...]:
    need = 4 + 4 * ndims
    if len(data) < need:
        raise IdxFormatError(path, len(data), f"truncated header, need {need} bytes")
    got = int.from_bytes(data[:4], "big")
    if got != magic:
        raise IdxFormatError(path, 0, f"bad magic 0x{got:08x}, expected 0x{magic:08x}")
    return tuple(int.from_bytes(data[4 + 4 * i: 8 + 4 * i], "big") for i in range(ndims))


def load_idx(images_path, labels_path, split_tag: str = "train") -> DatasetSplit:
    images = _read_bytes(images_path)
    labels = _read_bytes(labels_path)

    n_img, rows, cols = _header(images, images_path, IMAGES_MAGIC, 3)
    (n_lab,) = _header(labels, labels_path, LABELS_MAGIC, 1)
    if rows * cols != 784:
        raise IdxFormatError(images_path, 8, f"expected 28x28 images, got {rows}x{cols}")
    if n_img != n_lab:
        raise IdxFormatError(labels_path, 4, f"label count {n_lab} != image count {n_img}")

    body = 16 + n_img * 784
    if len(images) < body:
        raise IdxFormatError(images_path, len(images), f"truncated, expected {body} bytes")
    if len(labels) < 8 + n_lab:
        raise IdxFormatError(labels_path, len(labels), f"truncated, expected {8 + n_lab} bytes")

    pixels = np.frombuffer(images, dtype=np.uint8, count=n_img * 784, offset=16)
    lab = np.frombuffer(labels, dtype=np.uint8, count=n_lab, offset=8)
    if n_lab and lab.max() > 9:
        bad = int(np.argmax(lab > 9))
        raise IdxFormatError(labels_path, 8 + bad, f"label {lab[bad]} outside 0..9")
    return DatasetSplit(pixels.reshape(n_img, 784) / np.float32(255.0), lab, split_tag)


def _resolve(data_dir: Path, base: str) -> Path:
    for cand in (base, base + ".gz"):
        if (data_dir / cand).exists():
            return data_dir / cand
    raise FileNotFoundError(data_dir / base)


def load_mnist(data_dir, split: str) -> DatasetSplit:
    """Load the standard ``train`` or ``test`` split from ``data_dir``."""
    data_dir = Path(data_dir)
    img, lab = STANDARD_FILES[split]
    return load_idx(_resolve(data_dir, img), _resolve(data_dir, lab), split)


def default_data_dir() -> Path | None:
    """``$SFATTI_DATA_DIR`` if set, else ``./data/mnist`` when present."""
    env = os.environ.get("SFATTI_DATA_DIR")
    if env:
        return Path(env)
    local = Path("data/mnist")
    return local if local.is_dir() else None


def shuffled_batches(split: DatasetSplit, batch_size: int, seed: int):
    """Index arrays for one seeded pass over ``split``.

    The last batch may be short.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(split)
    if n == 0:
        return []
    order = np.random.default_rng(seed).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def write_idx(images_path, labels_path, pixels_u8: np.ndarray, labels: np.ndarray, compress=False):
    """Write an IDX pair; used for fixtures and round-trip tests."""
    pixels_u8 = np.asarray(pixels_u8, dtype=np.uint8).reshape(-1, 784)
    labels = np.asarray(labels, dtype=np.uint8)
    img = (IMAGES_MAGIC.to_bytes(4, "big") + len(pixels_u8).to_bytes(4, "big")
           + (28).to_bytes(4, "big") + (28).to_bytes(4, "big") + pixels_u8.tobytes())
    lab = LABELS_MAGIC.to_bytes(4, "big") + len(labels).to_bytes(4, "big") + labels.tobytes()
    opener = (lambda b: gzip.compress(b, mtime=0)) if compress else (lambda b: b)
    Path(images_path).write_bytes(opener(img))
    Path(labels_path).write_bytes(opener(lab))
