"""Dataset ingestion: IDX and CIFAR-10 binary parsing into grayscale images.

All pixel data lives in [0, 1] as float64 from ingestion onward so that
purity thresholds, variance bounds and attack losses share one numeric
domain.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049

CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 channel-major pixels
CIFAR_SIDE = 32

# Rec.601 luma weights
GRAY_R, GRAY_G, GRAY_B = 0.299, 0.587, 0.114


class FormatError(ValueError):
    """A dataset file does not follow its declared binary format."""


class MagicError(FormatError):
    """Magic number does not match the expected file kind."""


class TruncationError(FormatError):
    """File ends before the data promised by its header."""


class CountMismatchError(FormatError):
    """Image file and label file disagree on the number of records."""


@dataclass(frozen=True)
class Image:
    """Dense grayscale pixel grid in [0, 1], row-major."""

    width: int
    height: int
    pixels: np.ndarray  # shape (height, width), float64

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if px.shape != (self.height, self.width):
            raise ValueError(
                f"pixel array shape {px.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def flat(self) -> np.ndarray:
        """Row-major flattened view of the pixels."""
        return self.pixels.reshape(-1)


@dataclass(frozen=True)
class LabeledDataset:
    """Images with integer class labels in [0, num_classes)."""

    images: tuple[Image, ...]
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(labels):
            raise ValueError("images and labels must have equal length")
        if self.num_classes <= 1:
            raise ValueError("num_classes must exceed 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")
        labels = labels.copy()
        labels.flags.writeable = False
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.images)


def to_grayscale(r: float, g: float, b: float):
    """Rec.601 luminance of RGB channels given in [0, 1]."""
    return GRAY_R * r + GRAY_G * g + GRAY_B * b


def _read_exact(data: bytes, offset: int, count: int, what: str) -> bytes:
    if offset + count > len(data):
        raise TruncationError(
            f"{what}: need {count} bytes at offset {offset}, "
            f"file has {len(data)}"
        )
    return data[offset:offset + count]


def load_mnist(images_path, labels_path) -> LabeledDataset:
    """Parse an IDX image/label file pair (big-endian, magics 2051/2049)."""
    with open(images_path, "rb") as f:
        img_data = f.read()
    with open(labels_path, "rb") as f:
        lab_data = f.read()

    magic, = struct.unpack(">I", _read_exact(img_data, 0, 4, "image header"))
    if magic != IDX_IMAGE_MAGIC:
        raise MagicError(f"image file magic {magic}, expected {IDX_IMAGE_MAGIC}")
    n_img, rows, cols = struct.unpack(
        ">III", _read_exact(img_data, 4, 12, "image header"))
    payload = _read_exact(img_data, 16, n_img * rows * cols, "image data")

    magic, = struct.unpack(">I", _read_exact(lab_data, 0, 4, "label header"))
    if magic != IDX_LABEL_MAGIC:
        raise MagicError(f"label file magic {magic}, expected {IDX_LABEL_MAGIC}")
    n_lab, = struct.unpack(">I", _read_exact(lab_data, 4, 4, "label header"))
    labels = np.frombuffer(
        _read_exact(lab_data, 8, n_lab, "label data"), dtype=np.uint8)

    if n_img != n_lab:
        raise CountMismatchError(f"{n_img} images but {n_lab} labels")
    if labels.size and labels.max() >= 10:
        raise FormatError(f"label {labels.max()} outside the 10 MNIST classes")

    raw = np.frombuffer(payload, dtype=np.uint8).reshape(n_img, rows, cols)
    images = tuple(
        Image(cols, rows, raw[i].astype(np.float64) / 255.0)
        for i in range(n_img)
    )
    return LabeledDataset(images, labels.astype(np.int64), 10)


def save_idx(dataset: LabeledDataset, images_path, labels_path) -> None:
    """Write a dataset back to an IDX image/label file pair.

    Pixels are rounded to the nearest byte; datasets produced by
    `load_mnist` round-trip bit-exactly.
    """
    if not dataset.images:
        raise ValueError("cannot write an empty dataset")
    rows, cols = dataset.images[0].height, dataset.images[0].width
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, len(dataset), rows, cols))
        for img in dataset.images:
            f.write(np.rint(img.pixels * 255.0).astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, len(dataset)))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def load_cifar10(batch_path) -> LabeledDataset:
    """Parse one CIFAR-10 binary batch into grayscale images."""
    with open(batch_path, "rb") as f:
        data = f.read()
    if len(data) % CIFAR_RECORD_BYTES != 0:
        raise TruncationError(
            f"file length {len(data)} is not a multiple of {CIFAR_RECORD_BYTES}")
    n = len(data) // CIFAR_RECORD_BYTES
    raw = np.frombuffer(data, dtype=np.uint8).reshape(n, CIFAR_RECORD_BYTES)
    labels = raw[:, 0].astype(np.int64)
    if labels.size and labels.max() >= 10:
        raise FormatError(f"label {labels.max()} outside the 10 CIFAR-10 classes")
    chans = raw[:, 1:].reshape(n, 3, CIFAR_SIDE, CIFAR_SIDE).astype(np.float64) / 255.0
    gray = to_grayscale(chans[:, 0], chans[:, 1], chans[:, 2])
    images = tuple(
        Image(CIFAR_SIDE, CIFAR_SIDE, np.clip(gray[i], 0.0, 1.0)) for i in range(n)
    )
    return LabeledDataset(images, labels, 10)


def write_pgm(image: Image, path) -> None:
    """Write an image as a binary PGM (P5, maxval 255) file."""
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.rint(image.pixels * 255.0).astype(np.uint8).tobytes())
