"""Datasets: IDX (MNIST / Fashion-MNIST) reading and writing, plus a
synthetic union-of-subspaces generator.
"""

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grassmann import random_basis

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
DATA_DIR_ENV = "KSCN_DATA_DIR"

# file stems shared by MNIST and Fashion-MNIST
_SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
DATASET_DIRS = {"mnist": "mnist", "fashion": "fashion"}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Images ``(n, H, W, C)`` and optional integer labels.

    ``images`` holds either float64 values in [0, 1] or the raw ``uint8``
    bytes; the model code accepts both and scales bytes on the fly, which
    keeps 70k-image datasets at 55 MB instead of 440 MB.
    """

    images: np.ndarray
    labels: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError(f"images must be (n, H, W, C), got shape {self.images.shape}")
        if self.labels is not None and len(self.labels) != len(self.images):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.images)

    def as_float(self):
        """Images as float64 in [0, 1]."""
        if self.images.dtype == np.uint8:
            return self.images / 255.0
        return self.images

    def subset(self, index):
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.images[index], labels, self.name)


def _open(path):
    path = Path(path)
    if not path.exists():
        gz = path.with_name(path.name + ".gz")
        if gz.exists():
            path = gz
        else:
            raise FileNotFoundError(f"no such file: {path}")
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_header(buf, expected_magic, path):
    if len(buf) < 8:
        raise FormatError(f"{path}: truncated header")
    magic, count = struct.unpack(">II", buf[:8])
    if magic != expected_magic:
        raise FormatError(f"{path}: magic {magic}, expected {expected_magic}")
    return count


def read_idx_images(path, raw=False):
    """Images from an IDX3 file as ``(n, rows, cols, 1)``.

    Pixels are divided by 255 unless ``raw`` is set, in which case the
    bytes are returned as ``uint8``.
    """
    buf = _open(path)
    n = _parse_header(buf, IMAGE_MAGIC, path)
    if len(buf) < 16:
        raise FormatError(f"{path}: truncated header")
    rows, cols = struct.unpack(">II", buf[8:16])
    expected = 16 + n * rows * cols
    if len(buf) < expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(buf)}")
    pixels = np.frombuffer(buf, dtype=np.uint8, count=n * rows * cols, offset=16)
    pixels = pixels.reshape(n, rows, cols, 1)
    return pixels.copy() if raw else pixels / 255.0


def read_idx_labels(path):
    buf = _open(path)
    n = _parse_header(buf, LABEL_MAGIC, path)
    if len(buf) < 8 + n:
        raise FormatError(f"{path}: expected {8 + n} bytes, found {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def load_idx(images_path, labels_path=None, raw=False, name=""):
    """Read an IDX image file and (optionally) its label file.

    Raises
    ------
    FormatError
        On a wrong magic number, a truncated file or an image/label count
        mismatch.
    """
    images = read_idx_images(images_path, raw=raw)
    labels = None
    if labels_path is not None:
        labels = read_idx_labels(labels_path)
        if len(labels) != len(images):
            raise FormatError(f"{images_path} has {len(images)} images but {labels_path} has {len(labels)} labels")
    return Dataset(images, labels, name or Path(images_path).name)


def write_idx(dataset, images_path, labels_path=None):
    """Write ``dataset`` as IDX files (pixels rounded back to bytes)."""
    images = dataset.images
    if images.dtype != np.uint8:
        images = np.rint(np.clip(images, 0.0, 1.0) * 255.0).astype(np.uint8)
    n, rows, cols, ch = images.shape
    if ch != 1:
        raise ValueError("IDX image files hold single-channel images")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    if labels_path is not None:
        if dataset.labels is None:
            raise ValueError("dataset has no labels to write")
        with open(labels_path, "wb") as fh:
            fh.write(struct.pack(">II", LABEL_MAGIC, n))
            fh.write(np.asarray(dataset.labels, dtype=np.uint8).tobytes())


def data_dir(override=None):
    """Directory holding ``mnist/`` and ``fashion/``: argument, env var, then ``./data``."""
    if override:
        return Path(override)
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def load_dataset(name="mnist", split="all", root=None, raw=True):
    """Load MNIST or Fashion-MNIST.

    ``split="all"`` (alias ``"train"``) concatenates the 60k training and
    10k test images; ``split="test"`` returns the 10k test images only.
    """
    if name not in DATASET_DIRS:
        raise ValueError(f"unknown dataset {name!r}; choose from {sorted(DATASET_DIRS)}")
    folder = data_dir(root) / DATASET_DIRS[name]
    if not folder.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {folder}")
    if split not in ("all", "train", "test"):
        raise ValueError(f"unknown split {split!r}")
    parts = ["test"] if split == "test" else ["train", "test"]
    sets = [load_idx(folder / _SPLIT_FILES[s][0], folder / _SPLIT_FILES[s][1], raw=raw) for s in parts]
    if len(sets) == 1:
        return Dataset(sets[0].images, sets[0].labels, f"{name}-{split}")
    return Dataset(
        np.concatenate([s.images for s in sets]),
        np.concatenate([s.labels for s in sets]),
        f"{name}-{split}",
    )


@dataclass(frozen=True)
class SynthSpec:
    k: int = 5
    d: int = 20
    p: int = 3
    points_per_cluster: int = 200
    noise_sigma: float = 0.0
    outlier_count: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.p <= self.d:
            raise ValueError(f"need 1 <= p <= d, got p={self.p}, d={self.d}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.k < 1 or self.points_per_cluster < 0 or self.outlier_count < 0:
            raise ValueError("counts must be non-negative and k positive")


def gen_synth(spec):
    """Sample points from a union of random linear subspaces.

    Each cluster draws a random orthonormal basis ``S`` and points
    ``S c + sigma * noise`` with standard-normal coefficients ``c``.
    ``spec.outlier_count`` points uniform in ``[-3, 3]^d`` are appended and
    labelled ``-1``.

    Returns
    -------
    points : ndarray, shape (k * points_per_cluster + outlier_count, d)
    labels : ndarray of int
    subspaces : list of SubspaceBasis
    """
    rng = np.random.default_rng(spec.seed)
    subs = [random_basis(spec.d, spec.p, rng) for _ in range(spec.k)]
    blocks, labels = [], []
    for i, s in enumerate(subs):
        coef = rng.standard_normal((spec.points_per_cluster, spec.p))
        pts = coef @ s.basis.T
        if spec.noise_sigma:
            pts = pts + spec.noise_sigma * rng.standard_normal(pts.shape)
        blocks.append(pts)
        labels.append(np.full(spec.points_per_cluster, i))
    if spec.outlier_count:
        blocks.append(rng.uniform(-3.0, 3.0, size=(spec.outlier_count, spec.d)))
        labels.append(np.full(spec.outlier_count, -1))
    return np.concatenate(blocks), np.concatenate(labels), subs
