"""Dataset loading (IDX and CSV), label encoding, synthetic generators.

IDX is the big-endian binary layout used by the classic digit benchmarks:
magic ``0x00 0x00 <dtype> <ndim>`` followed by ``ndim`` uint32 dimension
sizes and the raw data.  Only the unsigned-byte dtype (0x08) is supported,
which covers images and labels.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .network import Dataset, project_rows


class DataError(ValueError):
    """Raised for malformed or inconsistent dataset files."""


_IDX_UBYTE = 0x08


def load_idx(path) -> np.ndarray:
    """Read an IDX file into an array (uint8, shape from the header)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise DataError(f"{path}: truncated IDX header")
    zero1, zero2, dtype, ndim = struct.unpack(">BBBB", raw[:4])
    if zero1 != 0 or zero2 != 0:
        raise DataError(f"{path}: bad IDX magic at byte offset 0")
    if dtype != _IDX_UBYTE:
        raise DataError(
            f"{path}: unsupported IDX dtype 0x{dtype:02x} at byte offset 2"
        )
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise DataError(f"{path}: truncated IDX dimension block")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    count = int(np.prod(dims)) if dims else 0
    body = raw[header_end:]
    if len(body) != count:
        raise DataError(
            f"{path}: IDX payload from byte offset {header_end} is "
            f"{len(body)} bytes, header promises {count}"
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array in IDX layout (used by the synthetic generator)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">BBBB", 0, 0, _IDX_UBYTE, array.ndim)
    header += struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def one_hot(labels: np.ndarray, n_classes: int | None = None) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise DataError("labels must be a 1-d array")
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError("labels out of range for one-hot encoding")
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def load_idx_classification(images_path, labels_path, norm_bound: float = 1.0,
                            n_classes: int | None = None) -> Dataset:
    """Images + integer labels -> flattened, norm-bounded, one-hot dataset."""
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if labels.ndim != 1:
        raise DataError(f"{labels_path}: labels must be one-dimensional")
    if images.shape[0] != labels.shape[0]:
        raise DataError(
            f"image/label count mismatch: {images.shape[0]} vs {labels.shape[0]}"
        )
    flat = images.reshape(images.shape[0], -1).astype(float) / 255.0
    return Dataset(inputs=flat, targets=one_hot(labels, n_classes),
                   norm_bound=norm_bound)


def load_csv_dataset(inputs_path, targets_path=None, norm_bound: float = 1.0,
                     task: str = "mse", n_classes: int | None = None) -> Dataset:
    """Numeric CSV(s) -> dataset.

    With ``targets_path=None`` the inputs are their own reconstruction
    targets (after projection, so targets respect the same bound).  For
    ``task='xent'`` the target file must hold one integer label per row.
    """
    try:
        inputs = np.loadtxt(inputs_path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataError(f"{inputs_path}: {exc}") from exc
    if targets_path is None:
        projected = project_rows(inputs, norm_bound)
        return Dataset(inputs=projected, targets=projected.copy(),
                       norm_bound=norm_bound)
    try:
        targets = np.loadtxt(targets_path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataError(f"{targets_path}: {exc}") from exc
    if task == "xent":
        labels = targets.reshape(-1)
        if not np.all(labels == np.round(labels)):
            raise DataError(f"{targets_path}: class labels must be integers")
        targets = one_hot(labels.astype(int), n_classes)
    if inputs.shape[0] != targets.shape[0]:
        raise DataError(
            f"row count mismatch: {inputs.shape[0]} inputs vs "
            f"{targets.shape[0]} targets"
        )
    return Dataset(inputs=inputs, targets=targets, norm_bound=norm_bound)


def synthetic_classification(n: int, dim: int, n_classes: int,
                             rng: np.random.Generator,
                             separation: float = 2.0,
                             norm_bound: float = 1.0) -> Dataset:
    """Gaussian blobs, one per class, projected onto the norm ball.

    The class means sit well apart relative to the within-class spread, so a
    small network separates them; noise levels then control how much privacy
    degrades that.
    """
    train, _ = synthetic_classification_split(n, 0, dim, n_classes, rng,
                                              separation, norm_bound)
    return train


def synthetic_classification_split(n_train: int, n_test: int, dim: int,
                                   n_classes: int, rng: np.random.Generator,
                                   separation: float = 2.0,
                                   norm_bound: float = 1.0):
    """Train/test blob datasets drawn from one shared set of class means."""
    n = n_train + n_test
    means = rng.standard_normal((n_classes, dim))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)
    labels = rng.integers(0, n_classes, size=max(n, 1))
    x = means[labels] + 0.35 * rng.standard_normal((max(n, 1), dim))
    # Scale into the ball rather than clip, so classes stay separated.
    x = x * (norm_bound / max(np.max(np.linalg.norm(x, axis=1)), 1e-300))
    targets = one_hot(labels, n_classes)
    train = Dataset(inputs=x[:n_train], targets=targets[:n_train],
                    norm_bound=norm_bound)
    test = None
    if n_test:
        test = Dataset(inputs=x[n_train:n], targets=targets[n_train:n],
                       norm_bound=norm_bound)
    return train, test


def synthetic_reconstruction(n: int, dim: int, latent_dim: int,
                             rng: np.random.Generator,
                             noise: float = 0.02,
                             norm_bound: float = 1.0) -> Dataset:
    """Low-rank signals plus noise; targets equal inputs (autoencoding)."""
    train, _ = synthetic_reconstruction_split(n, 0, dim, latent_dim, rng,
                                              noise, norm_bound)
    return train


def synthetic_reconstruction_split(n_train: int, n_test: int, dim: int,
                                   latent_dim: int, rng: np.random.Generator,
                                   noise: float = 0.02,
                                   norm_bound: float = 1.0):
    """Train/test low-rank datasets sharing one latent basis."""
    n = n_train + n_test
    basis = np.linalg.qr(rng.standard_normal((dim, latent_dim)))[0]
    codes = rng.standard_normal((max(n, 1), latent_dim))
    x = codes @ basis.T + noise * rng.standard_normal((max(n, 1), dim))
    x = x * (norm_bound / max(np.max(np.linalg.norm(x, axis=1)), 1e-300))
    x = project_rows(x, norm_bound)
    train = Dataset(inputs=x[:n_train], targets=x[:n_train].copy(),
                    norm_bound=norm_bound)
    test = None
    if n_test:
        test = Dataset(inputs=x[n_train:n], targets=x[n_train:n].copy(),
                       norm_bound=norm_bound)
    return train, test
