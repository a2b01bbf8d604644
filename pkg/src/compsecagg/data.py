"""Datasets for the federated harness: seeded Gaussian blobs, IDX files, i.i.d. shards."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .rng import make_rng

_IDX_DTYPES = {
    0x08: np.uint8,
    0x09: np.int8,
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y disagree on sample count")

    def __len__(self) -> int:
        return int(self.y.size)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1 if len(self) else 0


def make_blobs(n_samples: int, n_features: int = 20, n_classes: int = 2,
               separation: float = 3.0, seed: int = 0) -> Dataset:
    """Isotropic unit-variance Gaussian classes whose means sit ``separation`` apart."""
    rng = make_rng(seed)
    centers = rng.normal(size=(n_classes, n_features))
    centers -= centers.mean(axis=0)
    # scale so the closest pair of means is exactly `separation` apart
    dists = [np.linalg.norm(centers[i] - centers[j])
             for i in range(n_classes) for j in range(i + 1, n_classes)]
    centers *= separation / min(dists)
    y = rng.integers(0, n_classes, size=n_samples)
    X = centers[y] + rng.normal(size=(n_samples, n_features))
    return Dataset(X, y.astype(np.int64))


def train_test_split(ds: Dataset, test_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    perm = make_rng(seed).permutation(len(ds))
    n_test = int(round(test_fraction * len(ds)))
    return ds.subset(perm[n_test:]), ds.subset(perm[:n_test])


def partition_iid(ds: Dataset, clients: int, seed: int = 0) -> list[Dataset]:
    """Shuffle, then cut into ``clients`` equal shards; the remainder is dropped."""
    if clients < 1:
        raise ValueError("need at least one client")
    perm = make_rng(seed).permutation(len(ds))
    size = len(ds) // clients
    return [ds.subset(perm[i * size:(i + 1) * size]) for i in range(clients)]


def load_idx(path) -> np.ndarray:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise ValueError(f"{path}: not an IDX file")
    code, ndim = raw[2], raw[3]
    if code not in _IDX_DTYPES:
        raise ValueError(f"{path}: unknown IDX element type 0x{code:02x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    dtype = np.dtype(_IDX_DTYPES[code])
    body = raw[4 + 4 * ndim:]
    count = int(np.prod(dims)) if dims else 1
    if len(body) != count * dtype.itemsize:
        raise ValueError(f"{path}: payload size does not match header dims {dims}")
    return np.frombuffer(body, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))


def save_idx(path, arr: np.ndarray) -> None:
    codes = {np.dtype(v).newbyteorder(">").str if np.dtype(v).itemsize > 1 else np.dtype(v).str: k
             for k, v in _IDX_DTYPES.items()}
    big = arr.astype(arr.dtype.newbyteorder(">")) if arr.dtype.itemsize > 1 else arr
    code = codes[big.dtype.str]
    header = bytes([0, 0, code, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header + big.tobytes())


def load_idx_dataset(images_path, labels_path, scale: float = 255.0) -> Dataset:
    X = load_idx(images_path).astype(np.float64)
    y = load_idx(labels_path).astype(np.int64).reshape(-1)
    return Dataset(X.reshape(X.shape[0], -1) / scale, y)
