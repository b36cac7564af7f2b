"""Shared fixtures: a minimal archive writer (the package only reads
archives) and synthetic kernel-set builders."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import pytest

from ckrm.tensor_io import ConvKernelSet

_TAGS = {np.dtype("<f4"): "F32", np.dtype("<f8"): "F64"}


def write_archive(
    path: Path,
    tensors: dict[str, np.ndarray],
    metadata: dict[str, str] | None = None,
) -> Path:
    """Write tensors in the archive layout the loader expects."""
    header: dict[str, object] = {}
    blobs: list[bytes] = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        tag = _TAGS[arr.dtype.newbyteorder("<")]
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        header[name] = {
            "dtype": tag,
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        blobs.append(raw)
        offset += len(raw)
    if metadata is not None:
        header["__metadata__"] = metadata
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)
    return path


def write_raw_archive(path: Path, header: dict, data: bytes) -> Path:
    """Write an archive with full control of the header, for error cases."""
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        f.write(data)
    return path


def kernel_set(weights: np.ndarray, layer_id: str = "layer") -> ConvKernelSet:
    weights = np.asarray(weights, dtype=np.float64)
    f2, f1, k1, k2 = weights.shape
    return ConvKernelSet(
        layer_id=layer_id, f2=f2, f1=f1, k1=k1, k2=k2, weights=weights
    )


def duplicated_template_layer(
    f2: int, f1: int, k: int, seed: int, noise_std: float = 1e-3
) -> ConvKernelSet:
    """f2 near-copies of one template kernel: maximal redundancy."""
    rng = np.random.default_rng(seed)
    template = rng.normal(size=(1, f1, k, k))
    noise = rng.normal(scale=noise_std, size=(f2, f1, k, k))
    return kernel_set(np.repeat(template, f2, axis=0) + noise, "duplicated")


def orthogonal_layer(f2: int, f1: int, k: int, seed: int) -> ConvKernelSet:
    """Kernels with mutually orthogonal, zero-mean slices: no redundancy.

    Slice vectors come from a QR factorization of a random matrix, so
    per input channel the f2 slices are exactly orthogonal; requires
    f2 <= k*k - 1 to leave room for the zero-mean projection.
    """
    n = k * k
    assert f2 <= n - 1
    rng = np.random.default_rng(seed)
    weights = np.empty((f2, f1, k, k))
    for c in range(f1):
        basis = rng.normal(size=(n, n))
        basis -= basis.mean(axis=0, keepdims=True)  # zero-mean columns
        q, _ = np.linalg.qr(basis)
        for i in range(f2):
            col = q[:, i]
            col = col - col.mean()
            weights[i, c] = col.reshape(k, k)
    return kernel_set(weights, "orthogonal")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240814)
