"""Loading of named weight tensors from the on-disk archive format.

Archive layout (all integers little-endian):

    bytes 0..8    u64 N, the header length
    bytes 8..8+N  UTF-8 JSON object: name -> {"dtype": "F32"|"F64",
                  "shape": [ints], "data_offsets": [begin, end]}
                  with offsets relative to byte 8+N; an optional
                  "__metadata__" string-to-string map is ignored
    remainder     raw row-major element data

Element data is widened to float64 at load so later stages run at one
precision. Archives are immutable after load; writing them is the
exporter's job, not ours.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArchiveError

_DTYPES = {"F32": np.dtype("<f4"), "F64": np.dtype("<f8")}


@dataclass(frozen=True)
class TensorRecord:
    """One named tensor: declared dtype tag, shape, and float64 data."""

    name: str
    dtype: str
    shape: tuple[int, ...]
    data: np.ndarray  # shaped, row-major, float64, read-only

    @property
    def rank(self) -> int:
        return len(self.shape)


@dataclass(frozen=True)
class ConvKernelSet:
    """A convolution layer's weights with dims (f2, f1, k1, k2).

    f2 is the number of kernels the layer holds, f1 the input channel
    count, k1 x k2 the spatial extent of one slice.
    """

    layer_id: str
    f2: int
    f1: int
    k1: int
    k2: int
    weights: np.ndarray  # (f2, f1, k1, k2), float64

    def __post_init__(self) -> None:
        if min(self.f2, self.f1, self.k1, self.k2) < 1:
            raise ValueError(f"kernel dims must be >= 1, got {self.dims}")
        if self.weights.shape != self.dims:
            raise ValueError(
                f"weights shape {self.weights.shape} != declared {self.dims}"
            )

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.f2, self.f1, self.k1, self.k2)

    def slice(self, i: int, k: int) -> np.ndarray:
        """The (k1, k2) spatial patch of kernel i at input channel k."""
        return self.weights[i, k]


@dataclass
class TensorArchive:
    """All records of one archive file, keyed by tensor name."""

    source_path: Path
    records: dict[str, TensorRecord] = field(default_factory=dict)

    def names(self) -> list[str]:
        return sorted(self.records)

    def __contains__(self, name: str) -> bool:
        return name in self.records

    def __getitem__(self, name: str) -> TensorRecord:
        try:
            return self.records[name]
        except KeyError:
            raise ArchiveError(
                f"{self.source_path}: no tensor named {name!r}"
            ) from None


def _parse_header(raw: bytes, path: Path) -> tuple[dict, int]:
    if len(raw) < 8:
        raise ArchiveError(f"{path}: file too short for a header ({len(raw)} bytes)")
    (header_len,) = struct.unpack("<Q", raw[:8])
    if 8 + header_len > len(raw):
        raise ArchiveError(
            f"{path}: declared header length {header_len} exceeds file size"
        )
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"{path}: malformed header: {exc}") from exc
    if not isinstance(header, dict):
        raise ArchiveError(f"{path}: header is not an object")
    return header, 8 + header_len


def _parse_entry(name: str, entry: object, data_len: int, path: Path):
    if not isinstance(entry, dict):
        raise ArchiveError(f"{path}: entry for {name!r} is not an object")
    missing = {"dtype", "shape", "data_offsets"} - entry.keys()
    if missing:
        raise ArchiveError(f"{path}: {name!r} is missing {sorted(missing)}")
    dtype_tag = entry["dtype"]
    if dtype_tag not in _DTYPES:
        raise ArchiveError(f"{path}: {name!r} has unsupported dtype {dtype_tag!r}")
    shape = entry["shape"]
    if not isinstance(shape, list) or not all(
        isinstance(d, int) and d >= 1 for d in shape
    ):
        raise ArchiveError(f"{path}: {name!r} has invalid shape {shape!r}")
    offsets = entry["data_offsets"]
    if (
        not isinstance(offsets, list)
        or len(offsets) != 2
        or not all(isinstance(o, int) for o in offsets)
    ):
        raise ArchiveError(f"{path}: {name!r} has invalid data_offsets {offsets!r}")
    begin, end = offsets
    if begin < 0 or end < begin or end > data_len:
        raise ArchiveError(
            f"{path}: {name!r} range out of bounds: [{begin}, {end}) "
            f"in data region of {data_len} bytes"
        )
    n_elems = int(np.prod(shape, dtype=np.int64)) if shape else 1
    expected = n_elems * _DTYPES[dtype_tag].itemsize
    if end - begin != expected:
        raise ArchiveError(
            f"{path}: {name!r} range holds {end - begin} bytes, "
            f"shape {shape} with dtype {dtype_tag} needs {expected}"
        )
    return dtype_tag, tuple(shape), begin, end


def load_archive(path: str | Path) -> TensorArchive:
    """Load and validate every tensor of an archive file.

    Raises :class:`ArchiveError` on malformed headers, overlapping or
    out-of-bounds byte ranges, unsupported dtypes, or non-finite
    elements (reported with tensor name and flat index).
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ArchiveError(f"{path}: {exc}") from exc
    header, data_start = _parse_header(raw, path)
    data_len = len(raw) - data_start

    parsed = {}
    for name, entry in header.items():
        if name == "__metadata__":
            continue
        parsed[name] = _parse_entry(name, entry, data_len, path)

    # byte ranges must tile without overlap
    spans = sorted((begin, end, name) for name, (_, _, begin, end) in parsed.items())
    for (_, prev_end, prev_name), (begin, _, name) in zip(spans, spans[1:]):
        if begin < prev_end:
            raise ArchiveError(
                f"{path}: byte ranges of {prev_name!r} and {name!r} overlap"
            )

    archive = TensorArchive(source_path=path)
    for name, (dtype_tag, shape, begin, end) in parsed.items():
        flat = np.frombuffer(raw, dtype=_DTYPES[dtype_tag], count=(end - begin) // _DTYPES[dtype_tag].itemsize, offset=data_start + begin)
        values = flat.astype(np.float64).reshape(shape)
        bad = np.flatnonzero(~np.isfinite(values.reshape(-1)))
        if bad.size:
            raise ArchiveError(
                f"{path}: tensor {name!r} has non-finite element at flat index {int(bad[0])}"
            )
        values.flags.writeable = False
        archive.records[name] = TensorRecord(
            name=name, dtype=dtype_tag, shape=shape, data=values
        )
    return archive


def as_conv_kernel(archive: TensorArchive, name: str) -> ConvKernelSet:
    """View a rank-4 record as a convolution kernel set (f2, f1, k1, k2)."""
    record = archive[name]
    if record.rank != 4:
        raise ArchiveError(
            f"{archive.source_path}: {name!r} is not a convolution kernel "
            f"(rank {record.rank}, need 4)"
        )
    f2, f1, k1, k2 = record.shape
    return ConvKernelSet(
        layer_id=name, f2=f2, f1=f1, k1=k1, k2=k2, weights=record.data
    )
