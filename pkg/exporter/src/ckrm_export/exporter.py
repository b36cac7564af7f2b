"""Convert a torch checkpoint into the analyzer's on-disk formats.

The archive layout written here is the one the analyzer reads back:
an unsigned 64-bit little-endian header length, a JSON header mapping
tensor name -> {dtype, shape, data_offsets} with offsets relative to
the end of the header, then raw little-endian row-major data. Tensor
names are sorted, the header JSON is compact with sorted keys, and
offsets are assigned in name order, so re-exporting a checkpoint is
byte-identical.

The emitted structure file lists every rank-4 weight with its dims and
bias flag; everything else trainable (linear heads, normalization) is
folded into the extras count, so the analyzer's parameter total equals
the checkpoint's own trainable-parameter count exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

_DTYPE_TAGS = {torch.float32: "F32", torch.float64: "F64"}
_NUMPY_LE = {"F32": "<f4", "F64": "<f8"}

# running statistics are buffers, not trainable parameters
_BUFFER_SUFFIXES = ("running_mean", "running_var", "num_batches_tracked")


class ExportError(Exception):
    """Checkpoint cannot be converted."""


@dataclass
class ConvEntry:
    layer_id: str
    f2: int
    f1: int
    k1: int
    k2: int
    has_bias: bool
    group: str | None = None

    @property
    def params(self) -> int:
        return self.f2 * self.f1 * self.k1 * self.k2 + (self.f2 if self.has_bias else 0)


@dataclass
class ExportManifest:
    source: str
    name_map: dict[str, str]  # source parameter name -> archive tensor name
    tensors: dict[str, dict]  # archive name -> {"dtype", "shape"}
    conv_layers: list[ConvEntry]
    total_trainable: int
    extras_count: int
    skipped: dict[str, str] = field(default_factory=dict)  # name -> reason

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "name_map": dict(sorted(self.name_map.items())),
            "tensors": {k: self.tensors[k] for k in sorted(self.tensors)},
            "conv_layers": [
                {
                    "id": c.layer_id,
                    "f2": c.f2,
                    "f1": c.f1,
                    "k1": c.k1,
                    "k2": c.k2,
                    "bias": c.has_bias,
                    "group": c.group,
                }
                for c in self.conv_layers
            ],
            "total_trainable": self.total_trainable,
            "extras_count": self.extras_count,
            "skipped": dict(sorted(self.skipped.items())),
        }


def _load_state_dict(path: Path) -> dict[str, torch.Tensor]:
    try:
        obj = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ExportError(f"{path}: cannot read checkpoint: {exc}") from exc
    if isinstance(obj, dict) and "state_dict" in obj and isinstance(obj["state_dict"], dict):
        obj = obj["state_dict"]
    if not isinstance(obj, dict) or not obj:
        raise ExportError(f"{path}: checkpoint holds no state dict")
    tensors = {k: v for k, v in obj.items() if isinstance(v, torch.Tensor)}
    if not tensors:
        raise ExportError(f"{path}: checkpoint holds no tensors")
    return tensors


def _is_buffer(name: str) -> bool:
    return name.rsplit(".", 1)[-1] in _BUFFER_SUFFIXES


def _infer_groups(convs: list[ConvEntry]) -> None:
    """Label uniform-width chains: consecutive convs where the producer
    width equals both the consumer's input and output width."""
    chain: list[ConvEntry] = []
    label = 0

    def close() -> None:
        nonlocal label
        if len(chain) >= 2:
            label += 1
            for entry in chain:
                entry.group = f"g{label}"

    for conv in convs:
        if chain and chain[-1].f2 == conv.f1 == conv.f2:
            chain.append(conv)
        else:
            close()
            chain = [conv]
    close()


def _write_archive(path: Path, tensors: dict[str, np.ndarray], tags: dict[str, str]) -> None:
    header: dict[str, dict] = {}
    blobs: list[bytes] = []
    offset = 0
    for name in sorted(tensors):
        raw = tensors[name].tobytes()
        header[name] = {
            "dtype": tags[name],
            "shape": list(tensors[name].shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        blobs.append(raw)
        offset += len(raw)
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(payload)))
        f.write(payload)
        for blob in blobs:
            f.write(blob)


def export(
    checkpoint: str | Path,
    out_archive: str | Path,
    out_structure: str | Path,
    name_map: dict[str, str] | None = None,
) -> ExportManifest:
    """Write the archive and structure files for a checkpoint.

    name_map renames source parameters in the archive (and in the
    structure file's layer ids); unmapped names are kept as-is.
    """
    checkpoint = Path(checkpoint)
    state = _load_state_dict(checkpoint)
    rename = dict(name_map or {})

    exported: dict[str, np.ndarray] = {}
    tags: dict[str, str] = {}
    manifest_tensors: dict[str, dict] = {}
    used_names: dict[str, str] = {}
    skipped: dict[str, str] = {}

    for source_name, tensor in state.items():
        if _is_buffer(source_name):
            skipped[source_name] = "statistics buffer"
            continue
        tag = _DTYPE_TAGS.get(tensor.dtype)
        if tag is None:
            if tensor.dim() == 4:
                raise ExportError(
                    f"{checkpoint}: unsupported dtype {tensor.dtype} "
                    f"for convolution weight {source_name!r}"
                )
            skipped[source_name] = f"unsupported dtype {tensor.dtype}"
            continue
        out_name = rename.get(source_name, source_name)
        if out_name in exported:
            raise ExportError(f"duplicate archive name {out_name!r}")
        array = np.ascontiguousarray(
            tensor.detach().cpu().numpy(), dtype=_NUMPY_LE[tag]
        )
        exported[out_name] = array
        tags[out_name] = tag
        used_names[source_name] = out_name
        manifest_tensors[out_name] = {"dtype": tag, "shape": list(tensor.shape)}

    convs: list[ConvEntry] = []
    for source_name, tensor in state.items():
        if source_name not in used_names or tensor.dim() != 4:
            continue
        f2, f1, k1, k2 = tensor.shape
        has_bias = False
        if source_name.endswith(".weight"):
            bias_name = source_name[: -len(".weight")] + ".bias"
            bias = state.get(bias_name)
            has_bias = (
                bias is not None and bias.dim() == 1 and bias.shape[0] == f2
            )
        convs.append(
            ConvEntry(
                layer_id=used_names[source_name],
                f2=int(f2), f1=int(f1), k1=int(k1), k2=int(k2),
                has_bias=has_bias,
            )
        )
    if not convs:
        raise ExportError(f"{checkpoint}: no rank-4 weights")
    _infer_groups(convs)

    total_trainable = sum(
        state[name].numel() for name in used_names
    )
    extras = total_trainable - sum(conv.params for conv in convs)

    _write_archive(Path(out_archive), exported, tags)
    structure = {
        "layers": [
            {
                "id": c.layer_id,
                "f2": c.f2,
                "f1": c.f1,
                "k1": c.k1,
                "k2": c.k2,
                "bias": c.has_bias,
                "group": c.group,
            }
            for c in convs
        ],
        "extras": {
            "count": extras,
            "note": (
                f"Trainable parameters of {checkpoint.name} outside the listed "
                "convolution kernels (linear layers, normalization scale/shift; "
                "statistics buffers excluded)."
            ),
        },
    }
    Path(out_structure).write_text(
        json.dumps(structure, indent=2, sort_keys=True) + "\n"
    )
    return ExportManifest(
        source=str(checkpoint),
        name_map=used_names,
        tensors=manifest_tensors,
        conv_layers=convs,
        total_trainable=total_trainable,
        extras_count=extras,
        skipped=skipped,
    )
