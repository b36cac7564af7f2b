#!/usr/bin/env python3
"""The whole pipeline through the command-line surface.

Builds a synthetic two-layer checkpoint archive in a temp directory,
then runs: analyze -> suggest -> params -> hist, exactly as one would
from a shell. Every output file is deterministic for fixed flags.
"""

import json
import struct
import tempfile
from pathlib import Path

import numpy as np

from ckrm.cli import main
from ckrm.structure import LayerSpec, NetworkStructure, save_structure


def write_archive(path, tensors):
    header, blobs, offset = {}, [], 0
    for name, arr in tensors.items():
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        header[name] = {
            "dtype": "F32",
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        blobs.append(raw)
        offset += len(raw)
    payload = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(payload)))
        f.write(payload)
        for blob in blobs:
            f.write(blob)


rng = np.random.default_rng(5)
template = rng.normal(size=(1, 2, 3, 3))
tensors = {
    "backbone.conv1": np.repeat(template, 32, axis=0)
    + rng.normal(scale=1e-3, size=(32, 2, 3, 3)),  # highly redundant
    "backbone.conv2": rng.normal(size=(16, 32, 3, 3)),  # diverse
}

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    archive = tmp / "checkpoint.st"
    write_archive(archive, tensors)
    save_structure(
        NetworkStructure(
            layers=(
                LayerSpec("backbone.conv1", 32, 2, 3, 3),
                LayerSpec("backbone.conv2", 16, 32, 3, 3),
            )
        ),
        tmp / "structure.json",
    )

    for argv in (
        ["analyze", "--weights", str(archive), "--sample", "all",
         "--seed", "1", "--out", str(tmp / "report.json")],
        ["suggest", "--report", str(tmp / "report.json"),
         "--structure", str(tmp / "structure.json"),
         "--rho", "0.5", "--t", "0.6", "--out", str(tmp / "plan.json")],
        ["params", "--structure", str(tmp / "structure.json")],
        ["hist", "--report", str(tmp / "report.json"),
         "--layer", "backbone.conv1", "--out", str(tmp / "conv1.svg")],
    ):
        print(f"\n$ ckrm {' '.join(argv)}")
        code = main(argv)
        assert code == 0, code

    plan = json.loads((tmp / "plan.json").read_text())
    print("\nplan summary:")
    for row in plan["layers"]:
        print(f"  {row['id']}: f2 {row['old_f2']} -> {row['new_f2']} "
              f"(lambda {row['lambda_used']:.2f})")
