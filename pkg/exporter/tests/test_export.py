import json

import numpy as np
import pytest
import torch
from torch import nn

from ckrm.cli import main as ckrm_main
from ckrm.structure import load_structure, validate
from ckrm.tensor_io import load_archive
from ckrm_export import ExportError, export
from ckrm_export.cli import main as export_main


class ToyTwoConv(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 8, 3)
        self.conv2 = nn.Conv2d(8, 16, 3)
        self.head = nn.Linear(16, 3)


def _export_toy(tmp_path, model, seed=0):
    torch.manual_seed(seed)
    ckpt = tmp_path / "model.pt"
    torch.save(model.state_dict(), ckpt)
    archive = tmp_path / "model.st"
    structure = tmp_path / "model.json"
    manifest = export(ckpt, archive, structure)
    return ckpt, archive, structure, manifest


def test_round_trip_bitwise_and_param_count(tmp_path, capsys):
    """Acceptance: reload via the analyzer, values bitwise-equal, and
    the analyzer's total equals torch's own trainable-parameter count."""
    torch.manual_seed(7)
    model = ToyTwoConv()
    _, archive, structure, manifest = _export_toy(tmp_path, model)

    loaded = load_archive(archive)
    state = model.state_dict()
    for name, tensor in state.items():
        got = loaded[name].data
        want = tensor.detach().numpy().astype(np.float64)
        assert np.array_equal(got, want), name  # f32 -> f64 widening is exact

    framework_count = sum(p.numel() for p in model.parameters())
    assert ckrm_main(["params", "--structure", str(structure)]) == 0
    printed = capsys.readouterr().out
    total = int(printed.strip().splitlines()[-1].split()[-1])
    ok = total == framework_count == manifest.total_trainable
    print(f"[{'PASS' if ok else 'FAIL'}] exporter round-trip: bitwise tensors, "
          f"cmd_params == framework count ({total} == {framework_count})")
    assert ok


def test_structure_file_validates_and_describes_convs(tmp_path):
    model = ToyTwoConv()
    _, _, structure_path, manifest = _export_toy(tmp_path, model)
    structure = load_structure(structure_path)
    assert validate(structure) == []
    dims = {spec.layer_id: (spec.f2, spec.f1, spec.k1, spec.k2) for spec in structure.layers}
    assert dims == {
        "conv1.weight": (8, 1, 3, 3),
        "conv2.weight": (16, 8, 3, 3),
    }
    assert all(spec.has_bias for spec in structure.layers)
    # extras covers exactly the linear head here
    assert structure.extras_count == 16 * 3 + 3
    assert manifest.extras_count == structure.extras_count


def test_no_conv_model_rejected(tmp_path):
    ckpt = tmp_path / "mlp.pt"
    torch.save(nn.Linear(4, 2).state_dict(), ckpt)
    with pytest.raises(ExportError, match="no rank-4 weights"):
        export(ckpt, tmp_path / "a.st", tmp_path / "s.json")


def test_reexport_is_byte_identical(tmp_path):
    model = ToyTwoConv()
    ckpt = tmp_path / "model.pt"
    torch.save(model.state_dict(), ckpt)
    a1, a2 = tmp_path / "a1.st", tmp_path / "a2.st"
    s1, s2 = tmp_path / "s1.json", tmp_path / "s2.json"
    export(ckpt, a1, s1)
    export(ckpt, a2, s2)
    assert a1.read_bytes() == a2.read_bytes()
    assert s1.read_bytes() == s2.read_bytes()


def test_uniform_width_chain_gets_grouped(tmp_path):
    model = nn.Sequential(
        nn.Conv2d(4, 8, 3),
        nn.Conv2d(8, 8, 3),
        nn.Conv2d(8, 8, 3),
        nn.Conv2d(8, 16, 3),
    )
    _, _, structure_path, _ = _export_toy(tmp_path, model)
    structure = load_structure(structure_path)
    groups = {spec.layer_id: spec.group for spec in structure.layers}
    # the head produces the chain width, so it shrinks with the chain
    assert groups["0.weight"] == groups["1.weight"] == groups["2.weight"] == "g1"
    assert groups["3.weight"] is None  # widens to 16: a new chain
    assert validate(structure) == []


def test_batchnorm_buffers_skipped_but_affine_counted(tmp_path, capsys):
    model = nn.Sequential(nn.Conv2d(1, 4, 3), nn.BatchNorm2d(4), nn.Linear(4, 2))
    _, archive, structure_path, manifest = _export_toy(tmp_path, model)
    names = load_archive(archive).names()
    assert not any("running" in n or "num_batches" in n for n in names)
    assert set(manifest.skipped) == {
        "1.running_mean", "1.running_var", "1.num_batches_tracked",
    }
    framework_count = sum(p.numel() for p in model.parameters())
    assert ckrm_main(["params", "--structure", str(structure_path)]) == 0
    total = int(capsys.readouterr().out.strip().splitlines()[-1].split()[-1])
    assert total == framework_count


def test_conv_without_bias(tmp_path):
    model = nn.Sequential(nn.Conv2d(2, 4, 3, bias=False))
    _, _, structure_path, manifest = _export_toy(tmp_path, model)
    structure = load_structure(structure_path)
    assert structure.layers[0].has_bias is False
    assert manifest.total_trainable == 4 * 2 * 9
    assert structure.extras_count == 0


def test_name_map_applied(tmp_path):
    model = ToyTwoConv()
    ckpt = tmp_path / "model.pt"
    torch.save(model.state_dict(), ckpt)
    archive = tmp_path / "a.st"
    structure_path = tmp_path / "s.json"
    manifest = export(
        ckpt, archive, structure_path,
        name_map={"conv1.weight": "stem", "conv2.weight": "mid"},
    )
    assert {"stem", "mid"} <= set(load_archive(archive).names())
    ids = [spec.layer_id for spec in load_structure(structure_path).layers]
    assert ids == ["stem", "mid"]
    assert manifest.name_map["conv1.weight"] == "stem"


def test_full_checkpoint_dict_accepted(tmp_path):
    model = ToyTwoConv()
    ckpt = tmp_path / "full.pt"
    torch.save({"epoch": 3, "state_dict": model.state_dict()}, ckpt)
    manifest = export(ckpt, tmp_path / "a.st", tmp_path / "s.json")
    assert len(manifest.conv_layers) == 2


def test_half_precision_conv_rejected(tmp_path):
    state = {"conv.weight": torch.zeros(2, 1, 3, 3, dtype=torch.float16)}
    ckpt = tmp_path / "half.pt"
    torch.save(state, ckpt)
    with pytest.raises(ExportError, match="unsupported dtype"):
        export(ckpt, tmp_path / "a.st", tmp_path / "s.json")


def test_float64_weights_preserved(tmp_path):
    state = {"conv.weight": torch.randn(2, 1, 3, 3, dtype=torch.float64)}
    ckpt = tmp_path / "d.pt"
    torch.save(state, ckpt)
    export(ckpt, tmp_path / "a.st", tmp_path / "s.json")
    record = load_archive(tmp_path / "a.st")["conv.weight"]
    assert record.dtype == "F64"
    assert np.array_equal(record.data, state["conv.weight"].numpy())


def test_cli_end_to_end(tmp_path, capsys):
    model = ToyTwoConv()
    ckpt = tmp_path / "model.pt"
    torch.save(model.state_dict(), ckpt)
    code = export_main([
        str(ckpt),
        "--out-archive", str(tmp_path / "a.st"),
        "--out-structure", str(tmp_path / "s.json"),
    ])
    assert code == 0
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["total_trainable"] == sum(p.numel() for p in model.parameters())
    assert (tmp_path / "a.st").exists() and (tmp_path / "s.json").exists()


def test_cli_unreadable_checkpoint(tmp_path):
    bad = tmp_path / "junk.pt"
    bad.write_bytes(b"not a checkpoint")
    code = export_main([
        str(bad),
        "--out-archive", str(tmp_path / "a.st"),
        "--out-structure", str(tmp_path / "s.json"),
    ])
    assert code == 1
