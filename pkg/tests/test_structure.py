import json

import pytest

from ckrm.errors import InputError
from ckrm.redundancy import CkrmResult, MultiRunCkrm, SampleInfo
from ckrm.structure import (
    LayerSpec,
    NetworkStructure,
    apply_plan,
    bundled_structure,
    count_params,
    load_structure,
    save_structure,
    suggest,
    validate,
)


def multirun(layer_id, lambdas, thresholds=(0.5, 0.6, 0.7)):
    run = CkrmResult(
        layer_id=layer_id,
        thresholds=thresholds,
        lambdas=tuple(lambdas),
        histogram=tuple([0] * 50),
        sample=SampleInfo(count=10, exhaustive=True, seed=None),
        stderr=None,
    )
    return MultiRunCkrm(layer_id=layer_id, per_run=(run,), mean_lambda=tuple(lambdas))


# -- parameter counting ------------------------------------------------------


def test_count_single_layer_with_bias():
    layer = LayerSpec("conv1", f2=64, f1=1, k1=7, k2=7)
    assert count_params(NetworkStructure(layers=(layer,))) == 3200


def test_count_wide_layer_with_bias():
    layer = LayerSpec("deep", f2=512, f1=512, k1=3, k2=3)
    assert layer.params == 2_359_808


def test_count_without_bias():
    layer = LayerSpec("w", f2=8, f1=4, k1=3, k2=3, has_bias=False)
    assert layer.params == 8 * 4 * 9


def test_bundled_totals():
    assert count_params(bundled_structure("resnet50_standard")) == 23_534_467
    assert count_params(bundled_structure("resnet50_optimized")) == 128_062


def test_count_is_linear(rng):
    a = NetworkStructure(
        layers=(LayerSpec("a", 4, 2, 3, 3),), extras_count=10
    )
    b = NetworkStructure(
        layers=(LayerSpec("b", 6, 3, 5, 5), LayerSpec("c", 2, 2, 1, 1)),
        extras_count=7,
    )
    merged = NetworkStructure(
        layers=a.layers + b.layers, extras_count=a.extras_count + b.extras_count
    )
    assert count_params(merged) == count_params(a) + count_params(b)


def test_empty_structure_counts_zero():
    assert count_params(NetworkStructure()) == 0


def test_standard_extras_derived_from_itemized_bottleneck_model():
    """The bundled standard file's extras must equal a fully itemized
    bottleneck ResNet-50 (stage depths 3-4-6-3, expansion 4, stem 64),
    1-channel input, 3-class head, bias on every convolution, affine
    batch norm -- minus the file's 17 listed kernel terms."""
    total = 0
    stem = 64
    total += stem * 1 * 49 + stem  # 7x7 stem conv + bias
    total += 2 * stem  # stem batch norm
    inc = stem
    for mid, depth in zip((64, 128, 256, 512), (3, 4, 6, 3)):
        out = 4 * mid
        for block in range(depth):
            total += mid * inc + mid + 2 * mid  # 1x1 reduce + bias + bn
            total += mid * mid * 9 + mid + 2 * mid  # 3x3 + bias + bn
            total += out * mid + out + 2 * out  # 1x1 expand + bias + bn
            if block == 0:
                total += out * inc + out + 2 * out  # downsample 1x1 + bn
            inc = out
    total += 3 * inc + 3  # classifier head

    structure = bundled_structure("resnet50_standard")
    listed = sum(spec.params for spec in structure.layers)
    assert total == 23_534_467
    assert structure.extras_count == total - listed
    assert count_params(structure) == total


def test_listed_kernel_terms_match_hand_oracle():
    structure = bundled_structure("resnet50_standard")
    for spec in structure.layers:
        assert spec.params == spec.f2 * spec.f1 * spec.k1 * spec.k2 + spec.f2


# -- validation --------------------------------------------------------------


def test_bundled_structures_validate_clean():
    assert validate(bundled_structure("resnet50_standard")) == []
    assert validate(bundled_structure("resnet50_optimized")) == []


def test_empty_structure_has_no_violations():
    assert validate(NetworkStructure()) == []


def test_width_mismatch_names_both_layers():
    structure = NetworkStructure(
        layers=(
            LayerSpec("layer2", 16, 16, 3, 3, group="stage"),
            LayerSpec("layer3", 16, 32, 3, 3, group="stage"),
        )
    )
    violations = validate(structure)
    assert len(violations) == 1
    assert "layer3" in violations[0] and "layer2" in violations[0]
    assert "32" in violations[0] and "16" in violations[0]


def test_produced_width_mismatch_detected():
    structure = NetworkStructure(
        layers=(
            LayerSpec("a", 16, 16, 3, 3, group="g"),
            LayerSpec("b", 24, 16, 3, 3, group="g"),
        )
    )
    violations = validate(structure)
    assert any("produces 24" in v for v in violations)


def test_dims_must_be_positive():
    with pytest.raises(ValueError):
        LayerSpec("bad", 0, 1, 3, 3)


# -- structure files ---------------------------------------------------------


def test_structure_round_trip(tmp_path):
    structure = NetworkStructure(
        layers=(
            LayerSpec("a", 8, 1, 3, 3, group="g1"),
            LayerSpec("b", 8, 8, 3, 3, has_bias=False, group="g1"),
        ),
        extras_count=42,
        extras_note="head",
    )
    path = tmp_path / "s.json"
    save_structure(structure, path)
    assert load_structure(path) == structure


def test_structure_unknown_field_rejected(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"layers": [], "extras": {}, "oops": 1}))
    with pytest.raises(InputError, match="oops"):
        load_structure(path)
    path.write_text(
        json.dumps({"layers": [{"id": "a", "f2": 1, "f1": 1, "k1": 1, "k2": 1, "x": 2}]})
    )
    with pytest.raises(InputError, match="'x'"):
        load_structure(path)


def test_structure_duplicate_ids_rejected(tmp_path):
    path = tmp_path / "s.json"
    entry = {"id": "a", "f2": 1, "f1": 1, "k1": 1, "k2": 1}
    path.write_text(json.dumps({"layers": [entry, entry]}))
    with pytest.raises(InputError, match="duplicate"):
        load_structure(path)


def test_unknown_bundled_name():
    with pytest.raises(InputError, match="unknown bundled"):
        bundled_structure("resnet101")


# -- suggestions -------------------------------------------------------------


def simple_structure(width=64, lam=None):
    return NetworkStructure(
        layers=(LayerSpec("conv", width, 1, 3, 3, group="g"),),
        extras_count=0,
    )


def test_zero_lambda_keeps_width():
    structure = simple_structure(64)
    plan = suggest(structure, {"conv": multirun("conv", (0.0, 0.0, 0.0))}, t=0.6)
    assert plan.rows[0].new_f2 == 64
    assert plan.params_after == plan.params_before


def test_lambda_floor_keeps_width():
    structure = simple_structure(64)
    plan = suggest(structure, {"conv": multirun("conv", (0.02, 0.02, 0.02))}, t=0.6)
    assert plan.rows[0].new_f2 == 64


def test_full_redundancy_halves_width_at_default_rho():
    structure = simple_structure(64)
    plan = suggest(structure, {"conv": multirun("conv", (1.0, 1.0, 1.0))}, t=0.6, rho=0.5)
    row = plan.rows[0]
    assert row.new_f2 == 32
    # projected totals recomputed through the counting oracle
    assert plan.params_after == count_params(apply_plan(structure, plan))
    assert plan.params_after == 32 * 1 * 9 + 32


def test_min_width_floor():
    structure = simple_structure(16)
    plan = suggest(structure, {"conv": multirun("conv", (1.0, 1.0, 1.0))}, t=0.6, rho=1.0)
    assert plan.rows[0].new_f2 == 8


def test_rho_near_zero_is_identity_on_even_widths():
    structure = bundled_structure("resnet50_standard")
    ckrm = {spec.layer_id: multirun(spec.layer_id, (0.5, 0.5, 0.5)) for spec in structure.layers}
    plan = suggest(structure, ckrm, t=0.6, rho=1e-9)
    assert all(row.new_f2 == row.old_f2 for row in plan.rows)


def test_suggest_never_increases_and_validates(rng):
    structure = bundled_structure("resnet50_standard")
    for trial in range(20):
        lams = {
            spec.layer_id: multirun(
                spec.layer_id, tuple(sorted(rng.random(3), reverse=True))
            )
            for spec in structure.layers
        }
        plan = suggest(structure, lams, t=0.6, rho=float(rng.uniform(0.05, 1.0)))
        for row in plan.rows:
            assert row.new_f2 <= row.old_f2
            assert row.new_f1 <= row.old_f1
        new_structure = apply_plan(structure, plan)
        assert validate(new_structure) == []
        assert plan.params_after == count_params(new_structure)
        assert plan.params_after <= plan.params_before


def test_group_uses_worst_member_and_updates_consumers():
    structure = NetworkStructure(
        layers=(
            LayerSpec("a", 64, 1, 3, 3, group="g"),
            LayerSpec("b", 64, 64, 3, 3, group="g"),
        )
    )
    ckrm = {
        "a": multirun("a", (0.0, 0.0, 0.0)),
        "b": multirun("b", (1.0, 1.0, 1.0)),
    }
    plan = suggest(structure, ckrm, t=0.6, rho=0.5)
    by_id = {row.layer_id: row for row in plan.rows}
    assert by_id["a"].new_f2 == 32  # dragged down by its redundant sibling
    assert by_id["a"].new_f1 == 1  # external input not tied to the group
    assert by_id["b"].new_f2 == 32
    assert by_id["b"].new_f1 == 32  # consumes the group's new width


def test_deep_redundancy_shrinks_deep_stages_more():
    """Redundancy concentrated in deep stages must move the standard
    profile toward the narrow one: deeper stages lose a larger share
    of their width than the stem stage."""
    structure = bundled_structure("resnet50_standard")
    depth_lambda = {
        "stem": 0.05,
        "stage1": 0.1,
        "stage2": 0.45,
        "stage3": 0.75,
        "stage4": 0.9,
    }
    ckrm = {
        spec.layer_id: multirun(spec.layer_id, (depth_lambda[spec.group],) * 3)
        for spec in structure.layers
    }
    plan = suggest(structure, ckrm, t=0.6, rho=0.5)
    by_id = {row.layer_id: row for row in plan.rows}
    ratio = lambda layer: by_id[layer].new_f2 / by_id[layer].old_f2
    assert ratio("conv2") > ratio("conv4") > ratio("conv8") > ratio("conv14")
    assert plan.params_after < plan.params_before


def test_missing_entry_rejected():
    structure = simple_structure(64)
    with pytest.raises(InputError, match="no redundancy entry"):
        suggest(structure, {}, t=0.6)


def test_rho_out_of_range():
    structure = simple_structure(64)
    ckrm = {"conv": multirun("conv", (0.0, 0.0, 0.0))}
    for rho in (0.0, -0.5, 1.5):
        with pytest.raises(InputError, match="rho"):
            suggest(structure, ckrm, rho=rho)


def test_threshold_must_exist_in_report():
    structure = simple_structure(64)
    ckrm = {"conv": multirun("conv", (0.5, 0.5, 0.5))}
    with pytest.raises(InputError, match="threshold"):
        suggest(structure, ckrm, t=0.65)


def test_underprovisioned_flagging():
    structure = NetworkStructure(
        layers=(
            LayerSpec("tight", 16, 1, 3, 3),
            LayerSpec("loose", 16, 1, 3, 3),
        )
    )
    ckrm = {
        "tight": multirun("tight", (0.0, 0.0, 0.0)),
        "loose": multirun("loose", (0.4, 0.2, 0.1)),
    }
    plan = suggest(structure, ckrm, t=0.6)
    assert plan.underprovisioned == ("tight",)
