"""Declarative layer-dimension model: parameter counting, width-group
validation, and redundancy-driven shrink suggestions.

A structure lists convolution layers by their dims (f2, f1, k1, k2)
plus one audited `extras` count for everything not listed (pointwise
convolutions, normalization, classifier head). A layer's parameter
cost is f2*f1*k1*k2 plus f2 when it has a bias. Layers sharing a
`group` label form a width group: they produce the same f2, and each
member after the first consumes its predecessor's output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import ConstraintViolation, InputError
from .redundancy import MultiRunCkrm

DEFAULT_MIN_WIDTH = 8
DEFAULT_RHO = 0.5
# groups measured at or below this lambda are left untouched
LAMBDA_FLOOR = 0.02
# layers with zero lambda at this threshold get flagged as possibly too narrow
UNDERPROVISIONED_T = 0.5

BUNDLED_STRUCTURES = ("resnet50_standard", "resnet50_optimized")


@dataclass(frozen=True)
class LayerSpec:
    layer_id: str
    f2: int
    f1: int
    k1: int
    k2: int
    has_bias: bool = True
    group: str | None = None

    def __post_init__(self) -> None:
        if min(self.f2, self.f1, self.k1, self.k2) < 1:
            raise ValueError(f"layer {self.layer_id!r}: dims must be >= 1")

    @property
    def params(self) -> int:
        return self.f2 * self.f1 * self.k1 * self.k2 + (self.f2 if self.has_bias else 0)


@dataclass(frozen=True)
class NetworkStructure:
    layers: tuple[LayerSpec, ...] = ()
    extras_count: int = 0
    extras_note: str = ""

    def layer(self, layer_id: str) -> LayerSpec:
        for spec in self.layers:
            if spec.layer_id == layer_id:
                return spec
        raise KeyError(layer_id)


def count_params(structure: NetworkStructure) -> int:
    """Total trainable parameters: per-layer kernel + bias terms, plus extras."""
    return sum(spec.params for spec in structure.layers) + structure.extras_count


def validate(structure: NetworkStructure) -> list[str]:
    """Width-group constraint violations; empty when the structure is
    consistent.

    Within a group: all members produce the group width (equal f2), and
    every member after the first consumes the previous member's output
    (f1 equals its f2).
    """
    violations = []
    groups: dict[str, list[LayerSpec]] = {}
    for spec in structure.layers:
        if spec.group is not None:
            groups.setdefault(spec.group, []).append(spec)
    for name, members in groups.items():
        width = members[0].f2
        for spec in members[1:]:
            if spec.f2 != width:
                violations.append(
                    f"group {name!r}: layer {spec.layer_id!r} produces {spec.f2} "
                    f"channels but {members[0].layer_id!r} produces {width}"
                )
        for prev, spec in zip(members, members[1:]):
            if spec.f1 != prev.f2:
                violations.append(
                    f"group {name!r}: layer {spec.layer_id!r} consumes {spec.f1} "
                    f"channels but {prev.layer_id!r} produces {prev.f2}"
                )
    return violations


# -- structure files ---------------------------------------------------------

_LAYER_KEYS = {"id", "f2", "f1", "k1", "k2", "bias", "group"}


def _structure_from_dict(obj: dict, where: str) -> NetworkStructure:
    if not isinstance(obj, dict):
        raise InputError(f"{where}: structure file is not an object")
    unknown = obj.keys() - {"layers", "extras"}
    if unknown:
        raise InputError(f"{where}: unknown field {sorted(unknown)[0]!r}")
    layers = []
    for entry in obj.get("layers", []):
        unknown = entry.keys() - _LAYER_KEYS
        if unknown:
            raise InputError(f"{where}: unknown layer field {sorted(unknown)[0]!r}")
        try:
            layers.append(
                LayerSpec(
                    layer_id=entry["id"],
                    f2=int(entry["f2"]),
                    f1=int(entry["f1"]),
                    k1=int(entry["k1"]),
                    k2=int(entry["k2"]),
                    has_bias=bool(entry.get("bias", True)),
                    group=entry.get("group"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{where}: bad layer entry {entry!r}: {exc}") from exc
    ids = [spec.layer_id for spec in layers]
    if len(set(ids)) != len(ids):
        raise InputError(f"{where}: duplicate layer ids")
    extras = obj.get("extras", {})
    unknown = extras.keys() - {"count", "note"}
    if unknown:
        raise InputError(f"{where}: unknown extras field {sorted(unknown)[0]!r}")
    return NetworkStructure(
        layers=tuple(layers),
        extras_count=int(extras.get("count", 0)),
        extras_note=str(extras.get("note", "")),
    )


def _structure_to_dict(structure: NetworkStructure) -> dict:
    return {
        "layers": [
            {
                "id": spec.layer_id,
                "f2": spec.f2,
                "f1": spec.f1,
                "k1": spec.k1,
                "k2": spec.k2,
                "bias": spec.has_bias,
                "group": spec.group,
            }
            for spec in structure.layers
        ],
        "extras": {"count": structure.extras_count, "note": structure.extras_note},
    }


def load_structure(path: str | Path) -> NetworkStructure:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON: {exc}") from exc
    return _structure_from_dict(obj, str(path))


def save_structure(structure: NetworkStructure, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(_structure_to_dict(structure), indent=2, sort_keys=True) + "\n"
    )


def bundled_structure(name: str) -> NetworkStructure:
    """One of the reference structures shipped with the package."""
    if name not in BUNDLED_STRUCTURES:
        raise InputError(
            f"unknown bundled structure {name!r}; have {BUNDLED_STRUCTURES}"
        )
    text = resources.files("ckrm.data").joinpath(f"{name}.json").read_text()
    return _structure_from_dict(json.loads(text), f"bundled:{name}")


# -- suggestions -------------------------------------------------------------


@dataclass(frozen=True)
class SuggestionRow:
    layer_id: str
    old_f2: int
    new_f2: int
    old_f1: int
    new_f1: int
    lambda_used: float


@dataclass(frozen=True)
class SuggestionPlan:
    rows: tuple[SuggestionRow, ...]
    params_before: int
    params_after: int
    rho: float
    threshold: float
    min_width: int
    underprovisioned: tuple[str, ...] = ()


def _shrunk_width(width: int, lam: float, rho: float, min_width: int) -> int:
    if lam <= LAMBDA_FLOOR:
        return width
    shrunk = 2 * round(width * (1.0 - rho * lam) / 2.0)
    return min(width, max(min_width, shrunk))


def suggest(
    structure: NetworkStructure,
    ckrm: Mapping[str, MultiRunCkrm],
    t: float = 0.6,
    rho: float = DEFAULT_RHO,
    min_width: int = DEFAULT_MIN_WIDTH,
) -> SuggestionPlan:
    """Propose reduced widths: each width group shrinks by the factor
    (1 - rho * lambda), rounded to the nearest even width, floored at
    min_width, using the largest mean lambda among the group's layers.
    Groups at or below the lambda floor keep their width; widths never
    grow. Consumers' f1 follow their group's new width.
    """
    if not 0.0 < rho <= 1.0:
        raise InputError(f"rho must be in (0, 1], got {rho}")
    missing = [
        spec.layer_id
        for spec in structure.layers
        if spec.f2 >= 2 and spec.layer_id not in ckrm
    ]
    if missing:
        raise InputError(
            "no redundancy entry for layer(s): " + ", ".join(sorted(missing))
        )

    def mean_lambda(spec: LayerSpec) -> float:
        entry = ckrm.get(spec.layer_id)
        if entry is None:
            return 0.0
        try:
            return entry.mean_lambda_at(t)
        except KeyError:
            raise InputError(
                f"threshold {t} not present in the report for {spec.layer_id!r}"
            ) from None

    # group-level lambda: the worst member; a redundant layer cannot hide
    # behind siblings sharing its width
    group_lambda: dict[str, float] = {}
    for spec in structure.layers:
        if spec.group is not None:
            group_lambda[spec.group] = max(
                group_lambda.get(spec.group, 0.0), mean_lambda(spec)
            )

    new_width: dict[str, int] = {}
    group_members: dict[str, list[LayerSpec]] = {}
    for spec in structure.layers:
        if spec.group is not None:
            group_members.setdefault(spec.group, []).append(spec)
    for name, members in group_members.items():
        new_width[name] = _shrunk_width(
            members[0].f2, group_lambda[name], rho, min_width
        )

    rows = []
    new_layers = []
    for spec in structure.layers:
        if spec.group is not None:
            lam = group_lambda[spec.group]
            old_width = structure.layer(group_members[spec.group][0].layer_id).f2
            f2 = new_width[spec.group]
            # f1 follows the group width when it was tied to it
            f1 = f2 if spec.f1 == old_width else spec.f1
        else:
            lam = mean_lambda(spec)
            f2 = _shrunk_width(spec.f2, lam, rho, min_width)
            f1 = spec.f1
        rows.append(
            SuggestionRow(
                layer_id=spec.layer_id,
                old_f2=spec.f2,
                new_f2=f2,
                old_f1=spec.f1,
                new_f1=f1,
                lambda_used=lam,
            )
        )
        new_layers.append(replace(spec, f2=f2, f1=f1))

    underprovisioned = []
    for spec in structure.layers:
        entry = ckrm.get(spec.layer_id)
        if entry is None:
            continue
        try:
            if entry.mean_lambda_at(UNDERPROVISIONED_T) == 0.0:
                underprovisioned.append(spec.layer_id)
        except KeyError:
            pass

    new_structure = NetworkStructure(
        layers=tuple(new_layers),
        extras_count=structure.extras_count,
        extras_note=structure.extras_note,
    )
    bad = validate(new_structure)
    if bad:
        raise ConstraintViolation(
            "suggested structure violates width constraints: " + "; ".join(bad)
        )
    return SuggestionPlan(
        rows=tuple(rows),
        params_before=count_params(structure),
        params_after=count_params(new_structure),
        rho=rho,
        threshold=t,
        min_width=min_width,
        underprovisioned=tuple(underprovisioned),
    )


def apply_plan(structure: NetworkStructure, plan: SuggestionPlan) -> NetworkStructure:
    """The structure a plan describes, for recounting or saving."""
    by_id = {row.layer_id: row for row in plan.rows}
    new_layers = []
    for spec in structure.layers:
        row = by_id.get(spec.layer_id)
        if row is None:
            raise InputError(f"plan has no entry for layer {spec.layer_id!r}")
        new_layers.append(replace(spec, f2=row.new_f2, f1=row.new_f1))
    return NetworkStructure(
        layers=tuple(new_layers),
        extras_count=structure.extras_count,
        extras_note=structure.extras_note,
    )
