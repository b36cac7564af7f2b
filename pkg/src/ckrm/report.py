"""Analysis report model, strict JSON (de)serialization, and the SVG
similarity-histogram rendering.

Reports are written with sorted keys and no volatile content, so the
same inputs and flags always produce byte-identical files. Per-layer
wall-clock timings live on the in-memory object only; they are printed
to stderr by the CLI, never serialized.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ReportError
from .redundancy import CkrmResult, MultiRunCkrm, SampleInfo

SCHEMA_VERSION = 1
REPORT_KIND = "ckrm-report"
PLAN_KIND = "ckrm-plan"


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(frozen=True)
class LayerAnalysis:
    """One layer's aggregated results plus its kernel dims; 1x1 layers
    are flagged because single-pixel patches have no structure term."""

    result: MultiRunCkrm
    shape: tuple[int, int, int, int]

    @property
    def one_by_one(self) -> bool:
        return self.shape[2] == 1 and self.shape[3] == 1


@dataclass
class AnalysisReport:
    tool_version: str
    inputs: tuple[tuple[str, str], ...]  # (path, sha256) per archive
    params: dict
    layers: dict[str, LayerAnalysis]
    timings: dict[str, float] = field(default_factory=dict)  # seconds, not serialized


def _run_to_dict(run: CkrmResult) -> dict:
    return {
        "lambda": list(run.lambdas),
        "histogram": list(run.histogram),
        "sample": {
            "count": run.sample.count,
            "exhaustive": run.sample.exhaustive,
            "seed": run.sample.seed,
        },
        "stderr": None if run.stderr is None else list(run.stderr),
    }


def report_to_dict(report: AnalysisReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": REPORT_KIND,
        "tool_version": report.tool_version,
        "inputs": [{"path": p, "sha256": d} for p, d in report.inputs],
        "params": dict(report.params),
        "layers": {
            name: {
                "shape": list(layer.shape),
                "one_by_one": layer.one_by_one,
                "thresholds": list(layer.result.thresholds),
                "mean_lambda": list(layer.result.mean_lambda),
                "runs": [_run_to_dict(run) for run in layer.result.per_run],
            }
            for name, layer in report.layers.items()
        },
    }


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ReportError(f"{where}: expected an object")
    unknown = obj.keys() - allowed
    if unknown:
        raise ReportError(f"{where}: unknown field {sorted(unknown)[0]!r}")
    missing = required - obj.keys()
    if missing:
        raise ReportError(f"{where}: missing field {sorted(missing)[0]!r}")


def report_from_dict(obj: dict, where: str = "report") -> AnalysisReport:
    top = {"schema_version", "kind", "tool_version", "inputs", "params", "layers"}
    _require_keys(obj, top, top, where)
    if obj["schema_version"] != SCHEMA_VERSION:
        raise ReportError(
            f"{where}: unsupported schema_version {obj['schema_version']!r}"
        )
    if obj["kind"] != REPORT_KIND:
        raise ReportError(f"{where}: not a report file (kind={obj['kind']!r})")
    inputs = []
    for entry in obj["inputs"]:
        _require_keys(entry, {"path", "sha256"}, {"path", "sha256"}, f"{where}.inputs")
        inputs.append((entry["path"], entry["sha256"]))
    layers = {}
    layer_keys = {"shape", "one_by_one", "thresholds", "mean_lambda", "runs"}
    run_keys = {"lambda", "histogram", "sample", "stderr"}
    sample_keys = {"count", "exhaustive", "seed"}
    for name, entry in obj["layers"].items():
        _require_keys(entry, layer_keys, layer_keys, f"{where}.layers[{name!r}]")
        thresholds = tuple(float(t) for t in entry["thresholds"])
        runs = []
        for k, run in enumerate(entry["runs"]):
            run_where = f"{where}.layers[{name!r}].runs[{k}]"
            _require_keys(run, run_keys, run_keys, run_where)
            _require_keys(run["sample"], sample_keys, sample_keys, run_where)
            sample = SampleInfo(
                count=int(run["sample"]["count"]),
                exhaustive=bool(run["sample"]["exhaustive"]),
                seed=run["sample"]["seed"],
            )
            stderr = run["stderr"]
            runs.append(
                CkrmResult(
                    layer_id=name,
                    thresholds=thresholds,
                    lambdas=tuple(float(v) for v in run["lambda"]),
                    histogram=tuple(int(c) for c in run["histogram"]),
                    sample=sample,
                    stderr=None if stderr is None else tuple(float(s) for s in stderr),
                )
            )
        result = MultiRunCkrm(
            layer_id=name,
            per_run=tuple(runs),
            mean_lambda=tuple(float(v) for v in entry["mean_lambda"]),
        )
        layers[name] = LayerAnalysis(result=result, shape=tuple(entry["shape"]))
    return AnalysisReport(
        tool_version=obj["tool_version"],
        inputs=tuple(inputs),
        params=obj["params"],
        layers=layers,
    )


def _dump(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_report(report: AnalysisReport, path: str | Path) -> None:
    Path(path).write_text(_dump(report_to_dict(report)))


def read_report(path: str | Path) -> AnalysisReport:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise ReportError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path}: not valid JSON: {exc}") from exc
    return report_from_dict(obj, where=str(path))


def write_plan(plan, tool_version: str, path: str | Path) -> None:
    obj = {
        "schema_version": SCHEMA_VERSION,
        "kind": PLAN_KIND,
        "tool_version": tool_version,
        "threshold": plan.threshold,
        "rho": plan.rho,
        "min_width": plan.min_width,
        "layers": [
            {
                "id": row.layer_id,
                "old_f2": row.old_f2,
                "new_f2": row.new_f2,
                "old_f1": row.old_f1,
                "new_f1": row.new_f1,
                "lambda_used": row.lambda_used,
            }
            for row in plan.rows
        ],
        "projected_params": {
            "before": plan.params_before,
            "after": plan.params_after,
        },
        "possibly_underprovisioned": list(plan.underprovisioned),
    }
    Path(path).write_text(_dump(obj))


# -- SVG histogram -----------------------------------------------------------

_SVG_W, _SVG_H = 640, 360
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 50, 15, 45, 35


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def render_histogram_svg(report: AnalysisReport, layer: str, t: float = 0.6) -> str:
    """Standalone SVG of a layer's similarity histogram (bins summed
    over runs), with a threshold marker and the lambda values in the
    title."""
    if layer not in report.layers:
        raise ReportError(f"layer {layer!r} not present in the report")
    analysis = report.layers[layer]
    runs = analysis.result.per_run
    bins = len(runs[0].histogram)
    counts = [sum(run.histogram[b] for run in runs) for b in range(bins)]
    total = sum(counts)
    peak = max(counts) if max(counts) > 0 else 1

    plot_w = _SVG_W - _MARGIN_L - _MARGIN_R
    plot_h = _SVG_H - _MARGIN_T - _MARGIN_B
    bar_w = plot_w / bins

    try:
        lam = analysis.result.mean_lambda_at(t)
        title = f"{layer}: lambda({t:g}) = {lam:.4f} over {len(runs)} run(s)"
    except KeyError:
        raise ReportError(
            f"threshold {t:g} not present in the report "
            f"(have {list(analysis.result.thresholds)})"
        ) from None

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_MARGIN_L}" y="22" font-family="sans-serif" font-size="14">'
        f"{title}</text>",
        f'<text x="{_MARGIN_L}" y="40" font-family="sans-serif" font-size="11" '
        f'fill="#555">pairwise similarity, n = {total}</text>',
    ]
    for b, count in enumerate(counts):
        h = 0.0 if count == 0 else count / peak * plot_h
        x = _MARGIN_L + b * bar_w
        y = _MARGIN_T + plot_h - h
        parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bar_w)}" '
            f'height="{_fmt(h)}" fill="#4878a8" data-count="{count}"/>'
        )
    # axis line and labels
    axis_y = _MARGIN_T + plot_h
    parts.append(
        f'<line x1="{_MARGIN_L}" y1="{_fmt(axis_y)}" x2="{_MARGIN_L + plot_w}" '
        f'y2="{_fmt(axis_y)}" stroke="black"/>'
    )
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        x = _MARGIN_L + tick * plot_w
        parts.append(
            f'<text x="{_fmt(x)}" y="{_SVG_H - 12}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle">{tick:g}</text>'
        )
    # threshold marker
    marker_x = _MARGIN_L + t * plot_w
    parts.append(
        f'<line x1="{_fmt(marker_x)}" y1="{_MARGIN_T}" x2="{_fmt(marker_x)}" '
        f'y2="{_fmt(axis_y)}" stroke="#c03030" stroke-dasharray="4,3" '
        f'data-threshold="{t:g}"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
