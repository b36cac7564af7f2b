"""Command-line surface.

Subcommands: analyze (measure per-layer redundancy of one or more
weight archives), suggest (turn a report plus a structure file into a
width-reduction plan), params (parameter accounting for a structure
file), hist (SVG histogram of one layer's pair similarities), and
demo-noise (noise-robustness table of the similarity measures).

Exit codes: 0 success, 1 input error, 2 constraint violation,
3 internal error.
"""

from __future__ import annotations

import argparse
import fnmatch
import hashlib
import sys
import time
from pathlib import Path

from . import __version__
from .errors import ConstraintViolation, InputError
from .redundancy import (
    DEFAULT_SAMPLE_SIZE,
    DEFAULT_THRESHOLDS,
    PRIMARY_THRESHOLD,
    aggregate,
    analyze_layer,
)
from .report import (
    AnalysisReport,
    LayerAnalysis,
    file_digest,
    read_report,
    render_histogram_svg,
    write_plan,
    write_report,
)
from .ssim import DEFAULT_EPSILON, SimilarityParams, demo_noise
from .structure import (
    DEFAULT_MIN_WIDTH,
    DEFAULT_RHO,
    count_params,
    load_structure,
    suggest,
    validate,
)
from .tensor_io import as_conv_kernel, load_archive


def _layer_seed(seed: int, run: int, layer: str) -> int:
    # stable sub-stream per (archive, layer); independent of processing order
    digest = hashlib.sha256(f"{seed}:{run}:{layer}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _parse_thresholds(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise InputError(f"bad thresholds {text!r}: {exc}") from exc
    if not values:
        raise InputError("at least one threshold is required")
    for t in values:
        if not 0.0 <= t <= 1.0:
            raise InputError(f"threshold {t} outside [0, 1]")
    return values


def _parse_sample(text: str) -> int | str:
    if text == "all":
        return "all"
    try:
        value = int(text)
    except ValueError as exc:
        raise InputError(f"bad sample size {text!r}") from exc
    if value < 1:
        raise InputError("sample size must be >= 1 or 'all'")
    return value


def _check_seed(seed: int) -> None:
    if not 0 <= seed < 2**64:
        raise InputError(f"seed must be an unsigned 64-bit integer, got {seed}")


def cmd_analyze(args: argparse.Namespace) -> int:
    _check_seed(args.seed)
    try:
        params = SimilarityParams(
            alpha=args.alpha, beta=args.beta, gamma=args.gamma, epsilon=args.epsilon
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    thresholds = _parse_thresholds(args.thresholds)
    sample_size = _parse_sample(args.sample)

    archives = [load_archive(path) for path in args.weights]
    matched = sorted(
        name
        for name, record in archives[0].records.items()
        if record.rank == 4 and fnmatch.fnmatchcase(name, args.layers)
    )
    if not matched:
        raise InputError(
            f"no rank-4 tensor matches layer filter {args.layers!r} "
            f"in {archives[0].source_path}"
        )
    for archive in archives[1:]:
        for name in matched:
            if name not in archive:
                raise InputError(f"{archive.source_path}: missing layer {name!r}")
            if archive[name].shape != archives[0][name].shape:
                raise InputError(
                    f"layer {name!r} shape differs across archives: "
                    f"{archives[0][name].shape} vs {archive[name].shape}"
                )

    layers: dict[str, LayerAnalysis] = {}
    timings: dict[str, float] = {}
    skipped = []
    for name in matched:
        shape = archives[0][name].shape
        if shape[0] < 2:
            skipped.append(name)
            continue
        start = time.perf_counter()
        runs = []
        for run_idx, archive in enumerate(archives):
            kernels = as_conv_kernel(archive, name)
            runs.append(
                analyze_layer(
                    kernels,
                    params,
                    thresholds,
                    sample_size,
                    _layer_seed(args.seed, run_idx, name),
                )
            )
        timings[name] = time.perf_counter() - start
        layers[name] = LayerAnalysis(result=aggregate(runs), shape=shape)
    if skipped:
        print(
            "skipped single-kernel layer(s): " + ", ".join(skipped), file=sys.stderr
        )
    if not layers:
        raise InputError("no analyzable layers (every match has fewer than 2 kernels)")

    report = AnalysisReport(
        tool_version=__version__,
        inputs=tuple((str(path), file_digest(path)) for path in args.weights),
        params={
            "alpha": args.alpha,
            "beta": args.beta,
            "gamma": args.gamma,
            "epsilon": args.epsilon,
            "thresholds": list(thresholds),
            "sample_size": sample_size,
            "seed": args.seed,
            "layer_filter": args.layers,
        },
        layers=layers,
        timings=timings,
    )
    write_report(report, args.out)
    for name, layer in layers.items():
        lam = ", ".join(
            f"lambda({t:g})={v:.4f}"
            for t, v in zip(thresholds, layer.result.mean_lambda)
        )
        note = "  [1x1 kernel: structure term degenerate]" if layer.one_by_one else ""
        print(f"{name}: {lam}  ({timings[name]:.2f}s){note}", file=sys.stderr)
    print(f"report written to {args.out}")
    return 0


def cmd_suggest(args: argparse.Namespace) -> int:
    report = read_report(args.report)
    structure = load_structure(args.structure)
    violations = validate(structure)
    if violations:
        raise ConstraintViolation(
            f"{args.structure}: " + "; ".join(violations)
        )
    ckrm = {name: layer.result for name, layer in report.layers.items()}
    plan = suggest(
        structure, ckrm, t=args.t, rho=args.rho, min_width=args.min_width
    )
    write_plan(plan, __version__, args.out)
    changed = sum(1 for row in plan.rows if row.new_f2 != row.old_f2)
    print(
        f"plan written to {args.out}: {changed} of {len(plan.rows)} layers shrink, "
        f"{plan.params_before:,} -> {plan.params_after:,} parameters"
    )
    return 0


def cmd_params(args: argparse.Namespace) -> int:
    structure = load_structure(args.structure)
    header = f"{'layer':<12} {'f2':>5} {'f1':>5} {'k1':>3} {'k2':>3} {'bias':>5} {'params':>12}"
    print(header)
    for spec in structure.layers:
        print(
            f"{spec.layer_id:<12} {spec.f2:>5} {spec.f1:>5} {spec.k1:>3} "
            f"{spec.k2:>3} {str(spec.has_bias).lower():>5} {spec.params:>12,}"
        )
    print(f"{'extras':<12} {'':>25} {structure.extras_count:>12,}")
    total = count_params(structure)
    print(f"total {total}")
    violations = validate(structure)
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return 2
    return 0


def cmd_hist(args: argparse.Namespace) -> int:
    report = read_report(args.report)
    svg = render_histogram_svg(report, args.layer, t=args.t)
    Path(args.out).write_text(svg)
    print(f"histogram written to {args.out}")
    return 0


def cmd_demo_noise(args: argparse.Namespace) -> int:
    _check_seed(args.seed)
    if args.trials < 1:
        raise InputError("trials must be >= 1")
    table = demo_noise(args.seed, args.trials, epsilon=args.epsilon)
    print(table.to_text(), end="")
    if args.out:
        Path(args.out).write_text(table.to_csv())
        print(f"csv written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ckrm",
        description="Measure convolution-kernel redundancy and suggest narrower layer widths.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="measure per-layer redundancy of weight archives")
    p.add_argument("--weights", nargs="+", required=True, metavar="PATH",
                   help="one archive per independently trained checkpoint")
    p.add_argument("--layers", default="*", help="glob filter on tensor names (default: all)")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--thresholds", default=",".join(str(t) for t in DEFAULT_THRESHOLDS))
    p.add_argument("--sample", default=str(DEFAULT_SAMPLE_SIZE),
                   help="pairs to sample per layer, or 'all'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("suggest", help="turn a report into a width-reduction plan")
    p.add_argument("--report", required=True)
    p.add_argument("--structure", required=True)
    p.add_argument("--rho", type=float, default=DEFAULT_RHO,
                   help="shrink aggressiveness in (0, 1]")
    p.add_argument("--t", type=float, default=PRIMARY_THRESHOLD)
    p.add_argument("--min-width", type=int, default=DEFAULT_MIN_WIDTH)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_suggest)

    p = sub.add_parser("params", help="parameter accounting for a structure file")
    p.add_argument("--structure", required=True)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("hist", help="SVG histogram of one layer's pair similarities")
    p.add_argument("--report", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--t", type=float, default=PRIMARY_THRESHOLD)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("demo-noise", help="noise-robustness table of the measures")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--out", default=None, help="optional CSV path")
    p.set_defaults(func=cmd_demo_noise)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConstraintViolation as exc:
        print(f"constraint violation: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
