"""Command line for the checkpoint exporter.

Usage: ckrm-export <checkpoint> --out-archive <p> --out-structure <p>
       [--name-map <json file>]

Prints the export manifest as JSON on success. Exit codes: 0 success,
1 input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .exporter import ExportError, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ckrm-export",
        description="Convert a torch checkpoint into a ckrm tensor archive "
        "plus a structure description file.",
    )
    parser.add_argument("checkpoint", help="torch checkpoint (.pt/.pth)")
    parser.add_argument("--out-archive", required=True)
    parser.add_argument("--out-structure", required=True)
    parser.add_argument(
        "--name-map",
        default=None,
        help="JSON file mapping source parameter names to archive names",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    name_map = None
    if args.name_map:
        try:
            name_map = json.loads(Path(args.name_map).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: bad name map: {exc}", file=sys.stderr)
            return 1
    try:
        manifest = export(
            args.checkpoint, args.out_archive, args.out_structure, name_map
        )
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
