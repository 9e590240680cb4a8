"""Command-line plotting entry point.

Exit codes: 0 success, 1 schema mismatch (the diagnostic names the offending
columns), 2 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .render import PlotSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aope-plot",
        description="Render scaled-error curves with confidence bands from experiment CSVs.",
    )
    parser.add_argument("--csv", action="append", required=True,
                        help="curve CSV path (repeatable)")
    parser.add_argument("--out", required=True, help="output PNG path")
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = PlotSpec(csv_paths=args.csv, out_path=args.out, dpi=args.dpi)
    try:
        out = render(spec)
    except SchemaError as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
