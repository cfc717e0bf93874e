"""Command-line entry: one subcommand per figure kind."""

from __future__ import annotations

import argparse
import sys

from .figures import FigureSpec, render
from .io import SchemaError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="quadlift-plots",
        description="render evaluation CSV exports as figures")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind, help_text, multi in (
            ("violin", "violin plot of per-IC errors per method", False),
            ("trajectory", "worst-case trajectory overlays", True),
            ("heatmap", "space-time heatmaps, truth vs. methods", True),
            ("bar", "per-test-case relative-error bars", False)):
        p = sub.add_parser(kind, help=help_text)
        p.add_argument("inputs", nargs="+" if multi else 1,
                       help="input CSV path(s)")
        p.add_argument("--out", required=True,
                       help="output image path (PNG and SVG are written)")
        p.add_argument("--methods", default=None,
                       help="comma-separated method labels; default: all")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    methods = ([m.strip() for m in args.methods.split(",") if m.strip()]
               if args.methods else [])
    try:
        spec = FigureSpec(kind=args.kind, inputs=list(args.inputs),
                          output=args.out, methods=methods)
        paths = render(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
