"""`plots <kind> --in <dir> --out <file>` command."""
from __future__ import annotations

import argparse
import sys

from .figures import RENDERERS, render
from .schemas import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render publication-style figures from tlsjitter CSV artifacts")
    parser.add_argument("kind", choices=sorted(RENDERERS),
                        help="figure kind to render")
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="directory with the CSV artifacts")
    parser.add_argument("--out", required=True,
                        help="output path base; .png and .svg are written")
    parser.add_argument("--window-us", type=float, default=200.0,
                        help="trace window length in microseconds (traces kind)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    style = {"window_s": args.window_us * 1e-6}
    try:
        written = render(args.kind, args.in_dir, args.out, style)
    except SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
