"""Command line: render --kind <weights|curves|trainlog> --in CSV [--in2 CSV] --out IMG.

Image format follows the output extension (.png or .svg). Exit codes:
0 rendered, 1 bad arguments, 2 schema mismatch (with a column diff).
"""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="render", description=__doc__)
    parser.add_argument("--kind", required=True, choices=("weights", "curves", "trainlog"))
    parser.add_argument("--in", dest="input_path", required=True, metavar="CSV")
    parser.add_argument("--in2", dest="second_input_path", metavar="CSV",
                        help="second trainlog to overlay (trainlog kind only)")
    parser.add_argument("--out", dest="output_path", required=True, metavar="IMG")
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return 1
    if args.second_input_path and args.kind != "trainlog":
        print("error: --in2 only applies to --kind trainlog", file=sys.stderr)
        return 1
    try:
        spec = FigureSpec(
            kind=args.kind,
            input_path=args.input_path,
            output_path=args.output_path,
            second_input_path=args.second_input_path,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        render(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
