"""plot: one CSV-to-image command.

Exit codes mirror the producing CLI: 0 success, 2 for input the caller
got wrong (bad kind, schema mismatch, no data), 1 for anything else
that fails at render time.
"""

import argparse
import sys
from pathlib import Path

from .figures import SCHEMAS, FigureSpec, PlotError, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="render capacity-CLI CSV artifacts to PNG or SVG",
    )
    parser.add_argument("--kind", required=True, choices=sorted(SCHEMAS),
                        help="which figure the CSV(s) hold")
    parser.add_argument("--in", dest="inputs", required=True, nargs="+",
                        type=Path, metavar="CSV",
                        help="input CSV file(s); several overlay")
    parser.add_argument("--out", required=True, type=Path,
                        help="output image (.png or .svg)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = FigureSpec(kind=args.kind, inputs=tuple(args.inputs),
                          output=args.out)
        out = render(spec)
    except (PlotError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
