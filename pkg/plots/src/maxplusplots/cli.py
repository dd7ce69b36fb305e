"""plot_bundle command line: render figures from a maxplusdp bundle.

plot_bundle --bundle DIR [--kind trajectories|radii|value_curve|all]
            [--out DIR] [--dpi N] [--svg] [--no-baseline]
            [--title T] [--xlabel X] [--ylabel Y]

Writes one PNG per requested kind (plus SVG with --svg) into --out, never
into the bundle. Exit 2 on a missing or malformed bundle file.
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, BundleFormatError, FigureSpec, plot_bundle


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot_bundle",
        description="render figures from a maxplusdp CSV bundle")
    parser.add_argument("--bundle", required=True, help="bundle directory")
    parser.add_argument("--kind", choices=KINDS + ("all",), default="all",
                        help="figure kind (default: all three)")
    parser.add_argument("--out", default=".", help="image output directory")
    parser.add_argument("--dpi", type=int, default=150)
    parser.add_argument("--svg", action="store_true",
                        help="also write an SVG per figure")
    parser.add_argument("--no-baseline", action="store_true",
                        help="skip the exact-value overlay on the value curve")
    parser.add_argument("--title", default=None)
    parser.add_argument("--xlabel", default=None)
    parser.add_argument("--ylabel", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kinds = KINDS if args.kind == "all" else (args.kind,)
    written = []
    try:
        for kind in kinds:
            spec = FigureSpec(
                bundle=args.bundle, kind=kind, out_dir=args.out,
                dpi=args.dpi, svg=args.svg, baseline=not args.no_baseline,
                title=args.title, xlabel=args.xlabel, ylabel=args.ylabel)
            written.extend(plot_bundle(spec))
    except BundleFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
