"""Console entry points: one script per figure kind.

Each script takes positional CSV paths and a required ``-o/--output`` image
path; cosmetic options are shared.  Exit codes: 0 on success, 2 for data
problems (off-schema, empty, or unreadable CSVs), matching the solver CLI's
config-error convention.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .figures import CONTOUR_FIELDS, FigureSpec, render
from .loader import PlotDataError

__all__ = [
    "main_convergence",
    "main_profile",
    "main_entropy",
    "main_contour",
]

_USAGE = {
    "convergence": "log-log depth-error plot with reference-slope guides "
                   "from convergence.csv files",
    "profile": "per-element polynomial polylines of h minus the baseline "
               "(first path: baseline.csv, then solution.csv runs)",
    "entropy": "overlaid entropy-drift curves from entropy.csv files",
    "contour": "filled contours of a 2D solution.csv field",
}


def _build_parser(kind: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=f"balance-dg-plot-{kind}",
                                     description=_USAGE[kind])
    parser.add_argument("csvs", nargs="+", metavar="CSV",
                        help="input CSV path(s)")
    parser.add_argument("-o", "--output", required=True,
                        help="image file to write (format by extension)")
    parser.add_argument("--label", action="append", default=None,
                        help="legend label, one per input (repeatable)")
    parser.add_argument("--title", default=None)
    parser.add_argument("--xlim", nargs=2, type=float, default=None,
                        metavar=("LO", "HI"))
    parser.add_argument("--ylim", nargs=2, type=float, default=None,
                        metavar=("LO", "HI"))
    if kind == "convergence":
        parser.add_argument("--slope", action="append", type=float,
                            default=None,
                            help="reference slope to draw (repeatable; "
                                 "default: p+2 and 2p per degree)")
    if kind == "contour":
        parser.add_argument("--field", default="zeta",
                            choices=CONTOUR_FIELDS,
                            help="which field to contour (default zeta)")
    return parser


def _main(kind: str, argv: Optional[Sequence[str]]) -> int:
    args = _build_parser(kind).parse_args(argv)
    spec = FigureSpec(
        kind=kind,
        csv_paths=tuple(args.csvs),
        output=args.output,
        labels=tuple(args.label) if args.label else None,
        title=args.title,
        xlim=tuple(args.xlim) if args.xlim else None,
        ylim=tuple(args.ylim) if args.ylim else None,
        reference_slopes=(tuple(args.slope)
                          if getattr(args, "slope", None) else None),
        field=getattr(args, "field", "zeta"),
    )
    try:
        out = render(spec)
    except PlotDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot write {spec.output!r}: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


def main_convergence(argv: Optional[Sequence[str]] = None) -> int:
    return _main("convergence", argv)


def main_profile(argv: Optional[Sequence[str]] = None) -> int:
    return _main("profile", argv)


def main_entropy(argv: Optional[Sequence[str]] = None) -> int:
    return _main("entropy", argv)


def main_contour(argv: Optional[Sequence[str]] = None) -> int:
    return _main("contour", argv)
