"""Command-line entry point: python -m pintplots <kind> --in <csv...> --out <png>."""

import argparse
import sys

from pintplots.figures import KINDS, PlotSpec, render
from pintplots.io import SchemaMismatch


def build_parser():
    p = argparse.ArgumentParser(
        prog="pintplots",
        description="Render solver artifact CSVs as figures",
    )
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--in", dest="inputs", nargs="+", required=True,
                   metavar="CSV")
    p.add_argument("--out", required=True, metavar="PNG")
    p.add_argument("--labels", nargs="*", default=None,
                   help="legend labels, one per input (default: run ids)")
    p.add_argument("--t0", type=float, default=None,
                   help="mesh start time for the x axis")
    p.add_argument("--t-end", type=float, default=None,
                   help="mesh end time for the x axis")
    p.add_argument("--lyapunov", type=float, default=None,
                   help="Lyapunov time; adds a secondary x axis in units of it")
    p.add_argument("--linear", action="store_true",
                   help="linear instead of log y axis")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    spec = PlotSpec(
        kind=args.kind,
        inputs=tuple(args.inputs),
        output=args.out,
        log_y=not args.linear,
        labels=tuple(args.labels) if args.labels else None,
        t0=args.t0,
        t_end=args.t_end,
        lyapunov_time=args.lyapunov,
    )
    try:
        render(spec)
    except (SchemaMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
