"""Figure rendering from the command line.

  figures trajectories --trace out/traces/*.csv --coord 5 --out fig.svg
  figures bars --summary out/summary.csv --coord 5 --out sd.svg
"""

from __future__ import annotations

import argparse
import sys

from .plots import FigureSpec, method_of_trace, plot_summary_bars, plot_trajectories


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figures")
    sub = parser.add_subparsers(dest="command", required=True)

    traj = sub.add_parser("trajectories", help="estimate-vs-iteration overlay")
    traj.add_argument("--trace", action="append", required=True,
                      help="trace CSV (repeatable)")
    traj.add_argument("--coord", type=int, default=0)
    traj.add_argument("--methods", default=None,
                      help="comma-separated overlay order (default: from filenames)")
    traj.add_argument("--true-value", type=float, default=None)
    traj.add_argument("--out", required=True)
    traj.add_argument("--png", action="store_true", help="write PNG instead of SVG")

    bars = sub.add_parser("bars", help="per-method SD bars")
    bars.add_argument("--summary", required=True)
    bars.add_argument("--coord", type=int, default=0)
    bars.add_argument("--methods", default=None)
    bars.add_argument("--out", required=True)
    bars.add_argument("--png", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fmt = "png" if args.png else "svg"
    methods = ([m for m in args.methods.split(",") if m]
               if args.methods else [])
    try:
        if args.command == "trajectories":
            if not methods:
                seen = []
                for path in args.trace:
                    m = method_of_trace(path)
                    if m not in seen:
                        seen.append(m)
                methods = seen
            spec = FigureSpec(output_path=args.out, coordinate=args.coord,
                              methods=methods, trace_paths=args.trace,
                              true_value=args.true_value, image_format=fmt)
            path = plot_trajectories(spec)
        else:
            spec = FigureSpec(output_path=args.out, coordinate=args.coord,
                              methods=methods, summary_path=args.summary,
                              image_format=fmt)
            path = plot_summary_bars(spec)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
