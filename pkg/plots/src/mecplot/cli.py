"""Command line: plots <kind> --in <csv...> --out <file> [--dump-series <json>]."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .charts import ChartKind, EmptyLogError, PlotSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots", description="Render charts from planner iteration logs.")
    parser.add_argument("kind", choices=[k.value for k in ChartKind])
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="iteration-log CSV file(s)")
    parser.add_argument("--out", required=True, help="output image (svg/pdf/png)")
    parser.add_argument("--dump-series", default=None,
                        help="also write the plotted numeric series as JSON")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    spec = PlotSpec(
        kind=ChartKind(args.kind),
        inputs=tuple(Path(p) for p in args.inputs),
        output=Path(args.out),
        dump_series=Path(args.dump_series) if args.dump_series else None,
    )
    try:
        out = render(spec)
    except (SchemaError, EmptyLogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
