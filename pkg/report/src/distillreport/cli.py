"""distillreport: charts and tables from metrics JSONL files."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .charts import render_curves
from .series import InputError, load_metrics
from .tables import final_metrics_from_series, render_comparison_table


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="distillreport",
        description="Render SVG training curves and a markdown comparison "
                    "table from experiment metrics JSONL files.")
    parser.add_argument("metrics", nargs="+", help="metrics JSONL file(s)")
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(message)s")

    try:
        series = load_metrics(args.metrics)
    except (InputError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if not series:
        print("error: no metric records found", file=sys.stderr)
        return 2

    written = render_curves(series, args.out)
    finals = final_metrics_from_series(series)
    if finals:
        table_path = os.path.join(args.out, "comparison.md")
        with open(table_path, "w", encoding="utf-8") as f:
            f.write(render_comparison_table(finals))
        written.append(table_path)
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
