#!/usr/bin/env python3
"""Print a one-line summary per experiment from the report CSVs.

Usage: python3 scripts/summarize.py [results-root]
"""

import csv
import sys
from pathlib import Path


def read_stats(path: Path) -> dict:
    with path.open() as fh:
        return {row["stat"]: row["value"] for row in csv.DictReader(fh)}


def main() -> int:
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results")
    reports = sorted(root.glob("*/decay_report.csv"))
    if not reports:
        print(f"no decay_report.csv under {root}/", file=sys.stderr)
        return 1
    for path in reports:
        stats = read_stats(path)
        name = path.parent.name
        if stats.get("experiment") == "decay":
            print(f"{name:24s} fitted {float(stats['fitted_exponent']):+.4f} "
                  f"target {float(stats['target_exponent']):+.4f} "
                  f"rate_ok={stats['rate_ok']} tainted={stats['tainted']}")
        else:
            budget = stats.get("spread_budget") or "-"
            print(f"{name:24s} spread {float(stats['s_spread']):.3f} "
                  f"(budget {budget}) nu={stats['nu']} "
                  f"tainted={stats['tainted']}")
    report = root / "verify" / "verify_report.csv"
    if report.exists():
        with report.open() as fh:
            for row in csv.DictReader(fh):
                print(f"{'verify/' + row['inequality']:24s} "
                      f"worst_ratio {float(row['worst_ratio']):.6g} "
                      f"({row['trials']} trials)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
