"""Recompute the four sensitivity tables and compare with the published ones.

    python3 scripts/reproduce_tables.py [--out results/tables.csv]

Prints computed vs published thresholds per row and the largest gap.
"""
import argparse
import csv
import sys
import time
from pathlib import Path

from optipairs import ModelParams, sensitivity_sweep

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from reference import PUBLISHED_TABLES  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=None, help="optional CSV of all rows")
    args = ap.parse_args()

    out_rows = []
    t0 = time.perf_counter()
    for vary, table in PUBLISHED_TABLES.items():
        rows = sensitivity_sweep(ModelParams(), vary, [r[0] for r in table])
        print(f"\nvarying {vary}")
        print(f"{'value':>7} {'x0':>9} {'pub':>8} {'x1':>9} {'pub':>7} {'x2':>9} {'pub':>7} {'max gap':>8}")
        for row, pub in zip(rows, table):
            got = (row.x0, row.x1, row.x2)
            gap = max(abs(g - p) for g, p in zip(got, pub[1:]))
            print(f"{row.value:7.3f} {row.x0:9.5f} {pub[1]:8.4f} {row.x1:9.5f} {pub[2]:7.3f} "
                  f"{row.x2:9.5f} {pub[3]:7.3f} {gap:8.5f}")
            out_rows.append([vary, row.value, *got, *pub[1:], gap, row.verified])
    print(f"\n{len(out_rows)} rows in {time.perf_counter() - t0:.1f}s")

    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vary", "value", "x0", "x1", "x2", "pub_x0", "pub_x1", "pub_x2",
                        "max_gap", "verified"])
            w.writerows(out_rows)


if __name__ == "__main__":
    main()
