#!/usr/bin/env python3
"""Scaling benchmark: full-batch graph conv vs minibatched subgraph passes.

Times one layer forward+backward across a grid of graph sizes and fits
log-log slopes. The dense full-batch pass scales roughly quadratically
with vertex count while the minibatched pass stays near linear.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from mgk.bench import DEFAULT_N_GRID, ScalingReport, run_scaling, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="bench.csv")
    ap.add_argument("--n-grid", default=",".join(str(n) for n in
                                                 DEFAULT_N_GRID))
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--p", type=int, default=16)
    ap.add_argument("--m", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    n_grid = tuple(int(v) for v in args.n_grid.split(","))
    rows, slopes = [], {}
    for mode in ("full-gcn", "minigcn"):
        report = run_scaling(mode, n_grid=n_grid, d=args.d, p=args.p,
                             m=args.m, repeats=args.repeats, seed=args.seed)
        rows.extend(report.rows)
        slopes.update(report.slopes)
        for name, slope in report.slopes.items():
            print(f"{name}: slope {slope:.3f}")

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        write_csv(ScalingReport(rows=rows, slopes=slopes), fh)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
