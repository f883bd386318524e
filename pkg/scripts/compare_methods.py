#!/usr/bin/env python3
"""Total flexibility value of greedy, offline and online (with and without
feedback) over several seeds of a preset; writes a CSV and prints a table."""
import argparse
from pathlib import Path

import numpy as np

from evflex.config import PRESETS
from evflex.experiments import compare, write_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="commercial", choices=sorted(PRESETS))
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", type=Path, default=Path("results/compare_methods.csv"))
    args = ap.parse_args()

    methods = ["greedy", "offline", "online", "online-nofeedback"]
    rows = []
    for seed in range(args.seeds):
        rows += compare(PRESETS[args.preset](seed=seed), methods)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_rows(rows, args.out, drop=("runtime_s",))

    print(f"{'method':<18} {'mean USD':>9} {'std':>7}  vs greedy")
    greedy = np.mean([r["total_usd"] for r in rows if r["method"] == "greedy"])
    for m in methods:
        vals = np.array([r["total_usd"] for r in rows if r["method"] == m])
        print(f"{m:<18} {vals.mean():>9.2f} {vals.std():>7.2f}  {100 * (vals.mean() / greedy - 1):+6.1f}%")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
