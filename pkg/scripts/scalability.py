#!/usr/bin/env python3
"""Wall-clock time of one online run against fleet size (median of repeats)."""
import argparse
import statistics
import time
from pathlib import Path

from evflex.config import commercial_preset
from evflex.engine import run_online
from evflex.experiments import write_rows
from evflex.scenario import generate_fleet, prices_for


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="50,100,200,300,500")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--out", type=Path, default=Path("results/scalability.csv"))
    args = ap.parse_args()

    rows = []
    for n in (int(x) for x in args.sizes.split(",")):
        cfg = commercial_preset(**{"fleet.count": n})
        fleet, prices = generate_fleet(cfg), prices_for(cfg)
        run_online(cfg, fleet, prices)
        times = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            run_online(cfg, fleet, prices)
            times.append(time.perf_counter() - t0)
        rows.append({"evs": n, "median_s": statistics.median(times), "max_s": max(times)})
        print(f"{n:>5} EVs: median {rows[-1]['median_s'] * 1000:.1f} ms, per slot {rows[-1]['median_s'] / 144 * 1000:.3f} ms")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_rows(rows, args.out)


if __name__ == "__main__":
    main()
