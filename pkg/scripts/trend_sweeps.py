#!/usr/bin/env python3
"""One-parameter sweeps at a fixed seed: V, constant dispatch ratio, eta
multiplier and group count. One CSV per parameter plus a printed summary."""
import argparse
from pathlib import Path

from evflex.config import PRESETS
from evflex.experiments import sweep, write_rows

SWEEPS = {
    "V": [20, 50, 100, 200],
    "alpha": [0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9],
    "eta-mult": [1, 5, 10],
    "groups": [10, 12, 14, 16],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="commercial", choices=sorted(PRESETS))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="config override, e.g. algorithm.cap_rule=static (repeatable)")
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()

    from evflex.cli import _scalar
    changes = dict(kv.split("=", 1) for kv in args.overrides)
    cfg = PRESETS[args.preset](seed=args.seed, **{k: _scalar(v) for k, v in changes.items()})
    args.out.mkdir(parents=True, exist_ok=True)
    for param, values in SWEEPS.items():
        try:
            rows = sweep(cfg, param, values, workers=args.workers)
        except ValueError as exc:  # e.g. too few groups to split
            print(f"{param}: skipped ({exc})")
            continue
        write_rows(rows, args.out / f"sweep_{param}.csv", drop=("runtime_s",))
        cells = ", ".join(f"{r['value']:g}: {r['total_usd']:.2f} (delay {r['mean_delay_slots']:.1f})" for r in rows)
        print(f"{param:>9} | {cells}")


if __name__ == "__main__":
    main()
