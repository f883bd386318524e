#!/usr/bin/env python3
"""Short-stay fleet: per-group departure SOC, infeasible EVs and unmet energy."""
import argparse

import numpy as np

from evflex.config import short_stay_preset
from evflex.engine import run_online, validate_run
from evflex.scenario import generate_fleet, prices_for


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = short_stay_preset(seed=args.seed)
    fleet, prices = generate_fleet(cfg), prices_for(cfg)
    r = run_online(cfg, fleet, prices)
    T = cfg.horizon_slots
    soc = np.array([r.soc[v, min(ev.t_d, T)] for v, ev in enumerate(fleet)])
    print(f"total value {r.total:.2f} USD")
    print(f"{'group':>6} {'EVs':>4} {'infeasible':>10} {'min SOC':>8} {'mean SOC':>8} {'unmet kWh':>9}")
    for g, label in enumerate(r.group_labels):
        m = r.group_of == g
        print(f"{label:>6} {m.sum():>4} {int(r.infeasible[m].sum()):>10} {soc[m].min():>8.3f} "
              f"{soc[m].mean():>8.3f} {r.unmet[m].sum():>9.2f}")
    for name, res in validate_run(r, fleet, cfg).results.items():
        if res.passed is not None:
            print(f"{'pass' if res.passed else 'FAIL'}  {name}: {res.detail}")


if __name__ == "__main__":
    main()
