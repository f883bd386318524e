"""Method comparison and one-parameter sweeps."""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import SimConfig
from .engine import RunReport, run_greedy, run_offline, run_online, validate_run
from .scenario import generate_fleet, group_by_delay, prices_for

METHODS = ("greedy", "offline", "online", "online-nofeedback")
SWEEP_PARAMS = ("V", "alpha", "eta-mult", "groups", "fleet-size")


def run_method(method: str, cfg: SimConfig, fleet, prices) -> RunReport:
    if method == "greedy":
        return run_greedy(cfg, fleet, prices)
    if method == "offline":
        return run_offline(cfg, fleet, prices)
    if method == "online":
        return run_online(cfg, fleet, prices, feedback=True)
    if method == "online-nofeedback":
        return run_online(cfg, fleet, prices, feedback=False)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def compare(cfg: SimConfig, methods: Sequence[str] = ("greedy", "offline", "online")) -> list[dict]:
    """Total value of each method on one scenario (same fleet and prices)."""
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    fleet, prices = generate_fleet(cfg), prices_for(cfg)
    reports = {m: run_method(m, cfg, fleet, prices) for m in methods}
    offline_total = reports["offline"].total if "offline" in reports else None
    rows = []
    for m, rep in reports.items():
        checks = validate_run(rep, fleet, cfg, offline_total)
        rows.append({"method": m, "seed": cfg.seed, "total_usd": rep.total,
                     "mean_alpha": float(rep.alpha.mean()) if rep.alpha is not None else None,
                     "checks_passed": checks.passed, "runtime_s": rep.runtime})
    return rows


def sweep_config(cfg: SimConfig, param: str, value: float, fleet=None) -> SimConfig:
    if param == "V":
        return cfg.replace(**{"algorithm.V": float(value)})
    if param == "alpha":
        return cfg.replace(**{"dispatch.kind": "constant", "dispatch.alpha": float(value)})
    if param == "eta-mult":
        return cfg.replace(**{"algorithm.eta_multiplier": float(value)})
    if param == "fleet-size":
        return cfg.replace(**{"fleet.count": int(value)})
    if param == "groups":
        fleet = fleet if fleet is not None else generate_fleet(cfg)
        base = group_by_delay(fleet, cfg.slot_hours, cfg.algorithm.group_rule).G
        extra = int(value) - base
        if extra < 0:
            raise ValueError(f"cannot reach {int(value)} groups from {base} by splitting")
        return cfg.replace(**{"algorithm.extra_groups": extra})
    raise ValueError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")


def _sweep_point(args) -> dict:
    cfg, param, value, feedback = args
    fleet, prices = generate_fleet(cfg), prices_for(cfg)
    rep = run_online(cfg, fleet, prices, feedback=feedback)
    feasible = ~rep.infeasible
    delays = rep.completion_delay[feasible]
    delays = delays[~np.isnan(delays)]
    return {
        "param": param, "value": value, "total_usd": rep.total,
        "groups": len(rep.group_labels), "evs": len(fleet),
        "mean_delay_slots": float(delays.mean()) if delays.size else float("nan"),
        "max_delay_slots": float(delays.max()) if delays.size else float("nan"),
        "runtime_s": rep.runtime,
    }


def sweep(cfg: SimConfig, param: str, values: Sequence[float], workers: int = 1,
          feedback: bool = True) -> list[dict]:
    """One online run per value; other settings and the seed stay fixed."""
    fleet = generate_fleet(cfg) if param == "groups" else None
    jobs = [(sweep_config(cfg, param, v, fleet), param, v, feedback) for v in values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


def write_rows(rows: list[dict], path: str | Path, drop: Sequence[str] = ()) -> None:
    if not rows:
        Path(path).write_text("")
        return
    keys = [k for k in rows[0] if k not in drop]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in keys})
