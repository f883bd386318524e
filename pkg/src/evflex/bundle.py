"""Run bundles: the CSV/JSON files a run writes, and reading them back."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import SimConfig, config_hash, load_config, save_config
from .engine import RunReport, validate_run
from .offline import FlexRegionSeries
from .scenario import EvTask, PriceSeries, read_fleet, write_fleet, write_prices

QUEUE_COLUMNS = ("slot", "group", "Qhat", "Qcheck", "Zhat", "Zcheck", "xhat", "xcheck", "ahat", "acheck",
                 "served_hat", "served_check", "withdrawn_hat", "withdrawn_check")
DISPATCH_COLUMNS = ("slot", "alpha", "p_agg", "group", "p_g", "ev", "p_v", "shortfall")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _read_rows(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(x) for x in row] for row in reader]
    return header, np.array(data, dtype=float).reshape(-1, len(header))


def _nan_to_none(x: float):
    return None if x is None or not np.isfinite(x) else float(x)


def write_bundle(report: RunReport, fleet: Sequence[EvTask], cfg: SimConfig, out: str | Path,
                 offline_total: float | None = None) -> dict:
    """Write every file of a run into ``out``; returns the metrics dict.

    ``timing.json`` carries the wall-clock runtime; every other file depends
    only on (seed, config, code version).
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    T = len(report.prices)
    if report.checks is None:
        report.checks = validate_run(report, fleet, cfg, offline_total)

    save_config(cfg, out / "config.toml")
    write_fleet(out / "fleet.csv", fleet)
    write_prices(out / "prices.csv", PriceSeries(report.prices, report.dt))

    cum = report.cumulative
    _write_rows(out / "regions.csv", ("slot", "price", "lower", "upper", "value", "cumulative"),
                ((t, report.prices[t], report.region.lower[t], report.region.upper[t], report.values[t], cum[t])
                 for t in range(T)))
    if report.region.group_lower is not None:
        gl, gu = report.region.group_lower, report.region.group_upper
        _write_rows(out / "group_regions.csv", ("slot", "group", "lower", "upper"),
                    ((t, g, gl[g, t], gu[g, t]) for t in range(T) for g in range(gl.shape[0])))
    if report.energy is not None:
        soc = report.soc
        _write_rows(out / "soc.csv", ("slot", "ev", "soc", "energy"),
                    ((t, report.ev_ids[v], soc[v, t], report.energy[v, t])
                     for t in range(T + 1) for v in range(len(report.ev_ids))))
    if report.queues is not None:
        q = report.queues
        G = q["Qhat"].shape[1]
        _write_rows(out / "queues.csv", QUEUE_COLUMNS,
                    ([t, g] + [q[k][t, g] for k in QUEUE_COLUMNS[2:]] for t in range(T) for g in range(G)))
    if report.p_ev is not None:
        members = [np.flatnonzero(report.group_of == g) for g in range(report.p_group.shape[1])]

        def rows():
            for t in range(T):
                for g, vs in enumerate(members):
                    for v in vs:
                        yield (t, report.alpha[t], report.p_agg[t], g, report.p_group[t, g],
                               report.ev_ids[v], report.p_ev[v, t], report.shortfall[t, g])
        _write_rows(out / "dispatch.csv", DISPATCH_COLUMNS, rows())

    groups = []
    for g, label in enumerate(report.group_labels):
        groups.append({
            "label": label, "R": float(report.group_R[g]),
            "eta": _nan_to_none(report.group_eta[g]) if report.group_eta is not None else None,
            "delay_bound_hat": _nan_to_none(report.delay_bound_hat[g]) if report.delay_bound_hat is not None else None,
            "delay_bound_check": _nan_to_none(report.delay_bound_check[g]) if report.delay_bound_check is not None else None,
        })
    evs = []
    for v, ev_id in enumerate(report.ev_ids):
        evs.append({
            "id": int(ev_id), "group": int(report.group_of[v]),
            "completion_delay": _nan_to_none(report.completion_delay[v]) if report.completion_delay is not None else None,
            "asap_slots": _nan_to_none(report.asap_slots[v]) if report.asap_slots is not None else None,
            "unmet_kwh": _nan_to_none(report.unmet[v]) if report.unmet is not None else None,
            "infeasible": bool(report.infeasible[v]),
        })
    metrics = {
        "method": report.method, "feedback": report.feedback, "seed": cfg.seed,
        "config_hash": config_hash(cfg), "code_version": __version__,
        "V": report.V, "horizon_slots": T, "slot_hours": report.dt, "efficiency": report.efficiency,
        "total_value_usd": report.total, "offline_total_usd": offline_total,
        "drift_constant": report.drift_constant,
        "groups": groups, "evs": evs, "checks": report.checks.to_dict(),
        "checks_passed": report.checks.passed,
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    (out / "timing.json").write_text(json.dumps({"runtime_s": report.runtime}, indent=2) + "\n")
    return metrics


def read_bundle(path: str | Path) -> tuple[RunReport, list[EvTask], SimConfig, dict]:
    """Rebuild a report from a bundle directory (enough to re-run the checks)."""
    path = Path(path)
    cfg = load_config(path / "config.toml")
    fleet = read_fleet(path / "fleet.csv")
    metrics = json.loads((path / "metrics.json").read_text())
    V, T = len(fleet), int(metrics["horizon_slots"])
    pos = {ev.id: v for v, ev in enumerate(fleet)}

    _, reg = _read_rows(path / "regions.csv")
    region = FlexRegionSeries(lower=reg[:, 2].copy(), upper=reg[:, 3].copy())
    groups = metrics["groups"]
    G = len(groups)
    if (path / "group_regions.csv").exists():
        _, gr = _read_rows(path / "group_regions.csv")
        region.group_lower = gr[:, 2].reshape(T, G).T.copy()
        region.group_upper = gr[:, 3].reshape(T, G).T.copy()

    def arr(key, rows=metrics["evs"]):
        values = [r[key] for r in rows]
        if any(x is None for x in values) and all(x is None for x in values):
            return None
        return np.array([np.nan if x is None else x for x in values], dtype=float)

    def garr(key):
        return arr(key, groups)

    energy = None
    if (path / "soc.csv").exists():
        _, soc = _read_rows(path / "soc.csv")
        energy = np.zeros((V, T + 1))
        for t, ev_id, _, e in soc:
            energy[pos[int(ev_id)], int(t)] = e

    report = RunReport(
        method=metrics["method"], feedback=metrics["feedback"], prices=reg[:, 1].copy(),
        dt=metrics["slot_hours"], efficiency=metrics["efficiency"], region=region,
        values=reg[:, 4].copy(), total=metrics["total_value_usd"],
        ev_ids=np.array([ev.id for ev in fleet], dtype=int),
        capacity=np.array([ev.capacity for ev in fleet]), energy=energy,
        group_labels=[g["label"] for g in groups], group_R=garr("R"), group_eta=garr("eta"),
        group_of=np.array([r["group"] for r in metrics["evs"]], dtype=int),
        completion_delay=arr("completion_delay"), asap_slots=arr("asap_slots"), unmet=arr("unmet_kwh"),
        infeasible=np.array([r["infeasible"] for r in metrics["evs"]], dtype=bool),
        delay_bound_hat=garr("delay_bound_hat"), delay_bound_check=garr("delay_bound_check"),
        drift_constant=metrics["drift_constant"], V=metrics["V"],
    )
    if (path / "queues.csv").exists():
        header, q = _read_rows(path / "queues.csv")
        report.queues = {k: q[:, i].reshape(T, G).copy() for i, k in enumerate(header) if i >= 2}
    if (path / "dispatch.csv").exists():
        _, d = _read_rows(path / "dispatch.csv")
        report.alpha = np.zeros(T)
        report.p_agg = np.zeros(T)
        report.p_group = np.zeros((T, G))
        report.shortfall = np.zeros((T, G))
        report.p_ev = np.zeros((V, T))
        for t, alpha, p_agg, g, p_g, ev_id, p_v, short in d:
            t, g = int(t), int(g)
            report.alpha[t], report.p_agg[t] = alpha, p_agg
            report.p_group[t, g], report.shortfall[t, g] = p_g, short
            report.p_ev[pos[int(ev_id)], t] = p_v
    return report, fleet, cfg, metrics
