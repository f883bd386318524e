"""Run orchestration: online characterization with or without feedback, the
offline and greedy benchmarks, value accounting and post-run checks."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import SimConfig
from .demand import fleet_demand, group_matrix
from .dispatch import disaggregate, dispatch_ratio, feedback_update, group_dispatch
from .offline import FlexRegionSeries, greedy_baseline, solve_offline
from .online import compute_caps, deliverable_power, drift_penalty_constant, solve_p3
from .queues import DemandLedger, GroupQueues
from .scenario import EvTask, GroupAssignment, PriceSeries, assign_groups, substream

ENERGY_TOL = 1e-6  # kWh, for requirement checks


@dataclass(frozen=True)
class DispatchPolicy:
    """Source of the operator's dispatch ratio in each slot."""

    kind: str = "uniform"  # uniform | constant | scripted
    alpha: float = 0.5
    low: float = 0.0
    high: float = 1.0
    series: tuple[float, ...] = ()
    seed: int = 0

    def alphas(self, horizon: int) -> np.ndarray:
        if self.kind == "uniform":
            out = substream(self.seed, "dispatch").uniform(self.low, self.high, horizon)
        elif self.kind == "constant":
            out = np.full(horizon, float(self.alpha))
        elif self.kind == "scripted":
            if len(self.series) < horizon:
                raise ValueError(f"scripted dispatch has {len(self.series)} values, need {horizon}")
            out = np.asarray(self.series[:horizon], dtype=float)
        else:
            raise ValueError(f"unknown dispatch policy {self.kind!r}")
        if np.any(out < 0) or np.any(out > 1):
            raise ValueError("dispatch policy emitted a ratio outside [0, 1]")
        return out


def read_alpha_file(path: str | Path) -> tuple[float, ...]:
    """``slot,alpha`` rows; a non-numeric first line is treated as a header."""
    values = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        parts = [p.strip() for p in line.split(",")]
        if not parts or not parts[-1]:
            continue
        try:
            values.append(float(parts[-1]))
        except ValueError:
            if i == 0:
                continue
            raise
    return tuple(values)


def policy_from_config(cfg: SimConfig) -> DispatchPolicy:
    d = cfg.dispatch
    if d.kind == "file":
        return DispatchPolicy("scripted", series=read_alpha_file(d.path), seed=cfg.seed)
    return DispatchPolicy(d.kind, alpha=d.alpha, low=d.low, high=d.high, series=d.series, seed=cfg.seed)


def flexibility_value(lower, upper, prices, dt: float) -> tuple[np.ndarray, float]:
    """Per-slot value ``price * (upper - lower) * dt`` (USD) and its total."""
    lower, upper, prices = (np.asarray(a, dtype=float) for a in (lower, upper, prices))
    if not (lower.shape == upper.shape == prices.shape):
        raise ValueError("region bounds and prices must have the same length")
    values = prices * (upper - lower) * dt
    return values, float(values.sum())


@dataclass
class CheckResult:
    passed: bool | None  # None when the check does not apply
    residual: float = 0.0
    detail: str = ""
    failures: list = field(default_factory=list)


@dataclass
class CheckSummary:
    results: dict[str, CheckResult]

    @property
    def passed(self) -> bool:
        return all(r.passed is not False for r in self.results.values())

    def to_dict(self) -> dict:
        return {k: {"passed": None if r.passed is None else bool(r.passed), "residual": float(r.residual),
                    "detail": r.detail, "failures": [int(x) for x in r.failures[:50]]}
                for k, r in self.results.items()}


@dataclass
class RunReport:
    method: str  # online | offline | greedy
    feedback: bool | None
    prices: np.ndarray
    dt: float
    efficiency: float
    region: FlexRegionSeries
    values: np.ndarray
    total: float
    ev_ids: np.ndarray
    capacity: np.ndarray
    energy: np.ndarray | None = None  # (V, T+1) level at slot boundaries
    group_labels: list[str] = field(default_factory=list)
    group_R: np.ndarray | None = None
    group_eta: np.ndarray | None = None
    group_of: np.ndarray | None = None  # (V,) group position per EV
    queues: dict[str, np.ndarray] | None = None  # name -> (T, G), slot-start state
    alpha: np.ndarray | None = None
    p_agg: np.ndarray | None = None
    p_group: np.ndarray | None = None  # (T, G)
    p_ev: np.ndarray | None = None  # (V, T)
    shortfall: np.ndarray | None = None  # (T, G)
    completion_delay: np.ndarray | None = None  # (V,) slots from arrival, nan if never reached
    asap_slots: np.ndarray | None = None  # (V,) slots the lower profile spans
    unmet: np.ndarray | None = None  # (V,) kWh short of e_d at departure
    infeasible: np.ndarray | None = None  # (V,) stay too short for e_d
    delay_bound_hat: np.ndarray | None = None
    delay_bound_check: np.ndarray | None = None
    drift_constant: float | None = None
    V: float | None = None
    runtime: float = 0.0
    checks: CheckSummary | None = None

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.values)

    @property
    def soc(self) -> np.ndarray | None:
        if self.energy is None:
            return None
        return self.energy / self.capacity[:, None]


def _check_horizon(cfg: SimConfig, prices: PriceSeries | np.ndarray) -> np.ndarray:
    values = prices.values if isinstance(prices, PriceSeries) else np.asarray(prices, dtype=float)
    if len(values) != cfg.horizon_slots:
        raise ValueError(f"price series has {len(values)} slots, horizon is {cfg.horizon_slots}")
    return values


def _completion(energy: np.ndarray, fleet: Sequence[EvTask]) -> np.ndarray:
    delays = np.full(len(fleet), np.nan)
    for v, ev in enumerate(fleet):
        if ev.e_a >= ev.e_d - ENERGY_TOL:
            delays[v] = 0.0
            continue
        reached = np.flatnonzero(energy[v, ev.t_a + 1:] >= ev.e_d - ENERGY_TOL)
        if reached.size:
            delays[v] = float(reached[0] + 1)
    return delays


def _unmet(energy: np.ndarray, fleet: Sequence[EvTask], horizon: int) -> np.ndarray:
    return np.array([max(ev.e_d - energy[v, min(ev.t_d, horizon)], 0.0) for v, ev in enumerate(fleet)])


def run_online(cfg: SimConfig, fleet: Sequence[EvTask], prices: PriceSeries | np.ndarray,
               policy: DispatchPolicy | None = None, feedback: bool = True,
               assignment: GroupAssignment | None = None) -> RunReport:
    """Slot-by-slot online characterization, dispatch and disaggregation.

    Each slot: admit arriving demand, compute caps, solve the per-slot problem,
    dispatch at the policy's ratio, disaggregate first-come-first-served, then
    advance the queues (with the dispatched power when ``feedback`` is on,
    otherwise with the advertised bounds), charge the EVs and retire departures.
    """
    start = time.perf_counter()
    price = _check_horizon(cfg, prices)
    policy = policy or policy_from_config(cfg)
    alg, fc = cfg.algorithm, cfg.fleet
    T, dt, eff = cfg.horizon_slots, cfg.slot_hours, fc.efficiency
    V = len(fleet)
    assignment = assignment or assign_groups(fleet, cfg)
    G = assignment.G

    pos = {ev.id: v for v, ev in enumerate(fleet)}
    rosters = [[pos[i] for i in g.members] for g in assignment.groups]
    group_of = np.zeros(V, dtype=int)
    for gi, roster in enumerate(rosters):
        group_of[roster] = gi
    M = group_matrix(assignment, fleet)
    demand = fleet_demand(fleet, eff, dt, T)
    a_hat, a_check = M @ demand.upper, M @ demand.lower  # (G, T)
    R = assignment.R
    eta = alg.eta_multiplier * R

    t_a = np.array([ev.t_a for ev in fleet], dtype=int)
    t_d = np.array([ev.t_d for ev in fleet], dtype=int)
    e_max = np.array([ev.e_max for ev in fleet])
    p_max = np.array([ev.p_max for ev in fleet])
    e = np.array([ev.e_a for ev in fleet])
    e_required = np.array([ev.e_d for ev in fleet]) if alg.disaggregation == "required-first" else None
    departures: dict[int, list[int]] = {}
    for v in range(V):
        departures.setdefault(int(t_d[v]), []).append(v)

    alphas = policy.alphas(T)
    queues = GroupQueues.empty(R, eta, dt)
    ledger = DemandLedger(rosters, V)

    energy = np.zeros((V, T + 1))
    energy[:, 0] = e
    qtraj = {k: np.zeros((T, G)) for k in
             ("Qhat", "Qcheck", "Zhat", "Zcheck", "xhat", "xcheck", "ahat", "acheck", "served_hat",
              "served_check", "withdrawn_hat", "withdrawn_check")}
    lower, upper = np.zeros(T), np.zeros(T)
    g_lower, g_upper = np.zeros((G, T)), np.zeros((G, T))
    alpha_used, p_agg = np.zeros(T), np.zeros(T)
    p_group, shortfall = np.zeros((T, G)), np.zeros((T, G))
    p_ev = np.zeros((V, T))
    cap_hat_max, cap_check_max = np.zeros(G), np.zeros(G)

    for t in range(T):
        queues = queues.admit(a_hat[:, t], a_check[:, t])
        ledger.release(demand.upper[:, t], demand.lower[:, t], dt)
        snapshot = queues
        qtraj["Qhat"][t], qtraj["Qcheck"][t] = queues.q_hat, queues.q_check
        qtraj["Zhat"][t], qtraj["Zcheck"][t] = queues.z_hat, queues.z_check
        qtraj["ahat"][t], qtraj["acheck"][t] = a_hat[:, t], a_check[:, t]

        present = (t_a <= t) & (t < t_d)
        if alg.cap_rule == "static":
            deliverable = p_max
        else:
            deliverable = deliverable_power(present, e, e_max, p_max, eff, dt, alg.headroom_efficiency)
        caps = compute_caps(M, deliverable, queues, alg.backlog_cap)
        cap_hat_max = np.maximum(cap_hat_max, caps.hat)
        cap_check_max = np.maximum(cap_check_max, caps.check)
        decision = solve_p3(queues, price[t], alg.V, caps)
        g_lower[:, t], g_upper[:, t] = decision.x_check, decision.x_hat
        lower[t], upper[t] = decision.p_check, decision.p_hat
        qtraj["xhat"][t], qtraj["xcheck"][t] = decision.x_hat, decision.x_check

        requested = decision.p_check + alphas[t] * (decision.p_hat - decision.p_check)
        alpha = dispatch_ratio(requested, decision.p_hat, decision.p_check)
        pg = group_dispatch(alpha, decision.x_check, decision.x_hat)
        alpha_used[t], p_agg[t], p_group[t] = alpha, pg.sum(), pg
        for gi, roster in enumerate(rosters):
            alloc, short = disaggregate(roster, present, e, e_max, p_max, pg[gi], dt, eff,
                                        alg.headroom_efficiency, e_required)
            for v, p in alloc.items():
                p_ev[v, t] = p
            shortfall[t, gi] = short

        if feedback:
            served_hat = served_check = pg
            queues = feedback_update(snapshot, pg)
        else:
            served_hat, served_check = decision.x_hat, decision.x_check
            queues = snapshot.serve(served_hat, served_check)
        ledger.attribute(served_hat, served_check, dt)
        qtraj["served_hat"][t], qtraj["served_check"][t] = served_hat, served_check

        e = np.minimum(e + eff * p_ev[:, t] * dt, e_max)
        energy[:, t + 1] = e

        leaving = departures.get(t + 1, [])
        if leaving:
            w_hat, w_check = ledger.withdraw(leaving, group_of, G)
            queues = queues.withdraw(w_hat, w_check)
            qtraj["withdrawn_hat"][t], qtraj["withdrawn_check"][t] = w_hat, w_check

    values, total = flexibility_value(lower, upper, price, dt)
    bound_hat, bound_check = queues.delay_bounds()
    A = drift_penalty_constant(cap_hat_max, cap_check_max, a_hat.max(axis=1, initial=0.0),
                               a_check.max(axis=1, initial=0.0), eta, R,
                               queues.max_z_hat, queues.max_z_check, dt)
    region = FlexRegionSeries(lower, upper, g_lower, g_upper, ev_lower=None, ev_upper=None)
    return RunReport(
        method="online", feedback=feedback, prices=price, dt=dt, efficiency=eff, region=region,
        values=values, total=total, ev_ids=np.array([ev.id for ev in fleet], dtype=int),
        capacity=np.array([ev.capacity for ev in fleet]), energy=energy,
        group_labels=[g.label for g in assignment.groups], group_R=R, group_eta=eta, group_of=group_of,
        queues=qtraj, alpha=alpha_used, p_agg=p_agg, p_group=p_group, p_ev=p_ev, shortfall=shortfall,
        completion_delay=_completion(energy, fleet), asap_slots=(demand.lower > 0).sum(axis=1).astype(float),
        unmet=_unmet(energy, fleet, T), infeasible=demand.infeasible, delay_bound_hat=bound_hat, delay_bound_check=bound_check,
        drift_constant=A, V=alg.V, runtime=time.perf_counter() - start,
    )


def _benchmark_report(method: str, cfg: SimConfig, fleet: Sequence[EvTask], price: np.ndarray,
                      region: FlexRegionSeries, energy_end: np.ndarray | None,
                      assignment: GroupAssignment, start: float) -> RunReport:
    T, dt, eff = cfg.horizon_slots, cfg.slot_hours, cfg.fleet.efficiency
    values, total = flexibility_value(region.lower, region.upper, price, dt)
    energy = None
    if energy_end is not None:
        energy = np.column_stack([np.array([ev.e_a for ev in fleet]), energy_end]) if len(fleet) \
            else np.zeros((0, T + 1))
    demand = fleet_demand(fleet, eff, dt, T)
    pos = {ev.id: v for v, ev in enumerate(fleet)}
    group_of = np.zeros(len(fleet), dtype=int)
    for gi, g in enumerate(assignment.groups):
        group_of[[pos[i] for i in g.members]] = gi
    return RunReport(
        method=method, feedback=None, prices=price, dt=dt, efficiency=eff, region=region,
        values=values, total=total, ev_ids=np.array([ev.id for ev in fleet], dtype=int),
        capacity=np.array([ev.capacity for ev in fleet]), energy=energy,
        group_labels=[g.label for g in assignment.groups], group_R=assignment.R, group_of=group_of,
        completion_delay=_completion(energy, fleet) if energy is not None else None,
        unmet=_unmet(energy, fleet, T) if energy is not None else None,
        infeasible=demand.infeasible, runtime=time.perf_counter() - start,
    )


def run_offline(cfg: SimConfig, fleet: Sequence[EvTask], prices: PriceSeries | np.ndarray,
                method: str = "auto", assignment: GroupAssignment | None = None) -> RunReport:
    """Full-knowledge LP benchmark. ``energy`` holds the upper-bound trajectory."""
    start = time.perf_counter()
    price = _check_horizon(cfg, prices)
    assignment = assignment or assign_groups(fleet, cfg)
    region, _, _ = solve_offline(fleet, price, cfg.slot_hours, cfg.fleet.efficiency, assignment, method)
    return _benchmark_report("offline", cfg, fleet, price, region, region.ev_energy_upper, assignment, start)


def run_greedy(cfg: SimConfig, fleet: Sequence[EvTask], prices: PriceSeries | np.ndarray,
               assignment: GroupAssignment | None = None) -> RunReport:
    """Charge-at-max baseline. ``energy`` holds the charging trajectory."""
    start = time.perf_counter()
    price = _check_horizon(cfg, prices)
    assignment = assignment or assign_groups(fleet, cfg)
    region = greedy_baseline(fleet, cfg.slot_hours, cfg.fleet.efficiency, cfg.horizon_slots, assignment)
    return _benchmark_report("greedy", cfg, fleet, price, region, region.ev_energy_upper, assignment, start)


def request_delays(arrivals: np.ndarray, served: np.ndarray, withdrawn: np.ndarray,
                   backlog: np.ndarray, dt: float) -> np.ndarray:
    """Worst first-in-first-out delay (slots) of any demand released into a group queue.

    ``arrivals`` and ``served`` are (T, G) powers, ``withdrawn`` and
    ``backlog`` (slot-start, after admission) are (T, G) energies. Service in
    a slot never exceeds the backlog present. Demand released in slot ``t``
    is done in the first slot ``s >= t`` by whose end cumulative departures
    cover cumulative arrivals up to ``t``; the delay is ``s - t + 1``. Demand
    never covered counts up to the horizon end.
    """
    T, G = arrivals.shape
    arr = np.cumsum(arrivals * dt, axis=0)
    departed = np.cumsum(np.minimum(served * dt, backlog) + withdrawn, axis=0)
    worst = np.zeros(G)
    for g in range(G):
        for t in np.flatnonzero(arrivals[:, g] * dt > 1e-9):
            s = int(np.searchsorted(departed[:, g], arr[t, g] - 1e-7, side="left"))
            worst[g] = max(worst[g], max(s, t) - t + 1)
    return worst


def validate_run(report: RunReport, fleet: Sequence[EvTask], cfg: SimConfig,
                 offline_total: float | None = None) -> CheckSummary:
    """Post-run checks; failures are reported, never raised."""
    res: dict[str, CheckResult] = {}
    T = len(report.prices)
    soc_req, soc_max = cfg.fleet.soc_required, cfg.fleet.soc_max

    bad = report.region.violations()
    gap = float(np.max(report.region.lower - report.region.upper, initial=0.0))
    res["region_valid"] = CheckResult(bad.size == 0, max(gap, 0.0),
                                      f"{bad.size} slots with lower > upper", bad.tolist())

    if report.queues is not None:
        mins = min(float(report.queues[k].min(initial=0.0)) for k in ("Qhat", "Qcheck", "Zhat", "Zcheck"))
        res["queue_nonnegative"] = CheckResult(mins >= 0.0, max(-mins, 0.0), f"min backlog {mins:.3g}")
    else:
        res["queue_nonnegative"] = CheckResult(None, detail="no queues in this method")

    if report.energy is not None and report.method != "offline":
        infeasible = report.infeasible if report.infeasible is not None else np.zeros(len(fleet), bool)
        fails, worst = [], 0.0
        for v, ev in enumerate(fleet):
            if infeasible[v]:
                continue
            final = report.energy[v, min(ev.t_d, T)]
            short = ev.e_d - final
            worst = max(worst, short)
            if short > ENERGY_TOL:
                fails.append(int(ev.id))
        excluded = [int(fleet[v].id) for v in np.flatnonzero(infeasible)]
        res["soc_requirement"] = CheckResult(
            not fails, max(worst, 0.0),
            f"{len(fails)} feasible EVs below SOC {soc_req}; {len(excluded)} infeasible EVs excluded: {excluded}",
            fails)
        over = [int(ev.id) for v, ev in enumerate(fleet) if np.any(report.energy[v] > ev.e_max + ENERGY_TOL)]
        top = float(np.max(report.energy - np.array([ev.e_max for ev in fleet])[:, None], initial=0.0)) \
            if len(fleet) else 0.0
        res["max_soc"] = CheckResult(not over, max(top, 0.0), f"{len(over)} EVs above SOC {soc_max}", over)
    else:
        res["soc_requirement"] = CheckResult(None, detail="no physical trajectory for this method")
        res["max_soc"] = CheckResult(None, detail="no physical trajectory for this method")

    if report.p_ev is not None and report.energy is not None:
        err = 0.0
        for v, ev in enumerate(fleet):
            delivered = report.efficiency * report.dt * report.p_ev[v].sum()
            err = max(err, abs(report.energy[v, -1] - ev.e_a - delivered))
        res["energy_bookkeeping"] = CheckResult(err <= 1e-9 * max(1.0, report.capacity.max(initial=1.0)),
                                                err, f"max bookkeeping error {err:.3g} kWh")
    else:
        res["energy_bookkeeping"] = CheckResult(None, detail="no dispatch in this method")

    if report.shortfall is not None:
        short = float(report.shortfall.sum()) * report.dt
        slots = np.flatnonzero(report.shortfall.sum(axis=1) > 1e-9)
        res["dispatch_delivered"] = CheckResult(
            slots.size == 0, short, f"{short:.6g} kWh of dispatched power could not be placed on EVs",
            slots.tolist())
    else:
        res["dispatch_delivered"] = CheckResult(None, detail="no dispatch in this method")

    if report.delay_bound_check is not None and report.completion_delay is not None:
        stay_fails, bound_fails, stay_worst, bound_worst = [], [], -np.inf, -np.inf
        for v, ev in enumerate(fleet):
            if report.infeasible[v]:
                continue
            d = report.completion_delay[v]
            if np.isnan(d):
                stay_fails.append(int(ev.id))
                bound_fails.append(int(ev.id))
                continue
            stay_worst = max(stay_worst, d - ev.stay)
            if d > ev.stay:
                stay_fails.append(int(ev.id))
            excess = d - report.asap_slots[v] - report.delay_bound_check[report.group_of[v]]
            bound_worst = max(bound_worst, excess)
            if excess > 1e-9:
                bound_fails.append(int(ev.id))
        res["delay_within_stay"] = CheckResult(
            not stay_fails, float(stay_worst) if np.isfinite(stay_worst) else 0.0,
            f"{len(stay_fails)} feasible EVs finish after their declared stay", stay_fails)
        res["delay_bound"] = CheckResult(
            not bound_fails, float(bound_worst) if np.isfinite(bound_worst) else 0.0,
            f"{len(bound_fails)} feasible EVs finish more than the group delay bound after "
            "their as-soon-as-possible completion", bound_fails)
        q = report.queues
        req = request_delays(q["acheck"], q["served_check"], q["withdrawn_check"], q["Qcheck"], report.dt)
        limit = np.ceil(report.delay_bound_check - 1e-9)
        over = np.flatnonzero(req > limit)
        res["request_delay_bound"] = CheckResult(
            over.size == 0, float(np.max(req - limit, initial=0.0)),
            "worst FIFO delay of lower-queue demand vs the whole-slot group bound", over.tolist())
    else:
        for name in ("delay_within_stay", "delay_bound", "request_delay_bound"):
            res[name] = CheckResult(None, detail="no queues in this method")

    if report.method == "online" and report.feedback is False and offline_total is not None:
        bound = report.drift_constant / report.V if report.V else np.inf
        gap = (offline_total - report.total) / T
        res["optimality_gap"] = CheckResult(
            gap <= bound + 1e-12, gap - bound,
            f"time-average gap {gap:.6g} USD/slot vs A/V = {bound:.6g}")
    else:
        res["optimality_gap"] = CheckResult(None, detail="needs an online run without feedback and an offline total")

    return CheckSummary(res)
