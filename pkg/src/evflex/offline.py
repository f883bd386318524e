"""Offline flexibility benchmark (full-horizon LP) and the greedy baseline."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .demand import group_matrix
from .lp import LpProblem, LpSolution, solve_lp
from .scenario import EvTask, GroupAssignment


@dataclass
class FlexRegionSeries:
    lower: np.ndarray  # (T,) kW
    upper: np.ndarray  # (T,) kW
    group_lower: np.ndarray | None = None  # (G, T)
    group_upper: np.ndarray | None = None
    ev_lower: np.ndarray | None = None  # (V, T) per-EV power trajectories
    ev_upper: np.ndarray | None = None
    ev_energy_lower: np.ndarray | None = None  # (V, T) energy at end of each slot
    ev_energy_upper: np.ndarray | None = None

    def violations(self, tol: float = 1e-9) -> np.ndarray:
        """Slots where the lower bound exceeds the upper bound."""
        return np.flatnonzero(self.lower > self.upper + tol)


def _window_mask(fleet: Sequence[EvTask], horizon: int) -> np.ndarray:
    mask = np.zeros((len(fleet), horizon), dtype=bool)
    for v, ev in enumerate(fleet):
        mask[v, ev.t_a:min(ev.t_d, horizon)] = True
    return mask


def relaxed_requirements(fleet: Sequence[EvTask], efficiency: float, dt: float,
                         horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Required energy per EV, capped at what the stay can deliver; plus the flags."""
    e_req = np.empty(len(fleet))
    relaxed = np.zeros(len(fleet), dtype=bool)
    for v, ev in enumerate(fleet):
        slots = min(ev.t_d, horizon) - ev.t_a
        reachable = min(ev.e_a + ev.p_max * efficiency * dt * slots, ev.e_max)
        if ev.e_d > reachable + 1e-9:
            e_req[v], relaxed[v] = reachable, True
        else:
            e_req[v] = ev.e_d
    return e_req, relaxed


def build_offline_lp(fleet: Sequence[EvTask], prices: np.ndarray, dt: float,
                     efficiency: float) -> LpProblem:
    """Full-horizon LP over upper/lower per-EV power and energy trajectories.

    Variable blocks, each ``V*T`` long and indexed ``v*T + t``: upper power,
    lower power, upper energy, lower energy. Energy variables hold the level at
    the end of slot ``t``. EVs whose stay cannot reach ``e_d`` get the largest
    reachable level instead (listed in ``problem.index["relaxed"]``).
    """
    prices = np.asarray(prices, dtype=float)
    T, V = len(prices), len(fleet)
    VT = V * T
    n = 4 * VT
    ph, pc, eh, ec = 0, VT, 2 * VT, 3 * VT

    c = np.zeros(n)
    if V:
        c[ph:pc] = np.tile(-prices * dt, V)
        c[pc:eh] = np.tile(prices * dt, V)

    mask = _window_mask(fleet, T).ravel()
    p_max = np.repeat([ev.p_max for ev in fleet], T)
    lower = np.zeros(n)
    upper = np.zeros(n)
    upper[ph:pc] = np.where(mask, p_max, 0.0)
    upper[pc:eh] = upper[ph:pc]
    e_req, relaxed = relaxed_requirements(fleet, efficiency, dt, T)
    e_min = np.repeat([ev.e_min for ev in fleet], T)
    e_max = np.repeat([ev.e_max for ev in fleet], T)
    for blk in (eh, ec):
        lower[blk:blk + VT] = e_min
        upper[blk:blk + VT] = e_max
        for v, ev in enumerate(fleet):
            k = blk + v * T + min(ev.t_d, T) - 1
            lower[k] = max(lower[k], e_req[v])

    # dynamics: e[v,t] - e[v,t-1] - eff*dt*p[v,t] = (e_a if t == 0 else 0)
    rows = np.arange(2 * VT)
    local = np.arange(VT)
    t_idx = local % T
    prev = t_idx > 0
    r_list, c_list, d_list = [], [], []
    for k, (e_blk, p_blk) in enumerate(((eh, ph), (ec, pc))):
        base = rows[k * VT:(k + 1) * VT]
        r_list += [base, base, base[prev]]
        c_list += [e_blk + local, p_blk + local, e_blk + local[prev] - 1]
        d_list += [np.ones(VT), np.full(VT, -efficiency * dt), -np.ones(int(prev.sum()))]
    A_eq = sp.csr_matrix((np.concatenate(d_list), (np.concatenate(r_list), np.concatenate(c_list))),
                         shape=(2 * VT, n))
    b_eq = np.zeros(2 * VT)
    for v, ev in enumerate(fleet):
        b_eq[v * T] = ev.e_a
        b_eq[VT + v * T] = ev.e_a

    # coupling: sum_v lower_p[v,t] - sum_v upper_p[v,t] <= 0
    r = np.concatenate([t_idx, t_idx])
    cols = np.concatenate([pc + local, ph + local])
    data = np.concatenate([np.ones(VT), -np.ones(VT)])
    A_ub = sp.csr_matrix((data, (r, cols)), shape=(T, n))
    b_ub = np.zeros(T)

    index = {"V": V, "T": T, "p_hat": ph, "p_check": pc, "e_hat": eh, "e_check": ec,
             "relaxed": [fleet[v].id for v in np.flatnonzero(relaxed)], "e_req": e_req}
    names = None
    if n <= 20000:
        names = [f"{blk}_v{ev.id}_t{t}" for blk in ("ph", "pc", "eh", "ec") for ev in fleet for t in range(T)]
    return LpProblem(c, A_ub, b_ub, A_eq, b_eq, lower, upper, names=names, index=index)


def offline_regions(solution: LpSolution, problem: LpProblem,
                    assignment: GroupAssignment | None = None,
                    fleet: Sequence[EvTask] | None = None) -> FlexRegionSeries:
    """Aggregate, per-group and per-EV trajectories from an optimal LP solution."""
    if solution.status != "optimal":
        raise RuntimeError(f"offline LP not solved to optimality: {solution.status}")
    V, T = problem.index["V"], problem.index["T"]
    x = solution.x

    def block(name):
        s = problem.index[name]
        return x[s:s + V * T].reshape(V, T)

    up, lo = block("p_hat"), block("p_check")
    region = FlexRegionSeries(
        lower=lo.sum(axis=0), upper=up.sum(axis=0),
        ev_lower=lo.copy(), ev_upper=up.copy(),
        ev_energy_lower=block("e_check").copy(), ev_energy_upper=block("e_hat").copy(),
    )
    if assignment is not None and fleet is not None:
        M = group_matrix(assignment, fleet)
        region.group_lower = M @ lo
        region.group_upper = M @ up
    return region


def _coo(entries, shape) -> sp.csr_matrix:
    rows, cols, vals = (np.concatenate(x) for x in zip(*entries))
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def robust_split(fleet: Sequence[EvTask], region: FlexRegionSeries, dt: float, efficiency: float,
                 method: str = "auto", tol: float = 1e-9) -> tuple[LpProblem, LpSolution]:
    """Per-EV trajectories with the region's aggregates whose slot-wise mixes are all feasible.

    Feasibility LP over the offline variables plus a pessimistic power path
    ``m`` (below the upper schedule, and below the lower one in slots of
    positive width) that must still reach the required energy, and an
    optimistic path ``M`` (above the same) that must stay under ``e_max``.
    Every mix ``beta_t * lower + (1 - beta_t) * upper`` then charges between
    the two paths. Often infeasible: the value-optimal aggregates can force
    one EV's lower power to be covered by another EV's upper power.
    """
    lo_agg, up_agg = np.asarray(region.lower, float), np.asarray(region.upper, float)
    base = build_offline_lp(fleet, np.zeros(len(lo_agg)), dt, efficiency)
    V, T = base.index["V"], base.index["T"]
    VT, n0 = V * T, base.n
    ph, pc = base.index["p_hat"], base.index["p_check"]
    pm, pM, em, eM = n0, n0 + VT, n0 + 2 * VT, n0 + 3 * VT
    n = n0 + 4 * VT
    local = np.arange(VT)
    t_idx = local % T
    w = np.flatnonzero((up_agg - lo_agg > tol)[t_idx])
    kw = np.arange(w.size)
    one, neg = np.ones(VT), -np.ones(VT)

    A_ub = _coo([
        (local, pm + local, one), (local, ph + local, neg),                          # m <= upper
        (VT + local, ph + local, one), (VT + local, pM + local, neg),                # upper <= M
        (2 * VT + kw, pm + w, np.ones(w.size)), (2 * VT + kw, pc + w, -np.ones(w.size)),
        (2 * VT + w.size + kw, pc + w, np.ones(w.size)), (2 * VT + w.size + kw, pM + w, -np.ones(w.size)),
    ], (2 * VT + 2 * w.size, n))

    prev = t_idx > 0
    entries = []
    for k, (e_blk, p_blk) in enumerate(((em, pm), (eM, pM))):
        r = k * VT + local
        entries += [(r, e_blk + local, one), (r, p_blk + local, np.full(VT, -efficiency * dt)),
                    (r[prev], e_blk + local[prev] - 1, -np.ones(int(prev.sum())))]
    entries += [(2 * VT + t_idx, ph + local, one), (2 * VT + T + t_idx, pc + local, one)]
    A_extra = _coo(entries, (2 * VT + 2 * T, n))
    A_base = sp.hstack([base.A_eq, sp.csr_matrix((base.A_eq.shape[0], 4 * VT))], format="csr")
    b_dyn = np.zeros(2 * VT)
    for v, ev in enumerate(fleet):
        b_dyn[v * T] = b_dyn[VT + v * T] = ev.e_a

    window = np.where(_window_mask(fleet, T).ravel(), np.repeat([ev.p_max for ev in fleet], T), 0.0)
    e_min = np.repeat([ev.e_min for ev in fleet], T)
    e_max = np.repeat([ev.e_max for ev in fleet], T)
    lower = np.concatenate([base.lower, np.zeros(2 * VT), e_min, e_min])
    upper = np.concatenate([base.upper, window, window, e_max, e_max])
    for v, ev in enumerate(fleet):
        k = em + v * T + min(ev.t_d, T) - 1
        lower[k] = max(lower[k], base.index["e_req"][v])

    problem = LpProblem(
        c=np.zeros(n), A_ub=A_ub, b_ub=np.zeros(A_ub.shape[0]),
        A_eq=sp.vstack([A_base, A_extra], format="csr"),
        b_eq=np.concatenate([base.b_eq, b_dyn, up_agg, lo_agg]),
        lower=lower, upper=upper, index=base.index,
    )
    return problem, solve_lp(problem, method=method)


def disaggregate_trajectory(fleet: Sequence[EvTask], trajectory: np.ndarray, dt: float, efficiency: float,
                            method: str = "auto") -> tuple[np.ndarray, np.ndarray] | None:
    """Some feasible per-EV schedule summing to ``trajectory``, or None if none exists.

    Uses the single-trajectory constraints (power limits, window, dynamics,
    energy range, relaxed requirement). Returns ``(power, energy)`` as (V, T).
    """
    trajectory = np.asarray(trajectory, dtype=float)
    base = build_offline_lp(fleet, np.zeros(len(trajectory)), dt, efficiency)
    V, T = base.index["V"], base.index["T"]
    VT = V * T
    ph, eh = base.index["p_hat"], base.index["e_hat"]
    keep = np.r_[ph:ph + VT, eh:eh + VT]
    local = np.arange(VT)
    A_eq = base.A_eq[:VT][:, keep]
    agg = sp.csr_matrix((np.ones(VT), (local % T, local)), shape=(T, 2 * VT))
    problem = LpProblem(
        c=np.zeros(2 * VT), A_ub=sp.csr_matrix((0, 2 * VT)), b_ub=np.zeros(0),
        A_eq=sp.vstack([A_eq, agg], format="csr"), b_eq=np.concatenate([base.b_eq[:VT], trajectory]),
        lower=base.lower[keep], upper=base.upper[keep],
    )
    sol = solve_lp(problem, method=method)
    if sol.status != "optimal":
        return None
    return sol.x[:VT].reshape(V, T), sol.x[VT:].reshape(V, T)


def solve_offline(fleet: Sequence[EvTask], prices: np.ndarray, dt: float, efficiency: float,
                  assignment: GroupAssignment | None = None, method: str = "auto",
                  robust: bool = False):
    """Solve the offline LP; returns ``(region, problem, solution)``.

    With ``robust`` the per-EV trajectories are re-split (same aggregates) by
    :func:`robust_split` so that slot-wise mixing yields feasible schedules;
    if that split is infeasible the original optimal split is kept.
    """
    problem = build_offline_lp(fleet, prices, dt, efficiency)
    solution = solve_lp(problem, method=method)
    region = offline_regions(solution, problem, assignment, fleet)
    if robust and len(fleet):
        split_problem, split = robust_split(fleet, region, dt, efficiency, method)
        if split.status == "optimal":
            resplit = offline_regions(split, split_problem, assignment, fleet)
            # keep the aggregate bounds of the value-optimal solution bit for bit
            resplit.lower, resplit.upper = region.lower, region.upper
            if assignment is not None:
                resplit.group_lower, resplit.group_upper = region.group_lower, region.group_upper
            region = resplit
    return region, problem, solution


def greedy_baseline(fleet: Sequence[EvTask], dt: float, efficiency: float, horizon: int,
                    assignment: GroupAssignment | None = None) -> FlexRegionSeries:
    """Charge at full power from arrival; flexible only between required and max SOC.

    Each EV follows its charge-at-max trajectory. While the slot-start energy is
    below ``e_d`` the slot is inflexible (lower = upper = charging power); after
    that the lower bound drops to zero until ``e_max`` is reached.
    """
    V = len(fleet)
    up = np.zeros((V, horizon))
    lo = np.zeros((V, horizon))
    energy = np.zeros((V, horizon))
    for v, ev in enumerate(fleet):
        e = ev.e_a
        for t in range(horizon):
            if ev.t_a <= t < ev.t_d and e < ev.e_max - 1e-12:
                p = min(ev.p_max, (ev.e_max - e) / (efficiency * dt))
                up[v, t] = p
                if e < ev.e_d - 1e-12:
                    lo[v, t] = p
                e = min(e + efficiency * p * dt, ev.e_max)
            energy[v, t] = e
    region = FlexRegionSeries(lower=lo.sum(axis=0), upper=up.sum(axis=0), ev_lower=lo, ev_upper=up,
                              ev_energy_upper=energy)
    if assignment is not None:
        M = group_matrix(assignment, fleet)
        region.group_lower = M @ lo
        region.group_upper = M @ up
    return region


def trajectory_violation(fleet: Sequence[EvTask], power: np.ndarray, energy: np.ndarray,
                         dt: float, efficiency: float, e_req: np.ndarray | None = None) -> float:
    """Largest violation of the single-trajectory charging constraints.

    ``power`` and ``energy`` are (V, T); ``energy[v, t]`` is the level at the
    end of slot ``t``. Checks power limits, the parking window, energy
    dynamics from ``e_a``, the departure requirement and the energy range.
    """
    V, T = power.shape
    worst = 0.0
    if e_req is None:
        e_req = np.array([ev.e_d for ev in fleet])
    for v, ev in enumerate(fleet):
        p, e = power[v], energy[v]
        inside = np.zeros(T, dtype=bool)
        inside[ev.t_a:min(ev.t_d, T)] = True
        worst = max(worst, float(np.max(-p, initial=0.0)),
                    float(np.max(p[inside] - ev.p_max, initial=0.0)),
                    float(np.max(np.abs(p[~inside]), initial=0.0)))
        expected = ev.e_a + np.cumsum(efficiency * p * dt)
        worst = max(worst, float(np.max(np.abs(e - expected), initial=0.0)))
        worst = max(worst, float(np.max(ev.e_min - e, initial=0.0)),
                    float(np.max(e - ev.e_max, initial=0.0)))
        worst = max(worst, float(e_req[v] - e[min(ev.t_d, T) - 1]))
    return worst
