"""Operator dispatch: ratio, per-group split, first-in-first-served
disaggregation, feedback queue update and the convex-combination construction
of per-EV schedules for any in-region aggregate trajectory."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .offline import FlexRegionSeries, trajectory_violation
from .queues import GroupQueues
from .scenario import EvTask

_REGION_TOL = 1e-9


def dispatch_ratio(p_agg: float, sum_hat: float, sum_check: float) -> float:
    """Position of ``p_agg`` inside ``[sum_check, sum_hat]``, 0 for an empty region."""
    width = sum_hat - sum_check
    if p_agg < sum_check - _REGION_TOL or p_agg > sum_hat + _REGION_TOL:
        raise ValueError(f"dispatch {p_agg} outside advertised region [{sum_check}, {sum_hat}]")
    if width <= _REGION_TOL:
        return 0.0
    return float(min(max((p_agg - sum_check) / width, 0.0), 1.0))


def group_dispatch(alpha: float, x_check, x_hat) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"dispatch ratio {alpha} outside [0, 1]")
    return (1.0 - alpha) * np.asarray(x_check, dtype=float) + alpha * np.asarray(x_hat, dtype=float)


def disaggregate(roster: Sequence[int], present: np.ndarray, energy: np.ndarray,
                 e_max: np.ndarray, p_max: np.ndarray, p_group: float, dt: float,
                 efficiency: float, headroom_efficiency: bool = True,
                 e_required: np.ndarray | None = None) -> tuple[dict[int, float], float]:
    """Hand ``p_group`` to the roster in order, each EV up to its slot limit.

    ``roster`` holds fleet positions, earliest arrival first. With
    ``e_required`` the roster is walked twice: first only EVs still below
    their required energy, each up to its slot limit, then everyone with the
    rest. Returns the per-EV powers and the undeliverable remainder.
    """
    remaining = float(p_group)
    out = {v: 0.0 for v in roster}

    def limit(v):
        head = max(e_max[v] - energy[v], 0.0)
        cap = head / (efficiency * dt) if headroom_efficiency else head / dt
        return min(p_max[v], cap)

    passes = [lambda v: True]
    if e_required is not None:
        passes.insert(0, lambda v: energy[v] < e_required[v] - 1e-12)
    for eligible in passes:
        for v in roster:
            if remaining <= 0.0:
                break
            if not present[v] or not eligible(v):
                continue
            p = min(remaining, limit(v) - out[v])
            if p > 0.0:
                out[v] += p
                remaining -= p
    shortfall = remaining if remaining > 1e-12 else 0.0
    return out, shortfall


def feedback_update(snapshot: GroupQueues, p_group) -> GroupQueues:
    """Advance the slot-start snapshot with the dispatched power as both bounds."""
    p_group = np.asarray(p_group, dtype=float)
    return snapshot.serve(p_group, p_group)


@dataclass
class DispatchRecord:
    t: int
    alpha: float
    p_agg: float
    p_group: np.ndarray
    p_ev: dict[int, float]
    shortfall: np.ndarray  # per group


def construct_feasible(region: FlexRegionSeries, trajectory: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-EV powers and energies realizing an aggregate trajectory in an offline region.

    Each slot mixes the lower and upper per-EV solutions with weight
    ``beta = (upper - p) / (upper - lower)`` (zero when the region is a point).
    Returns ``(power, energy, beta)``.
    """
    if region.ev_lower is None or region.ev_upper is None:
        raise ValueError("region carries no per-EV trajectories")
    p = np.asarray(trajectory, dtype=float)
    lo, up = region.lower, region.upper
    if np.any(p < lo - 1e-7) or np.any(p > up + 1e-7):
        bad = np.flatnonzero((p < lo - 1e-7) | (p > up + 1e-7))
        raise ValueError(f"trajectory leaves the region at slots {bad.tolist()}")
    width = up - lo
    beta = np.where(width > _REGION_TOL, (up - p) / np.where(width > _REGION_TOL, width, 1.0), 0.0)
    beta = np.clip(beta, 0.0, 1.0)
    power = beta * region.ev_lower + (1.0 - beta) * region.ev_upper
    energy = beta * region.ev_energy_lower + (1.0 - beta) * region.ev_energy_upper
    return power, energy, beta


def verify_construction(fleet: Sequence[EvTask], region: FlexRegionSeries, trajectory: np.ndarray,
                        dt: float, efficiency: float, e_req: np.ndarray | None = None) -> dict:
    """Build the per-EV strategy for ``trajectory`` and report its worst violation.

    Energy is re-simulated from the mixed powers, since a slot-wise mix of two
    energy paths is not itself a path when ``beta`` varies over time.
    """
    power, mixed_energy, beta = construct_feasible(region, trajectory)
    energy = np.array([ev.e_a + np.cumsum(efficiency * power[v] * dt) for v, ev in enumerate(fleet)])
    energy = energy.reshape(power.shape)
    residual = trajectory_violation(fleet, power, energy, dt, efficiency, e_req)
    sum_err = float(np.max(np.abs(power.sum(axis=0) - trajectory), initial=0.0))
    return {"residual": max(residual, sum_err), "aggregate_error": sum_err,
            "power": power, "energy": energy, "mixed_energy": mixed_energy, "beta": beta}
