"""Charge-as-soon-as-possible demand profiles and per-group arrival rates.

Profiles are charger-side power (kW): an entry ``a`` in a slot delivers
``a * efficiency * dt`` kWh to the battery.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import EvTask, GroupAssignment

_INTEGRAL_TOL = 1e-9


def min_charge_slots(e_cha: float, p_max: float, efficiency: float, dt: float) -> tuple[int, float]:
    """Whole slots at ``p_max`` plus the residual power needed in the next slot."""
    if e_cha < 0:
        raise ValueError("charging demand must be nonnegative")
    if p_max <= 0:
        raise ValueError("p_max must be positive")
    draw = e_cha / (efficiency * dt)  # charger-side kW*slots
    t_min = draw / p_max
    full = math.floor(t_min + _INTEGRAL_TOL)
    residual = draw - full * p_max
    if residual <= _INTEGRAL_TOL * p_max:
        residual = 0.0
    return full, residual


@dataclass(frozen=True)
class DemandProfile:
    values: np.ndarray  # kW per slot, charger side
    e_cha: float  # battery-side energy requested, kWh
    unmet: float  # battery-side energy the stay cannot deliver, kWh

    @property
    def infeasible(self) -> bool:
        return self.unmet > 1e-9


def _asap_profile(ev: EvTask, e_cha: float, efficiency: float, dt: float, horizon: int) -> DemandProfile:
    full, residual = min_charge_slots(e_cha, ev.p_max, efficiency, dt)
    values = np.zeros(horizon)
    end = min(ev.t_d, horizon)
    stop = min(ev.t_a + full, end)
    values[ev.t_a:stop] = ev.p_max
    if residual > 0 and ev.t_a + full < end:
        values[ev.t_a + full] = residual
    delivered = float(values.sum()) * efficiency * dt
    unmet = max(e_cha - delivered, 0.0)
    return DemandProfile(values, e_cha, unmet if unmet > 1e-9 else 0.0)


def lower_demand_profile(ev: EvTask, efficiency: float, dt: float, horizon: int) -> DemandProfile:
    """ASAP schedule for reaching the required energy ``e_d``."""
    return _asap_profile(ev, ev.e_d - ev.e_a, efficiency, dt, horizon)


def upper_demand_profile(ev: EvTask, efficiency: float, dt: float, horizon: int) -> DemandProfile:
    """ASAP schedule for reaching the maximum energy ``e_max``."""
    return _asap_profile(ev, ev.e_max - ev.e_a, efficiency, dt, horizon)


@dataclass(frozen=True)
class FleetDemand:
    """Stacked per-EV profiles, rows in fleet order."""

    upper: np.ndarray  # (V, T)
    lower: np.ndarray  # (V, T)
    upper_unmet: np.ndarray  # (V,)
    lower_unmet: np.ndarray  # (V,)

    @property
    def infeasible(self) -> np.ndarray:
        return self.lower_unmet > 1e-9


def fleet_demand(fleet: Sequence[EvTask], efficiency: float, dt: float, horizon: int) -> FleetDemand:
    up = [upper_demand_profile(ev, efficiency, dt, horizon) for ev in fleet]
    lo = [lower_demand_profile(ev, efficiency, dt, horizon) for ev in fleet]
    shape = (len(fleet), horizon)
    return FleetDemand(
        upper=np.array([p.values for p in up]).reshape(shape),
        lower=np.array([p.values for p in lo]).reshape(shape),
        upper_unmet=np.array([p.unmet for p in up], dtype=float),
        lower_unmet=np.array([p.unmet for p in lo], dtype=float),
    )


def group_matrix(assignment: GroupAssignment, fleet: Sequence[EvTask]) -> np.ndarray:
    """(G, V) 0/1 membership matrix, columns in fleet order."""
    pos = {ev.id: i for i, ev in enumerate(fleet)}
    M = np.zeros((assignment.G, len(fleet)))
    for gi, g in enumerate(assignment.groups):
        for ev_id in g.members:
            M[gi, pos[ev_id]] = 1.0
    return M


def group_arrivals(assignment: GroupAssignment, fleet: Sequence[EvTask],
                   demand: FleetDemand, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper and lower arrival rates (kW) of every group in slot ``t``."""
    M = group_matrix(assignment, fleet)
    return M @ demand.upper[:, t], M @ demand.lower[:, t]
