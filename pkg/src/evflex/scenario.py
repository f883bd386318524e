"""EV fleets, price series and delay-group assignment.

Units throughout the package: power kW, energy kWh, time h, price USD/kWh.
Slot ``t`` covers the interval ``[t*dt, (t+1)*dt)``; an EV with arrival slot
``t_a`` and departure slot ``t_d`` may charge in slots ``t_a .. t_d-1``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import SimConfig

STREAMS = {"fleet": 0, "dispatch": 1, "prices": 2}


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named consumer of the run seed."""
    return np.random.default_rng([int(seed), STREAMS[name]])


@dataclass(frozen=True)
class EvTask:
    id: int
    t_a: int
    t_d: int
    e_a: float
    e_d: float
    e_min: float
    e_max: float
    p_max: float
    capacity: float

    def __post_init__(self):
        if not self.t_a < self.t_d:
            raise ValueError(f"EV {self.id}: arrival slot must precede departure slot")
        tol = 1e-9
        if not (self.e_min - tol <= self.e_a <= self.e_d + tol
                and self.e_d <= self.e_max + tol and self.e_max <= self.capacity + tol):
            raise ValueError(f"EV {self.id}: need e_min <= e_a <= e_d <= e_max <= capacity")
        if self.p_max <= 0:
            raise ValueError(f"EV {self.id}: p_max must be positive")

    @property
    def stay(self) -> int:
        """Allowed charging delay R_v in slots."""
        return self.t_d - self.t_a


@dataclass(frozen=True)
class PriceSeries:
    values: np.ndarray  # USD/kWh per slot
    slot_hours: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("prices must be one-dimensional")
        if np.any(values < 0):
            raise ValueError("prices must be nonnegative")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


def _parse_header(line: str) -> dict[str, str]:
    fields = {}
    for part in line.strip().split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"malformed price header {line.strip()!r}")
        fields[key.strip()] = value.strip()
    return fields


def load_prices(path: str | Path, horizon: int, slot_hours: float) -> PriceSeries:
    """Read a price CSV and return ``horizon`` slot prices in USD/kWh.

    The first line is ``unit=<USD/MWh|USD/kWh>,resolution=<minutes>``; each
    following line is ``index,price``. Coarser sources are forward-filled onto
    the slot grid, finer ones are block-averaged.
    """
    with open(path, newline="") as fh:
        header = _parse_header(fh.readline())
        rows = [r for r in csv.reader(fh) if r and r[0].strip()]
    unit = header.get("unit")
    if unit not in ("USD/MWh", "USD/kWh"):
        raise ValueError(f"price unit must be USD/MWh or USD/kWh, got {unit!r}")
    resolution = float(header.get("resolution", "nan"))
    if not resolution > 0:
        raise ValueError("price header needs a positive resolution in minutes")

    raw = np.array([float(r[1]) for r in rows], dtype=float)
    if np.any(raw < 0):
        bad = int(np.argmax(raw < 0))
        raise ValueError(f"negative price {raw[bad]} at row {bad}")
    if unit == "USD/MWh":
        raw = raw / 1000.0

    slot_minutes = slot_hours * 60.0
    ratio = resolution / slot_minutes
    if abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1:
        values = np.repeat(raw, int(round(ratio)))
    elif abs(1 / ratio - round(1 / ratio)) < 1e-9:
        block = int(round(1 / ratio))
        usable = len(raw) // block * block
        values = raw[:usable].reshape(-1, block).mean(axis=1)
    else:
        raise ValueError(f"cannot map {resolution}-minute prices onto {slot_minutes}-minute slots")
    if len(values) < horizon:
        raise ValueError(f"price series too short: expected {horizon} slots, found {len(values)}")
    return PriceSeries(values[:horizon].copy(), slot_hours)


def write_prices(path: str | Path, prices: PriceSeries, unit: str = "USD/kWh") -> None:
    scale = {"USD/kWh": 1.0, "USD/MWh": 1000.0}[unit]
    with open(path, "w", newline="") as fh:
        fh.write(f"unit={unit},resolution={prices.slot_hours * 60.0!r}\n")
        for i, value in enumerate(prices.values):
            fh.write(f"{i},{float(value) * scale!r}\n")


def synthetic_prices(cfg: SimConfig, seed: int | None = None) -> PriceSeries:
    """Hourly profile forward-filled to slots with multiplicative noise."""
    rng = substream(cfg.seed if seed is None else seed, "prices")
    hours = (np.arange(cfg.horizon_slots) * cfg.slot_hours) % 24.0
    base = np.asarray(cfg.prices.hourly_usd_mwh, dtype=float)[hours.astype(int)]
    noise = rng.normal(0.0, cfg.prices.noise_std, cfg.horizon_slots)
    values = np.clip(base * (1.0 + noise), 0.0, None) / 1000.0
    return PriceSeries(values, cfg.slot_hours)


def prices_for(cfg: SimConfig) -> PriceSeries:
    if cfg.prices.path:
        return load_prices(cfg.prices.path, cfg.horizon_slots, cfg.slot_hours)
    return synthetic_prices(cfg)


def _round_slot(hours: float, slot_hours: float) -> int:
    return int(math.floor(hours / slot_hours + 0.5))


def generate_fleet(cfg: SimConfig, seed: int | None = None) -> list[EvTask]:
    """Sample a reproducible fleet from the configured distributions."""
    fc = cfg.fleet
    rng = substream(cfg.seed if seed is None else seed, "fleet")
    T, dt = cfg.horizon_slots, cfg.slot_hours
    caps = np.asarray(fc.capacities_kwh, dtype=float)
    powers = np.asarray(fc.charge_powers_kw, dtype=float)

    fleet = []
    for v in range(fc.count):
        for _ in range(fc.max_resample):
            t_a = _round_slot(rng.normal(fc.arrival_mean_h, fc.arrival_std_h), dt)
            t_d = _round_slot(rng.normal(fc.departure_mean_h, fc.departure_std_h), dt)
            if 0 <= t_a < t_d <= T:
                break
        else:
            raise RuntimeError(f"could not place EV {v} inside the horizon after "
                               f"{fc.max_resample} draws")
        capacity = float(caps[rng.integers(len(caps))])
        p_max = float(powers[rng.integers(len(powers))])
        for _ in range(fc.max_resample):
            if fc.soc_init_dist == "uniform":
                soc = rng.uniform(fc.soc_init_low, fc.soc_init_high)
            else:
                soc = rng.normal(fc.soc_init_mean, math.sqrt(fc.soc_init_var))
            if 0.0 <= soc <= fc.soc_required:
                break
        else:
            raise RuntimeError(f"could not draw an initial SOC for EV {v}")
        e_a = soc * capacity
        fleet.append(EvTask(
            id=v, t_a=t_a, t_d=t_d, e_a=e_a, e_d=fc.soc_required * capacity,
            e_min=e_a, e_max=fc.soc_max * capacity, p_max=p_max, capacity=capacity,
        ))
    return fleet


FLEET_COLUMNS = ("id", "t_a", "t_d", "e_a", "e_d", "e_min", "e_max", "p_max", "capacity")


def write_fleet(path: str | Path, fleet: Sequence[EvTask]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FLEET_COLUMNS)
        for ev in fleet:
            w.writerow([repr(int(getattr(ev, c)) if c in ("id", "t_a", "t_d") else float(getattr(ev, c)))
                        for c in FLEET_COLUMNS])


def read_fleet(path: str | Path) -> list[EvTask]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            out.append(EvTask(
                id=int(row["id"]), t_a=int(row["t_a"]), t_d=int(row["t_d"]),
                **{k: float(row[k]) for k in FLEET_COLUMNS[3:]},
            ))
    return out


@dataclass(frozen=True)
class Group:
    R: float  # allowed delay of the group, slots
    members: tuple[int, ...]  # EV ids, earliest arrival first
    label: str = ""


@dataclass(frozen=True)
class GroupAssignment:
    groups: tuple[Group, ...]

    @property
    def G(self) -> int:
        return len(self.groups)

    @property
    def R(self) -> np.ndarray:
        return np.array([g.R for g in self.groups], dtype=float)

    def group_of(self) -> dict[int, int]:
        return {ev: gi for gi, g in enumerate(self.groups) for ev in g.members}


def _roster(members, fleet_by_id) -> tuple[int, ...]:
    return tuple(sorted(members, key=lambda i: (fleet_by_id[i].t_a, i)))


def group_by_delay(fleet: Sequence[EvTask], slot_hours: float, rule: str = "hour") -> GroupAssignment:
    """One group per distinct allowed delay, shortest delay first.

    With ``rule="hour"`` (and slots that tile an hour) stays are bucketed to the
    nearest whole hour, minimum one hour; ``rule="slot"`` keys on exact slots.
    """
    per_hour = 1.0 / slot_hours
    hourly = rule == "hour" and abs(per_hour - round(per_hour)) < 1e-9
    by_id = {ev.id: ev for ev in fleet}
    buckets: dict[float, list[int]] = {}
    for ev in fleet:
        if hourly:
            hours = max(1, math.floor(ev.stay * slot_hours + 0.5))
            key = hours * round(per_hour)
        else:
            key = ev.stay
        buckets.setdefault(float(key), []).append(ev.id)
    groups = []
    for key in sorted(buckets):
        label = f"{key * slot_hours:g}h" if hourly else f"{key:g}slots"
        groups.append(Group(R=key, members=_roster(buckets[key], by_id), label=label))
    return GroupAssignment(tuple(groups))


def split_groups(assignment: GroupAssignment, positions: Sequence[int],
                 fleet: Sequence[EvTask], slot_hours: float) -> GroupAssignment:
    """Split each listed group in two, relabelling the halves R-1h and R+1h.

    Members alternate between the halves in arrival order, so both halves see
    the same spread of arrivals.
    """
    by_id = {ev.id: ev for ev in fleet}
    shift = 1.0 / slot_hours
    chosen = set(positions)
    out = []
    for gi, g in enumerate(assignment.groups):
        if gi not in chosen:
            out.append(g)
            continue
        if len(g.members) < 2:
            raise ValueError(f"group {gi} has fewer than two EVs and cannot be split")
        lo, hi = g.members[0::2], g.members[1::2]
        out.append(Group(R=max(g.R - shift, 1.0), members=_roster(lo, by_id), label=g.label + "-"))
        out.append(Group(R=g.R + shift, members=_roster(hi, by_id), label=g.label + "+"))
    return GroupAssignment(tuple(out))


def add_groups(assignment: GroupAssignment, extra: int, fleet: Sequence[EvTask],
               slot_hours: float, first: int = 2) -> GroupAssignment:
    """Reach ``G + extra`` groups by splitting groups ``first, first+1, ...``.

    Each split adds one group. Groups too small to split are skipped.
    """
    if extra == 0:
        return assignment
    positions = [gi for gi in range(first, assignment.G) if len(assignment.groups[gi].members) >= 2]
    if len(positions) < extra:
        raise ValueError(f"only {len(positions)} splittable groups, need {extra}")
    return split_groups(assignment, positions[:extra], fleet, slot_hours)


def assign_groups(fleet: Sequence[EvTask], cfg: SimConfig) -> GroupAssignment:
    base = group_by_delay(fleet, cfg.slot_hours, cfg.algorithm.group_rule)
    return add_groups(base, cfg.algorithm.extra_groups, fleet, cfg.slot_hours)
