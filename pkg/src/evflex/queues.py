"""Charging-task queues and delay-aware virtual queues, one pair per group.

Backlogs are charger-side energy (kWh). Service and arrivals are powers (kW)
multiplied by the slot length ``dt``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

POSITIVE_TOL = 1e-9  # a backlog above this counts as nonempty
_NEG_TOL = 1e-9


def _nonneg(name: str, value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if np.any(arr < -_NEG_TOL):
        raise ValueError(f"{name} must be nonnegative, got {value}")
    return np.clip(arr, 0.0, None)


def update_task_queue(Q, x, a, dt: float):
    """``max(Q - x*dt, 0) + a*dt``: serve first, then add arrivals."""
    Q, x, a = _nonneg("Q", Q), _nonneg("x", x), _nonneg("a", a)
    out = np.maximum(Q - x * dt, 0.0) + a * dt
    return float(out) if out.ndim == 0 else out


def update_delay_queue(Z, Q_positive, x, eta, R, dt: float):
    """``max(Z + (eta/R)*[Q>0]*dt - x*dt, 0)``."""
    Z, x = _nonneg("Z", Z), _nonneg("x", x)
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise ValueError("group delay R must be positive")
    rate = np.asarray(eta, dtype=float) / R
    out = np.maximum(Z + rate * np.asarray(Q_positive, dtype=float) * dt - x * dt, 0.0)
    return float(out) if out.ndim == 0 else out


def delay_bound(Q_max, Z_max, R, eta, dt: float):
    """Worst-case delay in slots, ``(Q_max + Z_max) * R / (eta * dt)``."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0):
        raise ValueError("eta must be positive")
    out = (np.asarray(Q_max, dtype=float) + np.asarray(Z_max, dtype=float)) * np.asarray(R, dtype=float) / (eta * dt)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GroupQueues:
    """Queue state of all groups plus the running maxima seen so far.

    Instances are immutable; every update returns a new state, so a slot-start
    snapshot stays valid after a provisional update.
    """

    q_hat: np.ndarray
    q_check: np.ndarray
    z_hat: np.ndarray
    z_check: np.ndarray
    eta: np.ndarray
    R: np.ndarray
    dt: float
    max_q_hat: np.ndarray
    max_q_check: np.ndarray
    max_z_hat: np.ndarray
    max_z_check: np.ndarray

    @classmethod
    def empty(cls, R: Sequence[float], eta: Sequence[float], dt: float) -> "GroupQueues":
        R = np.asarray(R, dtype=float)
        z = np.zeros(len(R))
        return cls(z, z, z, z, np.asarray(eta, dtype=float), R, float(dt), z, z, z, z)

    @property
    def G(self) -> int:
        return len(self.R)

    def _with(self, **arrays) -> "GroupQueues":
        new = replace(self, **arrays)
        return replace(
            new,
            max_q_hat=np.maximum(self.max_q_hat, new.q_hat),
            max_q_check=np.maximum(self.max_q_check, new.q_check),
            max_z_hat=np.maximum(self.max_z_hat, new.z_hat),
            max_z_check=np.maximum(self.max_z_check, new.z_check),
        )

    def admit(self, a_hat, a_check) -> "GroupQueues":
        """Add one slot of arriving demand (kW) to the task queues."""
        zero = np.zeros(self.G)
        return self._with(
            q_hat=update_task_queue(self.q_hat, zero, a_hat, self.dt),
            q_check=update_task_queue(self.q_check, zero, a_check, self.dt),
        )

    def serve(self, x_hat, x_check) -> "GroupQueues":
        """Advance all four queues one slot with service powers (kW).

        The delay-queue indicators use the backlog before service.
        """
        zero = np.zeros(self.G)
        return self._with(
            q_hat=update_task_queue(self.q_hat, x_hat, zero, self.dt),
            q_check=update_task_queue(self.q_check, x_check, zero, self.dt),
            z_hat=update_delay_queue(self.z_hat, self.q_hat > POSITIVE_TOL, x_hat, self.eta, self.R, self.dt),
            z_check=update_delay_queue(self.z_check, self.q_check > POSITIVE_TOL, x_check, self.eta, self.R, self.dt),
        )

    def withdraw(self, e_hat, e_check) -> "GroupQueues":
        """Remove departed EVs' unserved energy (kWh) from the task queues."""
        return self._with(
            q_hat=np.maximum(self.q_hat - _nonneg("withdrawal", e_hat), 0.0),
            q_check=np.maximum(self.q_check - _nonneg("withdrawal", e_check), 0.0),
        )

    def delay_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Realized worst-case delays (slots) for the upper and lower queues."""
        return (delay_bound(self.max_q_hat, self.max_z_hat, self.R, self.eta, self.dt),
                delay_bound(self.max_q_check, self.max_z_check, self.R, self.eta, self.dt))


class DemandLedger:
    """Per-EV outstanding energy behind each group's task queues.

    Group service is attributed first-in-first-out over the roster, so the
    ledger total of a group equals its queue backlog and a departing EV's
    unserved share can be removed exactly.
    """

    def __init__(self, rosters: Sequence[Sequence[int]], n_ev: int):
        self.rosters = [np.asarray(r, dtype=int) for r in rosters]
        self.hat = np.zeros(n_ev)
        self.check = np.zeros(n_ev)

    def release(self, a_hat, a_check, dt: float) -> None:
        self.hat += np.asarray(a_hat) * dt
        self.check += np.asarray(a_check) * dt

    @staticmethod
    def _fifo(outstanding: np.ndarray, members: np.ndarray, amount: float) -> float:
        for v in members:
            if amount <= 0:
                break
            take = min(outstanding[v], amount)
            outstanding[v] -= take
            amount -= take
        return amount

    def attribute(self, x_hat, x_check, dt: float) -> None:
        for g, members in enumerate(self.rosters):
            self._fifo(self.hat, members, float(x_hat[g]) * dt)
            self._fifo(self.check, members, float(x_check[g]) * dt)

    def withdraw(self, evs: Sequence[int], group_of: Sequence[int], G: int) -> tuple[np.ndarray, np.ndarray]:
        """Zero the listed EVs' outstanding energy; return the per-group totals removed."""
        out_hat, out_check = np.zeros(G), np.zeros(G)
        for v in evs:
            g = group_of[v]
            out_hat[g] += self.hat[v]
            out_check[g] += self.check[v]
            self.hat[v] = 0.0
            self.check[v] = 0.0
        return out_hat, out_check

    def totals(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([self.hat[m].sum() for m in self.rosters]),
                np.array([self.check[m].sum() for m in self.rosters]))
