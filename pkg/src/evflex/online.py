"""Per-slot drift-plus-penalty problem: closed-form solution, LP oracle, caps
and the constant of the optimality-gap bound."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lp import LpProblem, solve_lp
from .queues import GroupQueues


@dataclass(frozen=True)
class GroupCaps:
    hat: np.ndarray  # kW
    check: np.ndarray  # kW

    def __post_init__(self):
        hat = np.asarray(self.hat, dtype=float)
        check = np.asarray(self.check, dtype=float)
        if hat.shape != check.shape:
            raise ValueError("cap arrays must have the same shape")
        if np.any(check < 0) or np.any(check > hat + 1e-12):
            raise ValueError("caps must satisfy 0 <= cap_check <= cap_hat")
        object.__setattr__(self, "hat", hat)
        object.__setattr__(self, "check", check)


@dataclass(frozen=True)
class SlotDecision:
    x_hat: np.ndarray  # kW per group
    x_check: np.ndarray
    price: float
    dt: float

    @property
    def p_hat(self) -> float:
        return float(self.x_hat.sum())

    @property
    def p_check(self) -> float:
        return float(self.x_check.sum())

    @property
    def value(self) -> float:
        """Flexibility value of the slot in USD."""
        return self.price * (self.p_hat - self.p_check) * self.dt


def p3_coefficients(queues: GroupQueues, price: float, V: float) -> tuple[np.ndarray, np.ndarray]:
    c_hat = -(V * price + queues.q_hat + queues.z_hat)
    c_check = V * price - queues.q_check - queues.z_check
    return c_hat, c_check


def p3_objective(queues: GroupQueues, price: float, V: float, x_hat, x_check) -> float:
    c_hat, c_check = p3_coefficients(queues, price, V)
    return float(c_hat @ np.asarray(x_hat) + c_check @ np.asarray(x_check))


def solve_p3(queues: GroupQueues, price: float, V: float, caps: GroupCaps) -> SlotDecision:
    """Exact minimizer of the separable per-slot problem.

    The upper coefficient is never positive, so every group offers its full
    cap. The lower bound drops to zero when its coefficient is nonnegative
    (zero ties go to the wider region), otherwise it rises to the upper bound.
    """
    _, c_check = p3_coefficients(queues, price, V)
    x_hat = caps.hat.copy()
    x_check = np.where(c_check < 0, np.minimum(caps.check, x_hat), 0.0)
    return SlotDecision(x_hat, x_check, float(price), queues.dt)


def solve_p3_lp_oracle(queues: GroupQueues, price: float, V: float, caps: GroupCaps,
                       method: str = "simplex") -> SlotDecision:
    """Same problem through the generic bounded LP solver (test oracle)."""
    G = queues.G
    c_hat, c_check = p3_coefficients(queues, price, V)
    c = np.concatenate([c_hat, c_check])
    # x_check - x_hat <= 0
    A_ub = sp.hstack([-sp.identity(G), sp.identity(G)], format="csr")
    prob = LpProblem(
        c=c, A_ub=A_ub, b_ub=np.zeros(G),
        A_eq=sp.csr_matrix((0, 2 * G)), b_eq=np.zeros(0),
        lower=np.zeros(2 * G), upper=np.concatenate([caps.hat, caps.check]),
    )
    sol = solve_lp(prob, method=method)
    if sol.status != "optimal":
        raise RuntimeError(f"per-slot LP oracle failed: {sol.status}")
    return SlotDecision(sol.x[:G].copy(), sol.x[G:].copy(), float(price), queues.dt)


def deliverable_power(present: np.ndarray, energy: np.ndarray, e_max: np.ndarray,
                      p_max: np.ndarray, efficiency: float, dt: float,
                      headroom_efficiency: bool = True) -> np.ndarray:
    """Per-EV power that can be absorbed this slot without passing ``e_max``."""
    headroom = np.clip(e_max - energy, 0.0, None)
    limit = headroom / (efficiency * dt) if headroom_efficiency else headroom / dt
    out = np.minimum(p_max, limit)
    out[~present] = 0.0
    out[headroom <= 1e-12] = 0.0
    return out


def compute_caps(group_matrix: np.ndarray, deliverable: np.ndarray, queues: GroupQueues,
                 backlog_cap: bool = True) -> GroupCaps:
    """Time-varying admissible maxima of every group.

    ``deliverable`` is the per-EV power limit from :func:`deliverable_power`;
    with ``backlog_cap`` a group never offers more than its backlog can use.
    """
    cap = group_matrix @ deliverable
    hat, check = cap.copy(), cap.copy()
    if backlog_cap:
        hat = np.minimum(hat, queues.q_hat / queues.dt)
        check = np.minimum(check, queues.q_check / queues.dt)
    check = np.minimum(check, hat)
    return GroupCaps(hat, check)


def drift_penalty_constant(x_hat_max, x_check_max, a_hat_max, a_check_max,
                           eta, R, z_hat_max, z_check_max, dt: float) -> float:
    """Constant of the drift-plus-penalty upper bound, in kWh^2.

    Powers (kW) are converted to per-slot energies with ``dt`` before squaring.
    """
    xh, xc = np.asarray(x_hat_max) * dt, np.asarray(x_check_max) * dt
    ah, ac = np.asarray(a_hat_max) * dt, np.asarray(a_check_max) * dt
    rate = np.asarray(eta, dtype=float) / np.asarray(R, dtype=float) * dt
    A = 0.5 * np.sum(xh**2 + ah**2) + 0.5 * np.sum(np.maximum(rate**2, xh**2))
    A += 0.5 * np.sum(xc**2 + ac**2) + 0.5 * np.sum(np.maximum(rate**2, xc**2))
    A += np.sum(np.asarray(z_hat_max) * rate) + np.sum(np.asarray(z_check_max) * rate)
    return float(A)
