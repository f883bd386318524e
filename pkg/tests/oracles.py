"""Independent reference solvers used only by the tests.

None of these import the package's LP code: they enumerate grids or dual
vertices directly with numpy.
"""
from __future__ import annotations

import itertools

import numpy as np


def ev_trajectories(t_a, t_d, e_a, e_req, e_max, p_max, horizon, step, efficiency=1.0, dt=1.0):
    """Every on-grid power path of one EV that meets its energy constraints.

    Powers take values ``0, step, ..., p_max`` inside ``[t_a, t_d)`` and zero
    outside. Returns an (n, horizon) array.
    """
    levels = np.round(np.arange(0.0, p_max + step / 2, step), 12)
    stay = t_d - t_a
    paths = []
    for combo in itertools.product(levels, repeat=stay):
        p = np.zeros(horizon)
        p[t_a:t_d] = combo
        e = e_a + np.cumsum(efficiency * p * dt)
        if np.any(e > e_max + 1e-9) or e[t_d - 1] < e_req - 1e-9:
            continue
        paths.append(p)
    return np.array(paths).reshape(-1, horizon)


def aggregate_set(per_ev: list[np.ndarray], step: float) -> np.ndarray:
    """Distinct sums of one path per EV (the on-grid aggregate region)."""
    horizon = per_ev[0].shape[1]
    units = {tuple(np.zeros(horizon, dtype=int))}
    for paths in per_ev:
        ints = {tuple(np.rint(p / step).astype(int)) for p in paths}
        units = {tuple(a + b for a, b in zip(u, w)) for u in units for w in ints}
    return np.array(sorted(units), dtype=float).reshape(-1, horizon) * step


def grid_flexibility_optimum(per_ev: list[np.ndarray], prices, dt: float, step: float) -> float:
    """max over (upper, lower) aggregate pairs with lower <= upper of sum price*(upper-lower)*dt."""
    agg = aggregate_set(per_ev, step)
    prices = np.asarray(prices, dtype=float)
    worth = agg @ prices * dt
    best = -np.inf
    for k in range(0, len(agg), 512):
        lo = agg[k:k + 512]
        ok = np.all(lo[:, None, :] <= agg[None, :, :] + 1e-9, axis=2)
        gain = np.where(ok, worth[None, :] - worth[k:k + 512, None], -np.inf)
        best = max(best, float(gain.max()))
    return best


def dual_vertex_optimum(c, A, b, lower, upper) -> float:
    """Optimal value of ``min c@x, A@x <= b, lower <= x <= upper`` via its dual.

    The dual function ``g(y) = -b@y + sum_j min(lower_j r_j, upper_j r_j)``
    with ``r = c + A.T@y`` is concave and piecewise linear on ``y >= 0``; its
    maximum sits where ``m`` of the hyperplanes ``r_j = 0`` and ``y_i = 0``
    meet. Every such intersection is enumerated.
    """
    c, A, b = (np.asarray(a, dtype=float) for a in (c, A, b))
    m, n = A.shape
    planes = [(A[:, j], -c[j]) for j in range(n)] + [(np.eye(m)[i], 0.0) for i in range(m)]

    def g(y):
        r = c + A.T @ y
        return -b @ y + np.sum(np.minimum(lower * r, upper * r))

    best = -np.inf
    for subset in itertools.combinations(range(len(planes)), m):
        N = np.array([planes[k][0] for k in subset])
        if abs(np.linalg.det(N)) < 1e-10:
            continue
        y = np.linalg.solve(N, np.array([planes[k][1] for k in subset]))
        if np.any(y < -1e-9):
            continue
        best = max(best, g(np.clip(y, 0.0, None)))
    return float(best)


def simulate_asap(e_cha, p_max, efficiency, dt, max_slots=10_000):
    """Slot-by-slot charging at p_max until e_cha is delivered; returns the draw per slot."""
    draws, delivered = [], 0.0
    while delivered < e_cha - 1e-12 and len(draws) < max_slots:
        p = min(p_max, (e_cha - delivered) / (efficiency * dt))
        draws.append(p)
        delivered += p * efficiency * dt
    return draws
