import numpy as np
import pytest
from hypothesis import given, strategies as st

from evflex.online import (GroupCaps, compute_caps, deliverable_power, drift_penalty_constant, p3_objective,
                           solve_p3, solve_p3_lp_oracle)
from evflex.queues import GroupQueues

DT = 1 / 6


def _queues(q_hat, z_hat, q_check, z_check):
    base = GroupQueues.empty([6.0] * len(q_hat), [30.0] * len(q_hat), DT)
    arr = lambda x: np.asarray(x, dtype=float)
    return base._with(q_hat=arr(q_hat), z_hat=arr(z_hat), q_check=arr(q_check), z_check=arr(z_check))


def test_closed_form_examples():
    caps = GroupCaps(np.array([10.0]), np.array([10.0]))
    d = solve_p3(_queues([3.0], [2.0], [4.0], [8.0]), 0.05, 200.0, caps)
    assert d.x_hat[0] == 10.0 and d.x_check[0] == 10.0
    d = solve_p3(_queues([3.0], [2.0], [0.5], [0.5]), 0.05, 200.0, caps)
    assert d.x_hat[0] == 10.0 and d.x_check[0] == 0.0
    assert d.value == pytest.approx(0.05 * 10.0 * DT)


def test_zero_coefficient_ties_to_wider_region():
    caps = GroupCaps(np.array([5.0]), np.array([5.0]))
    d = solve_p3(_queues([1.0], [0.0], [6.0], [4.0]), 0.05, 200.0, caps)  # V*pi = Q + Z = 10
    assert d.x_check[0] == 0.0


def test_closed_form_equals_lp_oracle_on_random_states():
    rng = np.random.default_rng(2024)
    for _ in range(300):
        G = int(rng.integers(1, 6))
        q = rng.exponential(5.0, (4, G)) * (rng.random((4, G)) > 0.2)
        hat = rng.uniform(0, 30, G) * (rng.random(G) > 0.1)
        caps = GroupCaps(hat, hat * rng.uniform(0, 1, G))
        queues = _queues(*q)
        price, V = rng.uniform(0.0, 0.1), rng.choice([0.0, 20.0, 200.0, 1000.0])
        closed = solve_p3(queues, price, V, caps)
        oracle = solve_p3_lp_oracle(queues, price, V, caps)
        f_c = p3_objective(queues, price, V, closed.x_hat, closed.x_check)
        f_o = p3_objective(queues, price, V, oracle.x_hat, oracle.x_check)
        assert f_c == pytest.approx(f_o, rel=1e-9, abs=1e-9)
        assert np.all(closed.x_check <= closed.x_hat + 1e-12)


@given(st.lists(st.floats(0, 50), min_size=4, max_size=4), st.floats(0, 0.2), st.floats(0, 500),
       st.floats(0, 40), st.floats(0, 1))
def test_closed_form_is_feasible_and_no_worse_than_corners(q, price, V, cap, frac):
    queues = _queues([q[0]], [q[1]], [q[2]], [q[3]])
    caps = GroupCaps(np.array([cap]), np.array([cap * frac]))
    d = solve_p3(queues, price, V, caps)
    assert 0 <= d.x_check[0] <= d.x_hat[0] <= cap
    best = p3_objective(queues, price, V, d.x_hat, d.x_check)
    for xh in (0.0, cap):
        for xc in (0.0, min(cap * frac, xh)):
            assert best <= p3_objective(queues, price, V, [xh], [xc]) + 1e-9


def test_caps_sum_present_evs_and_respect_backlog():
    present = np.array([True, True, False])
    deliver = deliverable_power(present, np.zeros(3), np.full(3, 40.0), np.array([6.6, 3.3, 10.0]), 0.95, DT)
    assert np.allclose(deliver, [6.6, 3.3, 0.0])
    queues = _queues([100.0], [0.0], [100.0], [0.0])
    caps = compute_caps(np.ones((1, 3)), deliver, queues)
    assert caps.hat[0] == pytest.approx(9.9)
    small = _queues([1.0], [0.0], [0.5], [0.0])
    caps = compute_caps(np.ones((1, 3)), deliver, small)
    assert caps.hat[0] == pytest.approx(6.0) and caps.check[0] == pytest.approx(3.0)
    assert compute_caps(np.ones((1, 3)), deliver, small, backlog_cap=False).hat[0] == pytest.approx(9.9)


def test_deliverable_power_headroom_limit():
    d = deliverable_power(np.array([True]), np.array([39.0]), np.array([40.0]), np.array([10.0]), 0.95, DT)
    assert d[0] == pytest.approx(1.0 / (0.95 * DT))
    d = deliverable_power(np.array([True]), np.array([39.0]), np.array([40.0]), np.array([10.0]), 0.95, DT,
                          headroom_efficiency=False)
    assert d[0] == pytest.approx(6.0)


def test_caps_validation():
    with pytest.raises(ValueError):
        GroupCaps(np.array([1.0]), np.array([2.0]))


def test_drift_constant_hand_value():
    # one group, dt = 1: 0.5*(4+1) + 0.5*max(9,4) + 0.5*(1+0) + 0.5*max(9,1) + 3*2 + 3*1
    A = drift_penalty_constant([2.0], [1.0], [1.0], [0.0], [3.0], [1.0], [2.0], [1.0], 1.0)
    assert A == pytest.approx(2.5 + 4.5 + 0.5 + 4.5 + 6 + 3)
