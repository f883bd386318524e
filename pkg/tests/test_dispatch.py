import numpy as np
import pytest
from hypothesis import given, strategies as st

from evflex.config import commercial_preset
from evflex.dispatch import (construct_feasible, disaggregate, dispatch_ratio, feedback_update, group_dispatch,
                             verify_construction)
from evflex.offline import disaggregate_trajectory, robust_split, solve_offline
from evflex.queues import GroupQueues
from evflex.scenario import generate_fleet, prices_for

from conftest import make_ev

DT = 1 / 6


@given(st.lists(st.tuples(st.floats(0, 30), st.floats(0, 1)), min_size=1, max_size=8), st.floats(0, 1))
def test_group_dispatch_sums_to_aggregate(groups, alpha):
    x_hat = np.array([g[0] for g in groups])
    x_check = x_hat * np.array([g[1] for g in groups])
    p = group_dispatch(alpha, x_check, x_hat)
    p_agg = x_check.sum() + alpha * (x_hat.sum() - x_check.sum())
    assert p.sum() == pytest.approx(p_agg, abs=1e-9)
    assert np.all(p >= x_check - 1e-12) and np.all(p <= x_hat + 1e-12)
    back = dispatch_ratio(p_agg, x_hat.sum(), x_check.sum())
    if x_hat.sum() - x_check.sum() > 1e-9:
        assert back == pytest.approx(alpha, abs=1e-6)


def test_dispatch_ratio_errors_and_empty_region():
    assert dispatch_ratio(5.0, 5.0, 5.0) == 0.0
    with pytest.raises(ValueError):
        dispatch_ratio(6.0, 5.0, 1.0)
    with pytest.raises(ValueError):
        group_dispatch(1.5, [0.0], [1.0])


def _two_evs(headroom0=40.0):
    present = np.array([True, True])
    energy = np.array([40.0 - headroom0, 0.0])
    return present, energy, np.full(2, 40.0), np.array([6.6, 6.6])


def test_fifo_split_examples():
    present, energy, e_max, p_max = _two_evs()
    out, short = disaggregate([0, 1], present, energy, e_max, p_max, 9.0, DT, 0.95)
    assert out[0] == pytest.approx(6.6) and out[1] == pytest.approx(2.4) and short == 0.0
    # first EV can only absorb 1 kW this slot
    present, energy, e_max, p_max = _two_evs(headroom0=1.0 * 0.95 * DT)
    out, short = disaggregate([0, 1], present, energy, e_max, p_max, 9.0, DT, 0.95)
    assert out[0] == pytest.approx(1.0) and out[1] == pytest.approx(6.6)
    assert short == pytest.approx(1.4)


def test_required_first_serves_needy_ev_before_roster_order():
    present = np.array([True, True])
    energy = np.array([30.0, 5.0])
    e_req = np.array([20.0, 20.0])
    args = ([0, 1], present, energy, np.full(2, 40.0), np.array([6.6, 6.6]), 6.6, DT, 0.95)
    fifo, _ = disaggregate(*args)
    first, _ = disaggregate(*args, e_required=e_req)
    assert fifo[0] == pytest.approx(6.6) and fifo[1] == 0.0
    assert first[1] == pytest.approx(6.6) and first[0] == 0.0


def test_absent_ev_gets_nothing():
    present = np.array([False, True])
    out, short = disaggregate([0, 1], present, np.zeros(2), np.full(2, 40.0), np.full(2, 6.6), 9.0, DT, 0.95)
    assert out[0] == 0.0 and out[1] == pytest.approx(6.6) and short == pytest.approx(2.4)


def test_feedback_update_serves_dispatched_power():
    q = GroupQueues.empty([6.0], [30.0], DT).admit([12.0], [6.0])
    after = feedback_update(q, [6.0])
    assert after.q_hat[0] == pytest.approx(1.0) and after.q_check[0] == pytest.approx(0.0)


def test_construction_works_on_single_ev():
    ev = make_ev()
    region, problem, _ = solve_offline([ev], np.array([1.0, 2.0, 3.0]), 1.0, 1.0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        traj = region.lower + rng.uniform(0, 1, 3) * (region.upper - region.lower)
        out = verify_construction([ev], region, traj, 1.0, 1.0, problem.index["e_req"])
        assert out["residual"] <= 1e-9
    with pytest.raises(ValueError):
        construct_feasible(region, region.upper + 1.0)


def _prop1_instance(seed):
    cfg = commercial_preset(**{"seed": seed, "fleet.count": 10, "horizon_slots": 24, "slot_minutes": 60.0})
    fleet = generate_fleet(cfg)
    region, problem, _ = solve_offline(fleet, prices_for(cfg).values, 1.0, 0.95)
    return fleet, region, problem


def test_slotwise_mix_can_fail_where_an_lp_split_exists():
    # two EVs of seed 1: a zero-width slot pins the mix to the lower solution while a later slot needs the upper one
    fleet, region, problem = _prop1_instance(1)
    rng = np.random.default_rng(1)
    mix_fail = lp_fail = 0
    for _ in range(30):
        traj = region.lower + rng.uniform(0, 1, 24) * (region.upper - region.lower)
        mix_fail += verify_construction(fleet, region, traj, 1.0, 0.95, problem.index["e_req"])["residual"] > 1e-6
        lp_fail += disaggregate_trajectory(fleet, traj, 1.0, 0.95) is None
    assert mix_fail > 0
    assert lp_fail == 0


def test_no_split_makes_every_mix_feasible_on_counterexample():
    fleet, region, _ = _prop1_instance(1)
    _, sol = robust_split(fleet, region, 1.0, 0.95)
    assert sol.status == "infeasible"


def test_lp_disaggregation_meets_constraints():
    from evflex.offline import trajectory_violation

    fleet, region, problem = _prop1_instance(0)
    traj = 0.5 * (region.lower + region.upper)
    power, energy = disaggregate_trajectory(fleet, traj, 1.0, 0.95)
    assert np.allclose(power.sum(axis=0), traj, atol=1e-7)
    assert trajectory_violation(fleet, power, energy, 1.0, 0.95, problem.index["e_req"]) <= 1e-6
