import numpy as np
import pytest
from hypothesis import settings

from evflex.config import SimConfig, commercial_preset
from evflex.scenario import EvTask, generate_fleet, prices_for

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def make_ev(id=0, t_a=0, t_d=3, e_a=0.0, e_d=1.0, e_max=2.0, p_max=1.0, capacity=None, e_min=0.0):
    return EvTask(id, t_a, t_d, e_a, e_d, e_min, e_max, p_max, capacity if capacity is not None else e_max)


@pytest.fixture
def tiny_cfg() -> SimConfig:
    """1-hour slots, unit efficiency: hand-computable."""
    return SimConfig(horizon_slots=3, slot_minutes=60.0).replace(**{"fleet.efficiency": 1.0})


@pytest.fixture(scope="session")
def preset_run():
    """Default preset, seed 0, online with feedback (shared by slow tests)."""
    from evflex.engine import run_online

    cfg = commercial_preset()
    fleet, prices = generate_fleet(cfg), prices_for(cfg)
    return cfg, fleet, prices, run_online(cfg, fleet, prices)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
