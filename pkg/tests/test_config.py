import json

import pytest
from hypothesis import given, strategies as st

from evflex.config import (SimConfig, commercial_preset, config_hash, dumps_config, from_dict, load_config,
                           save_config, short_stay_preset, to_dict)


def test_defaults_match_commercial_preset():
    cfg = commercial_preset()
    assert cfg.horizon_slots == 144 and cfg.slot_hours == pytest.approx(1 / 6)
    assert cfg.fleet.count == 100 and cfg.fleet.soc_required == 0.5 and cfg.fleet.soc_max == 0.9
    assert cfg.algorithm.V == 200.0 and cfg.algorithm.eta_multiplier == 5.0


def test_short_stay_preset_overrides():
    cfg = short_stay_preset()
    assert cfg.fleet.departure_mean_h == 14.0 and cfg.fleet.soc_required == 0.7
    assert cfg.fleet.soc_init_dist == "normal"


def test_dotted_replace():
    cfg = SimConfig().replace(**{"algorithm.V": 50.0, "seed": 3})
    assert cfg.algorithm.V == 50.0 and cfg.seed == 3
    with pytest.raises(TypeError):
        SimConfig().replace(**{"algorithm.nope": 1})


@pytest.mark.parametrize("changes", [
    {"fleet.efficiency": 0.0}, {"fleet.soc_required": 0.95}, {"algorithm.V": -1.0},
    {"algorithm.disaggregation": "lifo"}, {"dispatch.alpha": 1.5}, {"horizon_slots": 0},
    {"dispatch.kind": "file"},
])
def test_validation(changes):
    with pytest.raises(ValueError):
        SimConfig().replace(**changes)


@given(V=st.floats(0, 1e4), seed=st.integers(0, 2**31), count=st.integers(0, 500),
       alpha=st.floats(0, 1), minutes=st.sampled_from([5.0, 10.0, 15.0, 30.0, 60.0]))
def test_toml_round_trip(V, seed, count, alpha, minutes):
    from evflex.config import tomllib

    cfg = SimConfig(seed=seed, slot_minutes=minutes).replace(**{
        "algorithm.V": V, "fleet.count": count, "dispatch.alpha": alpha})
    assert from_dict(tomllib.loads(dumps_config(cfg))) == cfg
    assert from_dict(json.loads(json.dumps(to_dict(cfg)))) == cfg


def test_file_round_trip_and_hash(tmp_path):
    cfg = short_stay_preset(seed=4)
    save_config(cfg, tmp_path / "c.toml")
    assert load_config(tmp_path / "c.toml") == cfg
    assert config_hash(load_config(tmp_path / "c.toml")) == config_hash(cfg)
    assert config_hash(cfg) != config_hash(cfg.replace(seed=5))


def test_preset_key_and_relative_paths(tmp_path):
    (tmp_path / "c.toml").write_text('preset = "short_stay"\n[prices]\npath = "p.csv"\n')
    cfg = load_config(tmp_path / "c.toml")
    assert cfg.fleet.soc_required == 0.7
    assert cfg.prices.path == str(tmp_path / "p.csv")


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown"):
        from_dict({"bogus": 1})
    with pytest.raises(ValueError, match="unknown"):
        from_dict({"fleet": {"colour": "red"}})
