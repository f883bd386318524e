"""Simulation configuration: dataclasses, presets, TOML load/dump and hashing.

The on-disk schema is documented in ``docs/config_schema.md``. Every field has a
default, so a config file only needs to list what differs from the
commercial-area preset.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# synthetic stand-in for a day of real-time LMPs (USD/MWh), hour 0..23
DEFAULT_HOURLY_PRICES = (
    22.0, 20.5, 19.0, 18.5, 19.0, 22.0, 27.5, 33.0, 36.0, 35.0, 33.5, 34.5,
    37.0, 40.5, 45.0, 52.0, 60.0, 64.0, 57.0, 47.5, 40.0, 33.5, 28.0, 24.0,
)


@dataclass(frozen=True)
class FleetConfig:
    count: int = 100
    arrival_mean_h: float = 9.0
    arrival_std_h: float = 1.2
    departure_mean_h: float = 18.0
    departure_std_h: float = 1.2
    soc_init_dist: str = "uniform"  # "uniform" or "normal"
    soc_init_low: float = 0.3
    soc_init_high: float = 0.5
    soc_init_mean: float = 0.4
    soc_init_var: float = 0.01
    soc_required: float = 0.5
    soc_max: float = 0.9
    capacities_kwh: tuple[float, ...] = (24.0, 40.0, 60.0)
    charge_powers_kw: tuple[float, ...] = (3.3, 6.6, 10.0)
    efficiency: float = 0.95
    max_resample: int = 1000

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("fleet count must be >= 0")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("charging efficiency must lie in (0, 1]")
        if not 0.0 <= self.soc_required <= self.soc_max <= 1.0:
            raise ValueError("need 0 <= soc_required <= soc_max <= 1")
        if self.soc_init_dist not in ("uniform", "normal"):
            raise ValueError(f"unknown soc_init_dist {self.soc_init_dist!r}")
        if not self.capacities_kwh or min(self.capacities_kwh) <= 0:
            raise ValueError("capacities must be a nonempty set of positive values")
        if not self.charge_powers_kw or min(self.charge_powers_kw) <= 0:
            raise ValueError("charge powers must be a nonempty set of positive values")
        if self.arrival_std_h < 0 or self.departure_std_h < 0 or self.soc_init_var < 0:
            raise ValueError("spreads must be nonnegative")


@dataclass(frozen=True)
class PriceConfig:
    path: str | None = None
    hourly_usd_mwh: tuple[float, ...] = DEFAULT_HOURLY_PRICES
    noise_std: float = 0.12  # multiplicative, per slot

    def __post_init__(self):
        if self.path is None and len(self.hourly_usd_mwh) != 24:
            raise ValueError("hourly price profile needs 24 values")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


@dataclass(frozen=True)
class AlgorithmConfig:
    V: float = 200.0
    eta_multiplier: float = 5.0
    backlog_cap: bool = True
    headroom_efficiency: bool = True
    group_rule: str = "hour"  # "hour" or "slot"
    extra_groups: int = 0  # split existing groups to add this many
    disaggregation: str = "required-first"  # or "fifo"
    cap_rule: str = "available"  # or "static": sum of p_max over all members

    def __post_init__(self):
        if self.V < 0:
            raise ValueError("V must be >= 0")
        if self.eta_multiplier <= 0:
            raise ValueError("eta multiplier must be > 0")
        if self.group_rule not in ("hour", "slot"):
            raise ValueError(f"unknown group_rule {self.group_rule!r}")
        if self.extra_groups < 0:
            raise ValueError("extra_groups must be >= 0")
        if self.disaggregation not in ("fifo", "required-first"):
            raise ValueError(f"unknown disaggregation {self.disaggregation!r}")
        if self.cap_rule not in ("available", "static"):
            raise ValueError(f"unknown cap_rule {self.cap_rule!r}")


@dataclass(frozen=True)
class DispatchConfig:
    kind: str = "uniform"  # uniform | constant | scripted | file
    alpha: float = 0.5
    low: float = 0.0
    high: float = 1.0
    series: tuple[float, ...] = ()
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "constant", "scripted", "file"):
            raise ValueError(f"unknown dispatch kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("constant alpha must lie in [0, 1]")
        if not 0.0 <= self.low <= self.high <= 1.0:
            raise ValueError("uniform alpha range must satisfy 0 <= low <= high <= 1")
        if self.kind == "file" and not self.path:
            raise ValueError("dispatch kind 'file' needs a path")


@dataclass(frozen=True)
class SimConfig:
    horizon_slots: int = 144
    slot_minutes: float = 10.0
    seed: int = 0
    fleet: FleetConfig = field(default_factory=FleetConfig)
    prices: PriceConfig = field(default_factory=PriceConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    dispatch: DispatchConfig = field(default_factory=DispatchConfig)

    def __post_init__(self):
        if self.horizon_slots < 1:
            raise ValueError("horizon must be at least one slot")
        if not self.slot_minutes > 0:
            raise ValueError("slot length must be positive")

    @property
    def slot_hours(self) -> float:
        return self.slot_minutes / 60.0

    def replace(self, **changes) -> "SimConfig":
        """Return a copy with top-level or dotted (``"algorithm.V"``) fields replaced."""
        nested: dict[str, dict[str, Any]] = {}
        top = {}
        for key, value in changes.items():
            section, _, name = key.replace("__", ".").partition(".")
            if name:
                nested.setdefault(section, {})[name] = value
            else:
                top[key] = value
        for section, values in nested.items():
            top[section] = dataclasses.replace(getattr(self, section), **values)
        return dataclasses.replace(self, **top)


_SECTIONS = {
    "fleet": FleetConfig,
    "prices": PriceConfig,
    "algorithm": AlgorithmConfig,
    "dispatch": DispatchConfig,
}


def commercial_preset(**overrides) -> SimConfig:
    """Commercial-area fleet: long workday stays, required SOC 0.5."""
    return SimConfig().replace(**overrides)


def short_stay_preset(**overrides) -> SimConfig:
    """Shopping-mall style fleet: early departures, required SOC 0.7."""
    cfg = SimConfig().replace(**{
        "fleet.departure_mean_h": 14.0,
        "fleet.soc_required": 0.7,
        "fleet.soc_init_dist": "normal",
    })
    return cfg.replace(**overrides)


PRESETS = {"commercial": commercial_preset, "short_stay": short_stay_preset}


def to_dict(cfg: SimConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            out[f.name] = {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in dataclasses.asdict(value).items()}
        else:
            out[f.name] = value
    return out


def from_dict(data: dict) -> SimConfig:
    data = dict(data)
    preset = data.pop("preset", None)
    base = PRESETS[preset]() if preset else SimConfig()
    unknown = set(data) - {f.name for f in dataclasses.fields(SimConfig)}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            names = {f.name for f in dataclasses.fields(cls)}
            bad = set(value) - names
            if bad:
                raise ValueError(f"unknown keys in [{key}]: {sorted(bad)}")
            section = {k: tuple(v) if isinstance(v, list) else v for k, v in value.items()}
            kwargs[key] = dataclasses.replace(getattr(base, key), **section)
        else:
            kwargs[key] = value
    return dataclasses.replace(base, **kwargs)


def load_config(path: str | Path) -> SimConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
    else:
        data = tomllib.loads(text)
    cfg = from_dict(data)
    # relative data paths are resolved against the config file's directory
    if cfg.prices.path and not Path(cfg.prices.path).is_absolute():
        cfg = cfg.replace(**{"prices.path": str(path.parent / cfg.prices.path)})
    if cfg.dispatch.path and not Path(cfg.dispatch.path).is_absolute():
        cfg = cfg.replace(**{"dispatch.path": str(path.parent / cfg.dispatch.path)})
    return cfg


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value) or math.isnan(value):
            raise ValueError("non-finite values are not representable")
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot write {type(value).__name__} to TOML")


def dumps_config(cfg: SimConfig) -> str:
    data = to_dict(cfg)
    lines = []
    for key, value in data.items():
        if not isinstance(value, dict):
            lines.append(f"{key} = {_toml_value(value)}")
    for key, value in data.items():
        if isinstance(value, dict):
            lines.append("")
            lines.append(f"[{key}]")
            for name, item in value.items():
                if item is None:
                    continue
                lines.append(f"{name} = {_toml_value(item)}")
    return "\n".join(lines) + "\n"


def save_config(cfg: SimConfig, path: str | Path) -> None:
    Path(path).write_text(dumps_config(cfg))


def config_hash(cfg: SimConfig) -> str:
    blob = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
