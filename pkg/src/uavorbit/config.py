"""Scenario configuration and the flat ``key=value`` config file format.

Every physical, learning and experiment constant lives on
:class:`ScenarioConfig`.  Config files are plain text, one ``key = value``
per line, ``#`` starts a comment.  Keys are the field names of
``ScenarioConfig``, except the antenna beamwidth which is written in degrees
as ``beamwidth_deg`` and stored in radians.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed config files and out-of-range values."""


@dataclass(frozen=True)
class ScenarioConfig:
    # radio
    carrier_frequency: float = 2e9
    pathloss_exponent: float = 2.1
    tx_power: float = 1.0
    beamwidth: float = math.radians(30.0)
    nearfield_db: float = -38.4
    noise_power: float = 8e-13
    bandwidth: float = 1e6

    # airframe and propulsion
    uav_mass: float = 10.0
    c1: float = 9.26e-4
    c2: float = 2250.0
    gravity: float = 9.81
    air_density: float = 1.225
    rotor_area: float = 0.5

    # deployment
    user_density: float = 10.0
    uav_density: float = 0.2
    h_min: float = 20.0
    h_max: float = 300.0
    r_min: float = 50.0
    r_max: float = 1000.0
    h_inc: float = 5.0
    r_inc: float = 10.0
    h_init: float = 100.0
    kmeans_max_iter: int = 100

    # episodes
    timestep: float = 2.0
    steps_per_episode: int = 250
    episodes: int = 500
    warmup_episodes: int = 100
    random_decision_order: bool = False

    # learning
    discount: float = 0.1
    learning_rate: float = 5e-5
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.99995
    epsilon_min: float = 0.001
    buffer_size: int = 5000
    batch_size: int = 1000
    target_update: int = 200
    double_q: bool = False
    shared_weights: bool = False
    optimizer: str = "sgd"
    train_every: int = 1
    reward_scale: float = 100.0
    hidden_units: int = 64
    net_dtype: str = "float32"

    def __post_init__(self):
        validate(self)

    @property
    def nearfield_linear(self) -> float:
        return 10.0 ** (self.nearfield_db / 10.0)

    def with_(self, **changes) -> ScenarioConfig:
        return replace(self, **changes)


_POSITIVE = (
    "carrier_frequency", "pathloss_exponent", "tx_power", "beamwidth",
    "noise_power", "bandwidth", "uav_mass", "c1", "c2", "gravity",
    "air_density", "rotor_area", "h_min", "h_max", "r_min", "r_max",
    "h_inc", "r_inc", "h_init", "timestep", "steps_per_episode", "episodes",
    "learning_rate", "epsilon_decay", "buffer_size", "batch_size",
    "target_update", "train_every", "reward_scale", "hidden_units",
    "kmeans_max_iter", "uav_density",
)


def validate(cfg: ScenarioConfig) -> None:
    for name in _POSITIVE:
        value = getattr(cfg, name)
        if not value > 0:
            raise ConfigError(f"{name} must be strictly positive, got {value!r}")
    if cfg.user_density < 0:
        raise ConfigError(f"user_density must be >= 0, got {cfg.user_density!r}")
    if cfg.h_min >= cfg.h_max:
        raise ConfigError(f"h_min ({cfg.h_min}) must be below h_max ({cfg.h_max})")
    if cfg.r_min >= cfg.r_max:
        raise ConfigError(f"r_min ({cfg.r_min}) must be below r_max ({cfg.r_max})")
    if not cfg.h_min <= cfg.h_init <= cfg.h_max:
        raise ConfigError(f"h_init ({cfg.h_init}) outside [{cfg.h_min}, {cfg.h_max}]")
    if not 0.0 <= cfg.discount < 1.0:
        raise ConfigError(f"discount must lie in [0, 1), got {cfg.discount!r}")
    if not 0.0 <= cfg.epsilon_min <= cfg.epsilon_start <= 1.0:
        raise ConfigError("need 0 <= epsilon_min <= epsilon_start <= 1")
    if cfg.epsilon_decay > 1.0:
        raise ConfigError(f"epsilon_decay must be <= 1, got {cfg.epsilon_decay!r}")
    if cfg.batch_size > cfg.buffer_size:
        raise ConfigError("batch_size cannot exceed buffer_size")
    if cfg.optimizer not in ("sgd", "momentum", "adam"):
        raise ConfigError(f"unknown optimizer {cfg.optimizer!r}")
    if cfg.net_dtype not in ("float32", "float64"):
        raise ConfigError(f"net_dtype must be float32 or float64, got {cfg.net_dtype!r}")
    if cfg.warmup_episodes < 0:
        raise ConfigError("warmup_episodes must be >= 0")


def _parse_value(raw: str, kind: type, key: str):
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            as_float = float(raw)
            if as_float != int(as_float):
                raise ValueError(raw)
            return int(as_float)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {key}={raw!r} as {kind.__name__}") from None


_TYPES = {"float": float, "int": int, "bool": bool, "str": str}


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    """Parse flat ``key=value`` text; missing keys keep their defaults."""
    kinds = {f.name: _TYPES[f.type] for f in fields(ScenarioConfig)}
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key == "beamwidth_deg":
            values["beamwidth"] = math.radians(_parse_value(raw, float, key))
            continue
        if key == "beamwidth":
            raise ConfigError(f"{source}:{lineno}: write the beamwidth as beamwidth_deg")
        if key not in kinds:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(raw, kinds[key], key)
    return ScenarioConfig(**values)


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))


def _degrees_text(rad: float) -> str:
    """Shortest degree string that parses back to exactly ``rad``.

    Any beamwidth read from a file has one.  A radian value set in code may
    not; then the nearest degree value is written.
    """
    deg = math.degrees(rad)
    candidates = [round(deg, k) for k in range(1, 16)] + [deg]
    lo = hi = deg
    for _ in range(4):
        lo, hi = math.nextafter(lo, -math.inf), math.nextafter(hi, math.inf)
        candidates += [lo, hi]
    for c in candidates:
        if math.radians(c) == rad:
            return repr(c)
    return repr(deg)


def dump_config(cfg: ScenarioConfig) -> str:
    """Serialise ``cfg`` back to the flat format (round-trips through parse)."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "beamwidth":
            lines.append(f"beamwidth_deg = {_degrees_text(value)}")
        elif isinstance(value, bool):
            lines.append(f"{f.name} = {str(value).lower()}")
        else:
            lines.append(f"{f.name} = {value!r}" if not isinstance(value, str) else f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
