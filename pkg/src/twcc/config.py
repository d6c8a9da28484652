"""Parameter sets and the plain-text (INI, ``key = value``) config file.

Every field has an embedded default, so ``Config()`` is a complete, valid
configuration.  ``load_config`` overlays whatever keys a file provides.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Raised for parameter sets that violate their invariants."""


@dataclass(frozen=True)
class DroneParams:
    mass: float = 0.548
    inertia: tuple = (3.22e-3, 4.68e-3, 7.72e-3)
    wing_area: float = 0.06
    air_density: float = 1.225
    d_fr: float = 0.14
    d_br: float = 0.14
    d_fp: float = 0.10
    d_bp: float = 0.10
    ct1: float = 0.012
    ct2: float = 0.012
    gravity: float = 9.81
    motor_thrust_max: float = 3.5
    thrust_poly: tuple = (0.0, 1.2, 2.8, -1.5)
    phi_max: float = math.radians(30.0)
    theta_max: float = math.radians(30.0)
    thrust_min: float = 1.0
    thrust_max: float = 12.0
    v_eps: float = 0.05

    def __post_init__(self):
        if self.mass <= 0:
            raise ConfigError("mass must be positive")
        if len(self.inertia) != 3 or min(self.inertia) <= 0:
            raise ConfigError("inertia needs three positive diagonal entries")
        if self.wing_area <= 0 or self.air_density <= 0:
            raise ConfigError("wing_area and air_density must be positive")
        for name in ("phi_max", "theta_max"):
            if not 0.0 < getattr(self, name) < math.pi / 2:
                raise ConfigError(f"{name} must lie in (0, pi/2)")
        if not 0.0 <= self.thrust_min < self.thrust_max <= 4.0 * self.motor_thrust_max:
            raise ConfigError("need 0 <= thrust_min < thrust_max <= 4 * motor_thrust_max")
        if len(self.thrust_poly) != 4:
            raise ConfigError("thrust_poly needs four coefficients c0..c3")
        _check_monotone_poly(self.thrust_poly)

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.gravity


def _check_monotone_poly(c):
    # derivative c1 + 2 c2 u + 3 c3 u^2 must stay >= 0 on [0, 1]
    c0, c1, c2, c3 = c
    cands = [0.0, 1.0]
    if c3 != 0.0:
        cands.append(-c2 / (3.0 * c3))
    for u in cands:
        if 0.0 <= u <= 1.0 and c1 + 2.0 * c2 * u + 3.0 * c3 * u * u < -1e-12:
            raise ConfigError(f"thrust polynomial {c} is not monotone on [0, 1]")


@dataclass(frozen=True)
class OracleConfig:
    """Hidden ground-truth wing model of the plant.  Never shown to learners."""

    delta: float = 0.15
    kappa: float = 2.0
    gamma0: float = 1.1
    gamma1: float = 0.3


@dataclass(frozen=True)
class ControlGains:
    kp_pos: tuple = (2.5, 2.5, 0.6)
    kp_vel: tuple = (3.0, 3.0, 1.0)
    ki_vel: tuple = (0.3, 0.3, 0.5)
    kd_vel: tuple = (0.1, 0.1, 0.1)
    vel_int_limit: float = 2.0
    reset_integrals_on_mode_change: bool = False
    att_c1: tuple = (15.0, 15.0, 6.0)
    att_c2: tuple = (12.0, 12.0, 4.0)
    att_lambda: tuple = (2.0, 2.0, 1.0)
    att_int_limit: float = 0.5
    thrust_eps: float = 0.1
    woeg_eps: float = 0.05
    woeg_rule: str = "desired"  # or "normal": aero aligned with -n (thrust axis)
    yaw_ref: float = 0.0
    twcc_rate: int = 10
    attitude_rate: int = 300
    plant_rate: int = 3000

    def __post_init__(self):
        if self.attitude_rate % self.twcc_rate or self.plant_rate % self.attitude_rate:
            raise ConfigError("loop rates must be integer multiples of each other")
        if self.woeg_rule not in ("desired", "normal"):
            raise ConfigError("woeg_rule must be 'desired' or 'normal'")


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 800
    learning_rate: float = 3e-3
    batch_size: int = 64
    clip_norm: float = 5.0
    seed: int = 0
    val_fraction: float = 0.2
    hidden: int = 8
    window: int = 10
    smoothing: int = 3
    gamma_floor: float = 0.05

    def __post_init__(self):
        if self.episodes <= 0:
            raise ConfigError("episodes must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class CollectConfig:
    duration: float = 240.0
    test_duration: float = 120.0
    n_test: int = 4
    seed: int = 100
    hold_min: float = 1.0
    hold_max: float = 3.0
    speed_max: float = 7.5
    test_speed_max: tuple = (10.0, 7.0, 7.5, 5.3)
    vz_max: float = 1.5
    accel_noise: float = 0.18


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "forest"
    seed: int = 0
    v_des: float = 7.0
    sensing_range: float = 5.0
    fov_deg: float = 15.0
    controller: str = "parnn"
    trials: int = 21
    forest_extent: float = 400.0
    obstacle_diameter: float = 1.0
    spacing_min: float = 10.5
    spacing_max: float = 13.5
    clearing_radius: float = 15.0
    steer_min_deg: float = 110.0
    steer_max_deg: float = 130.0
    steer_angles_deg: tuple = (110.0, 115.0, 120.0, 125.0, 130.0)
    sweep_seeds: int = 5
    sweep_obstacle_distance: float = 40.0
    sweep_tail: float = 6.0
    drone_radius: float = 0.25
    accel_budget: float = 6.0
    min_blend_time: float = 0.5
    time_cap: float = 150.0
    travel_goal: float = 400.0
    altitude: float = -10.0
    pos_noise: float = 0.0
    vel_noise: float = 0.0
    model_path: str = "model.json"

    def __post_init__(self):
        if self.kind not in ("steering_sweep", "forest", "data_collection", "hover_checks"):
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"unknown controller {self.controller!r}")
        if self.v_des <= 0 or self.sensing_range <= 0 or self.trials <= 0:
            raise ConfigError("v_des, sensing_range and trials must be positive")
        if not self.spacing_min <= self.spacing_max:
            raise ConfigError("empty obstacle spacing range")
        if not self.steer_min_deg <= self.steer_max_deg:
            raise ConfigError("empty steering range")


CONTROLLERS = ("wingless", "flat_plate", "parnn")


@dataclass(frozen=True)
class Config:
    drone: DroneParams = field(default_factory=DroneParams)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    control: ControlGains = field(default_factory=ControlGains)
    train: TrainConfig = field(default_factory=TrainConfig)
    collect: CollectConfig = field(default_factory=CollectConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def replace(self, **sections) -> "Config":
        """Return a copy with fields of named sections overridden,
        e.g. ``cfg.replace(scenario={"controller": "wingless"})``."""
        new = {}
        for name, updates in sections.items():
            new[name] = dataclasses.replace(getattr(self, name), **updates)
        return dataclasses.replace(self, **new)


_SECTIONS = ("drone", "oracle", "control", "train", "collect", "scenario")


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(float(s) for s in raw.replace("[", "").replace("]", "").split(",") if s.strip())
    return raw


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_config(path: str | Path | None = None) -> Config:
    """Read an INI file; ``None`` or ``"default"`` gives the embedded defaults."""
    cfg = Config()
    if path is None or str(path) == "default":
        return cfg
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    updates = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        current = getattr(cfg, section)
        known = {f.name: getattr(current, f.name) for f in fields(current)}
        sec = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            sec[key] = _parse_value(raw, known[key])
        updates[section] = sec
    return cfg.replace(**updates)


def dump_config(cfg: Config) -> str:
    out = io.StringIO()
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        out.write(f"[{section}]\n")
        for f in fields(obj):
            out.write(f"{f.name} = {_format_value(getattr(obj, f.name))}\n")
        out.write("\n")
    return out.getvalue()
