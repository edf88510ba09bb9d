"""Configuration loading.

A single YAML file configures the vehicle, both controllers and the mission
runner. Every key has a default, so an empty file (or no file at all) yields
a complete, working configuration. Unknown keys are rejected to catch typos.

Top-level vehicle keys::

    mass, inertia_xx, inertia_yy, inertia_zz, track_width, wheelbase,
    k_f, arm, rotor_max, servo_max, dt

Sections::

    pid:   channels x, y, z, roll, pitch, yaw, each with p/i/d,
           plus windup_limit, tilt_limit, torque_limit
    nmpc:  horizon, period, q_x..q_yaw, r_c..r_yaw, accel_min, accel_max,
           tilt_max, max_iters, tol, tilt_weight
    sim:   cruise_ground, cruise_air, cruise_water, land_speed,
           arrival_radius, controller_period, time_limit, hover_hold
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .errors import ConfigError

__all__ = [
    "PidChannelGains",
    "PidConfig",
    "NmpcConfig",
    "SimConfig",
    "Config",
    "default_config",
    "load_config",
    "ENV_CONFIG_VAR",
]

# Environment variable consulted when no --config flag is given.
ENV_CONFIG_VAR = "CYCLOSIM_CONFIG"

GRAVITY = 9.81


@dataclass(frozen=True)
class PidChannelGains:
    p: float = 0.0
    i: float = 0.0
    d: float = 0.0


@dataclass(frozen=True)
class PidConfig:
    x: PidChannelGains = PidChannelGains(1.2, 0.01, 1.1)
    y: PidChannelGains = PidChannelGains(1.2, 0.01, 1.1)
    z: PidChannelGains = PidChannelGains(1.2, 0.01, 1.1)
    roll: PidChannelGains = PidChannelGains(6.0, 0.05, 0.8)
    pitch: PidChannelGains = PidChannelGains(6.0, 0.05, 0.8)
    yaw: PidChannelGains = PidChannelGains(6.0, 0.05, 0.8)
    # Anti-windup clamp on each integral accumulator (symmetric, error*s).
    windup_limit: float = 1.0
    # Attitude reference clamp produced by the position loop, rad.
    tilt_limit: float = math.pi / 6.0
    # Torque command clamp per axis, N*m.
    torque_limit: float = 2.0


@dataclass(frozen=True)
class NmpcConfig:
    horizon: int = 15
    period: float = 0.05
    q_x: float = 10.0
    q_y: float = 10.0
    q_z: float = 10.0
    q_yaw: float = 2.0
    r_c: float = 0.1
    r_roll: float = 0.5
    r_pitch: float = 0.5
    r_yaw: float = 0.5
    # Box on the thrust acceleration channel c - g, m/s^2.
    accel_min: float = -5.0
    accel_max: float = 15.0
    # Roll/pitch soft limit, rad, enforced by a quadratic penalty.
    tilt_max: float = math.pi / 6.0
    tilt_weight: float = 1.0e4
    max_iters: int = 50
    tol: float = 1.0e-6

    @property
    def q_diag(self) -> np.ndarray:
        return np.array([self.q_x, self.q_y, self.q_z, self.q_yaw])

    @property
    def r_diag(self) -> np.ndarray:
        return np.array([self.r_c, self.r_roll, self.r_pitch, self.r_yaw])


@dataclass(frozen=True)
class SimConfig:
    cruise_ground: float = 2.0
    cruise_air: float = 3.0
    cruise_water: float = 1.0
    # Vertical speed of the final descent leg, m/s.
    land_speed: float = 2.0
    arrival_radius: float = 0.5
    controller_period: float = 0.01
    time_limit: float = 600.0
    hover_hold: float = 2.0
    # Reference yaw slew rate, rad/s.
    yaw_slew: float = 1.5


@dataclass(frozen=True)
class Config:
    mass: float = 0.75
    inertia_xx: float = 8.0e-3
    inertia_yy: float = 8.0e-3
    inertia_zz: float = 1.2e-2
    track_width: float = 0.40
    wheelbase: float = 0.40
    k_f: float = 1.0e-5
    arm: float = 0.20
    rotor_max: float = 1200.0
    servo_max: float = math.pi / 4.0
    dt: float = 1.0e-3
    pid: PidConfig = field(default_factory=PidConfig)
    nmpc: NmpcConfig = field(default_factory=NmpcConfig)
    sim: SimConfig = field(default_factory=SimConfig)


def default_config() -> Config:
    """Configuration with all keys at their default values."""
    return Config()


_VEHICLE_KEYS = {
    "mass",
    "inertia_xx",
    "inertia_yy",
    "inertia_zz",
    "track_width",
    "wheelbase",
    "k_f",
    "arm",
    "rotor_max",
    "servo_max",
    "dt",
}
_PID_CHANNELS = ("x", "y", "z", "roll", "pitch", "yaw")
_PID_SCALARS = {"windup_limit", "tilt_limit", "torque_limit"}
_NMPC_KEYS = {
    "horizon",
    "period",
    "q_x",
    "q_y",
    "q_z",
    "q_yaw",
    "r_c",
    "r_roll",
    "r_pitch",
    "r_yaw",
    "accel_min",
    "accel_max",
    "tilt_max",
    "tilt_weight",
    "max_iters",
    "tol",
}
_SIM_KEYS = {
    "cruise_ground",
    "cruise_air",
    "cruise_water",
    "land_speed",
    "arrival_radius",
    "controller_period",
    "time_limit",
    "hover_hold",
    "yaw_slew",
}


def _require_number(section: str, key: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}{key}: expected a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ConfigError(f"{section}{key}: must be finite")
    return out


def _merge_pid(base: PidConfig, data: dict) -> PidConfig:
    updates: dict = {}
    for key, value in data.items():
        if key in _PID_CHANNELS:
            if not isinstance(value, dict):
                raise ConfigError(f"pid.{key}: expected a mapping with p/i/d")
            unknown = set(value) - {"p", "i", "d"}
            if unknown:
                raise ConfigError(f"pid.{key}: unknown keys {sorted(unknown)}")
            gains = getattr(base, key)
            updates[key] = replace(
                gains,
                **{g: _require_number(f"pid.{key}.", g, v) for g, v in value.items()},
            )
        elif key in _PID_SCALARS:
            updates[key] = _require_number("pid.", key, value)
        else:
            raise ConfigError(f"pid: unknown key {key!r}")
    return replace(base, **updates)


def _merge_section(name: str, base, data: dict, allowed: set[str]):
    updates: dict = {}
    for key, value in data.items():
        if key not in allowed:
            raise ConfigError(f"{name}: unknown key {key!r}")
        if key in ("horizon", "max_iters"):
            num = _require_number(f"{name}.", key, value)
            if num != int(num):
                raise ConfigError(f"{name}.{key}: expected an integer")
            updates[key] = int(num)
        else:
            updates[key] = _require_number(f"{name}.", key, value)
    return replace(base, **updates)


def _validate(cfg: Config) -> Config:
    positive = [
        ("mass", cfg.mass),
        ("inertia_xx", cfg.inertia_xx),
        ("inertia_yy", cfg.inertia_yy),
        ("inertia_zz", cfg.inertia_zz),
        ("track_width", cfg.track_width),
        ("wheelbase", cfg.wheelbase),
        ("k_f", cfg.k_f),
        ("arm", cfg.arm),
        ("rotor_max", cfg.rotor_max),
        ("servo_max", cfg.servo_max),
        ("dt", cfg.dt),
        ("nmpc.period", cfg.nmpc.period),
        ("nmpc.tol", cfg.nmpc.tol),
        ("sim.controller_period", cfg.sim.controller_period),
        ("sim.time_limit", cfg.sim.time_limit),
    ]
    for name, value in positive:
        if value <= 0.0:
            raise ConfigError(f"{name} must be positive, got {value!r}")
    if cfg.dt > 0.05:
        raise ConfigError(f"dt must be <= 0.05 s, got {cfg.dt!r}")
    if cfg.nmpc.horizon < 2:
        raise ConfigError("nmpc.horizon must be >= 2")
    for key, value in zip(
        ("r_c", "r_roll", "r_pitch", "r_yaw"), cfg.nmpc.r_diag, strict=True
    ):
        if value <= 0.0:
            raise ConfigError(f"nmpc.{key} must be strictly positive, got {value!r}")
    for key, value in zip(
        ("q_x", "q_y", "q_z", "q_yaw"), cfg.nmpc.q_diag, strict=True
    ):
        if value < 0.0:
            raise ConfigError(f"nmpc.{key} must be nonnegative, got {value!r}")
    if cfg.nmpc.tilt_max <= 0.0 or cfg.nmpc.tilt_weight < 0.0:
        raise ConfigError("nmpc tilt limit must be positive and its weight nonnegative")
    if cfg.nmpc.period > 0.05:
        raise ConfigError("nmpc.period must be <= 0.05 s (one integrator step)")
    if cfg.nmpc.max_iters < 1:
        raise ConfigError("nmpc.max_iters must be >= 1")
    if cfg.nmpc.accel_min >= cfg.nmpc.accel_max:
        raise ConfigError("nmpc.accel_min must be below nmpc.accel_max")
    if cfg.sim.controller_period < cfg.dt:
        raise ConfigError("sim.controller_period must be >= dt")
    return cfg


def load_config(path: str | os.PathLike | None = None) -> Config:
    """Load a configuration file, overlaying defaults.

    Parameters
    ----------
    path : str or None
        YAML file path. ``None`` falls back to the ``CYCLOSIM_CONFIG``
        environment variable; if that is unset too, defaults are returned.

    Raises
    ------
    ConfigError
        On unreadable files, malformed YAML, unknown keys or invalid values.
    """
    if path is None:
        path = os.environ.get(ENV_CONFIG_VAR) or None
    if path is None:
        return default_config()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    if raw is None:
        return default_config()
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")

    cfg = default_config()
    updates: dict = {}
    for key, value in raw.items():
        if key in _VEHICLE_KEYS:
            updates[key] = _require_number("", key, value)
        elif key == "pid":
            if not isinstance(value, dict):
                raise ConfigError("pid: expected a mapping")
            updates["pid"] = _merge_pid(cfg.pid, value)
        elif key == "nmpc":
            if not isinstance(value, dict):
                raise ConfigError("nmpc: expected a mapping")
            updates["nmpc"] = _merge_section("nmpc", cfg.nmpc, value, _NMPC_KEYS)
        elif key == "sim":
            if not isinstance(value, dict):
                raise ConfigError("sim: expected a mapping")
            updates["sim"] = _merge_section("sim", cfg.sim, value, _SIM_KEYS)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return _validate(replace(cfg, **updates))
