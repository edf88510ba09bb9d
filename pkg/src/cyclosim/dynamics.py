"""Rigid-body flight dynamics, surface models and control allocation.

Three plant models share one vehicle:

* aerial: 6-DOF rigid body, state ``[p(3), v(3), q(4), w(3)]`` (13 entries),
  driven by mass-normalized collective thrust ``c`` along body z and body
  torques ``tau``;
* terrestrial: differential drive on the ground plane, state ``[x, y, heading]``,
  driven by left/right wheel-contact speeds;
* aquatic: surface craft with rear drive and steering, state ``[x, y, heading]``,
  driven by surge speed and steering angle.

All integration uses a fixed-step classical Runge-Kutta 4 scheme. Aerial
steps renormalize the attitude quaternion afterwards, keeping the norm drift
far below 1e-9 per step.

The rotor layout used by the allocation map (the source article does not fix
one) is four rotors at the corners of a square with half-side ``arm``:
front-left, front-right, rear-left, rear-right, thrust along body +z, plus a
single servo that tilts the rear-pair thrust sideways to produce yaw torque.
A zero "twist" constraint (FL - FR - RL + RR = 0) pins the null direction of
the 3x4 force map, making the mixing matrix square and exactly invertible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import GRAVITY, Config
from .errors import DivergenceError, SaturationError

__all__ = [
    "VehicleParams",
    "VehicleState",
    "AerialInput",
    "TerrestrialInput",
    "AquaticInput",
    "ActuatorCommand",
    "STATE_DIM",
    "QUAT_SLICE",
    "AQUATIC_DRAG_GAIN",
    "aerial_derivative",
    "terrestrial_derivative",
    "aquatic_derivative",
    "step_rk4",
    "aerial_step",
    "allocate",
    "forward_mix",
    "aquatic_rotor_speeds",
    "hover_state",
]

STATE_DIM = 13
QUAT_SLICE = slice(6, 10)

# Quadratic drag balance used only to report equivalent rear-rotor speeds
# while swimming: thrust k_f * w^2 per rotor vs. drag AQUATIC_DRAG_GAIN * v^2
# split over the two driven rotors. Not a config key; the closed loop tracks
# surge speed directly.
AQUATIC_DRAG_GAIN = 4.0


@dataclass(frozen=True)
class VehicleParams:
    """Physical vehicle parameters.

    Attributes
    ----------
    mass : float
        Vehicle mass, kg.
    inertia : ndarray
        Principal moments of inertia (Jx, Jy, Jz), kg*m^2.
    track_width : float
        Wheel-contact track width for ground motion, m.
    wheelbase : float
        Steering geometry length for water motion, m.
    k_f : float
        Rotor thrust coefficient, N/(rad/s)^2.
    arm : float
        Rotor moment arm (half-side of the rotor square), m.
    rotor_max : float
        Rotor speed limit, rad/s.
    servo_max : float
        Servo tilt travel, rad.
    dt : float
        Plant integration step, s.
    g_z : float
        Gravitational acceleration, m/s^2.
    """

    mass: float = 0.75
    inertia: np.ndarray = field(
        default_factory=lambda: np.array([8.0e-3, 8.0e-3, 1.2e-2])
    )
    track_width: float = 0.40
    wheelbase: float = 0.40
    k_f: float = 1.0e-5
    arm: float = 0.20
    rotor_max: float = 1200.0
    servo_max: float = math.pi / 4.0
    dt: float = 1.0e-3
    g_z: float = GRAVITY

    def __post_init__(self):
        inertia = np.asarray(self.inertia, dtype=float)
        if inertia.shape != (3,):
            raise ValueError("inertia must have shape (3,)")
        object.__setattr__(self, "inertia", inertia)
        for name in (
            "mass",
            "track_width",
            "wheelbase",
            "k_f",
            "arm",
            "rotor_max",
            "servo_max",
            "dt",
            "g_z",
        ):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be a positive finite number")
        if not (np.isfinite(inertia).all() and (inertia > 0.0).all()):
            raise ValueError("inertia entries must be positive and finite")
        if self.dt > 0.05:
            raise ValueError("dt must lie in (0, 0.05]")

    @classmethod
    def from_config(cls, cfg: Config) -> "VehicleParams":
        return cls(
            mass=cfg.mass,
            inertia=np.array([cfg.inertia_xx, cfg.inertia_yy, cfg.inertia_zz]),
            track_width=cfg.track_width,
            wheelbase=cfg.wheelbase,
            k_f=cfg.k_f,
            arm=cfg.arm,
            rotor_max=cfg.rotor_max,
            servo_max=cfg.servo_max,
            dt=cfg.dt,
        )


@dataclass(frozen=True)
class VehicleState:
    """Full rigid-body state: world position/velocity, attitude, body rates."""

    position: np.ndarray
    velocity: np.ndarray
    quaternion: np.ndarray
    body_rates: np.ndarray

    def __post_init__(self):
        for name, dim in (
            ("position", 3),
            ("velocity", 3),
            ("quaternion", 4),
            ("body_rates", 3),
        ):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (dim,):
                raise ValueError(f"{name} must have shape ({dim},)")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, arr)
        n = float(self.quaternion @ self.quaternion)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm^2 = {n!r}, expected 1")

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.position, self.velocity, self.quaternion, self.body_rates]
        )

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "VehicleState":
        x = np.asarray(x, dtype=float)
        if x.shape != (STATE_DIM,):
            raise ValueError(f"state vector must have shape ({STATE_DIM},)")
        return cls(x[0:3], x[3:6], x[6:10], x[10:13])


def hover_state(position, yaw: float = 0.0) -> VehicleState:
    """Stationary state at ``position`` with the given heading."""
    return VehicleState(
        position=np.asarray(position, dtype=float),
        velocity=np.zeros(3),
        quaternion=np.array([math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw)]),
        body_rates=np.zeros(3),
    )


@dataclass(frozen=True)
class AerialInput:
    """Mass-normalized collective thrust (m/s^2, body +z) and body torques (N*m)."""

    c: float
    torque: np.ndarray

    def __post_init__(self):
        torque = np.asarray(self.torque, dtype=float)
        if torque.shape != (3,):
            raise ValueError("torque must have shape (3,)")
        if not (math.isfinite(self.c) and np.isfinite(torque).all()):
            raise ValueError("aerial input must be finite")
        if self.c < 0.0:
            raise ValueError("collective thrust c must be >= 0")
        object.__setattr__(self, "torque", torque)

    def as_vector(self) -> np.ndarray:
        return np.array([self.c, self.torque[0], self.torque[1], self.torque[2]])


@dataclass(frozen=True)
class TerrestrialInput:
    """Left/right wheel-contact speeds, m/s."""

    v_left: float
    v_right: float

    def __post_init__(self):
        if not (math.isfinite(self.v_left) and math.isfinite(self.v_right)):
            raise ValueError("wheel speeds must be finite")


@dataclass(frozen=True)
class AquaticInput:
    """Surge speed (m/s) and steering angle (rad, |angle| < pi/2)."""

    speed: float
    steering: float

    def __post_init__(self):
        if not (math.isfinite(self.speed) and math.isfinite(self.steering)):
            raise ValueError("aquatic input must be finite")
        if abs(self.steering) >= 0.5 * math.pi:
            raise ValueError("steering angle magnitude must be below pi/2")


@dataclass(frozen=True)
class ActuatorCommand:
    """Rotor speed commands (rad/s, FL/FR/RL/RR, sign = direction) and servo tilt (rad)."""

    rotor_speeds: np.ndarray
    servo: float

    def __post_init__(self):
        speeds = np.asarray(self.rotor_speeds, dtype=float)
        if speeds.shape != (4,):
            raise ValueError("rotor_speeds must have shape (4,)")
        if not (np.isfinite(speeds).all() and math.isfinite(self.servo)):
            raise ValueError("actuator command must be finite")
        object.__setattr__(self, "rotor_speeds", speeds)


# ---------------------------------------------------------------------------
# Continuous-time models
# ---------------------------------------------------------------------------


def _aerial_rhs(x: np.ndarray, u: np.ndarray, p: VehicleParams) -> np.ndarray:
    """Aerial state derivative; hot path, no validation.

    Works in plain floats: scalar numpy arithmetic is several times slower
    and this function dominates both the plant loop and the optimizer.
    """
    _, _, _, vx, vy, vz, qw, qx, qy, qz, wx, wy, wz = x.tolist()
    c, tx, ty, tz = u.tolist()
    jx, jy, jz = p.inertia.tolist()

    # v_dot = R(q) @ (0, 0, c) - (0, 0, g): only the third column of R matters.
    ax = 2.0 * (qx * qz + qw * qy) * c
    ay = 2.0 * (qy * qz - qw * qx) * c
    az = (1.0 - 2.0 * (qx * qx + qy * qy)) * c - p.g_z

    # q_dot = 0.5 * Omega(w) @ q
    qdw = 0.5 * (-wx * qx - wy * qy - wz * qz)
    qdx = 0.5 * (wx * qw + wz * qy - wy * qz)
    qdy = 0.5 * (wy * qw - wz * qx + wx * qz)
    qdz = 0.5 * (wz * qw + wy * qx - wx * qy)

    # w_dot = J^-1 (tau - w x J w) with diagonal J
    wdx = (tx - (jz - jy) * wy * wz) / jx
    wdy = (ty - (jx - jz) * wz * wx) / jy
    wdz = (tz - (jy - jx) * wx * wy) / jz

    return np.array(
        [vx, vy, vz, ax, ay, az, qdw, qdx, qdy, qdz, wdx, wdy, wdz]
    )


def aerial_derivative(x: np.ndarray, u: np.ndarray, p: VehicleParams) -> np.ndarray:
    """Aerial rigid-body derivative.

    Parameters
    ----------
    x : (13,) ndarray
        State ``[px, py, pz, vx, vy, vz, qw, qx, qy, qz, wx, wy, wz]``.
    u : (4,) ndarray
        Input ``[c, tau_x, tau_y, tau_z]``.
    p : VehicleParams

    Returns
    -------
    (13,) ndarray
        Time derivative of the state.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (STATE_DIM,):
        raise ValueError(f"state must have shape ({STATE_DIM},)")
    if u.shape != (4,):
        raise ValueError("input must have shape (4,)")
    if not (np.isfinite(x).all() and np.isfinite(u).all()):
        raise ValueError("state and input must be finite")
    return _aerial_rhs(x, u, p)


def terrestrial_derivative(
    pose: np.ndarray, u: TerrestrialInput, p: VehicleParams
) -> np.ndarray:
    """Differential-drive kinematics on the ground plane.

    ``pose`` is ``[x, y, heading]``; forward speed is the wheel-speed mean,
    heading rate the wheel-speed difference over the track width.
    """
    pose = np.asarray(pose, dtype=float)
    if pose.shape != (3,):
        raise ValueError("pose must have shape (3,)")
    if not np.isfinite(pose).all():
        raise ValueError("pose must be finite")
    v = 0.5 * (u.v_right + u.v_left)
    heading = pose[2]
    return np.array(
        [
            v * math.cos(heading),
            v * math.sin(heading),
            (u.v_right - u.v_left) / p.track_width,
        ]
    )


def aquatic_derivative(
    pose: np.ndarray, u: AquaticInput, p: VehicleParams
) -> np.ndarray:
    """Surface-craft kinematics: rear drive with a steering angle.

    ``pose`` is ``[x, y, heading]``; heading rate is
    ``speed * tan(steering) / wheelbase``.
    """
    pose = np.asarray(pose, dtype=float)
    if pose.shape != (3,):
        raise ValueError("pose must have shape (3,)")
    if not np.isfinite(pose).all():
        raise ValueError("pose must be finite")
    heading = pose[2]
    return np.array(
        [
            u.speed * math.cos(heading),
            u.speed * math.sin(heading),
            u.speed * math.tan(u.steering) / p.wheelbase,
        ]
    )


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


def step_rk4(model, state: np.ndarray, u, dt: float, quat_slice: slice | None = None):
    """Advance ``state`` by one classical RK4 step of ``model(state, u)``.

    Parameters
    ----------
    model : callable
        Derivative function ``f(state, u) -> state_dot``.
    state : ndarray
        Current state vector.
    u : object
        Input held constant over the step.
    dt : float
        Step size, s; must lie in (0, 0.05].
    quat_slice : slice, optional
        If given, that slice of the result is renormalized to unit length
        (used to keep attitude quaternions on the unit sphere).

    Raises
    ------
    DivergenceError
        If the step produces a non-finite state.
    """
    if not (0.0 < dt <= 0.05):
        raise ValueError(f"dt must lie in (0, 0.05], got {dt!r}")
    k1 = model(state, u)
    k2 = model(state + (0.5 * dt) * k1, u)
    k3 = model(state + (0.5 * dt) * k2, u)
    k4 = model(state + dt * k3, u)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if quat_slice is not None:
        q = out[quat_slice]
        n = math.sqrt(float(q @ q))
        if n < 1e-12 or not math.isfinite(n):
            raise DivergenceError("quaternion collapsed during integration", state=out)
        out[quat_slice] = q / n
    if not np.isfinite(out).all():
        raise DivergenceError("integration produced a non-finite state", state=out)
    return out


def aerial_step(x: np.ndarray, u: np.ndarray, p: VehicleParams, dt: float) -> np.ndarray:
    """One RK4 step of the aerial model with quaternion renormalization."""
    if not (0.0 < dt <= 0.05):
        raise ValueError(f"dt must lie in (0, 0.05], got {dt!r}")
    k1 = _aerial_rhs(x, u, p)
    k2 = _aerial_rhs(x + (0.5 * dt) * k1, u, p)
    k3 = _aerial_rhs(x + (0.5 * dt) * k2, u, p)
    k4 = _aerial_rhs(x + dt * k3, u, p)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    q = out[QUAT_SLICE]
    n = math.sqrt(float(q @ q))
    if n < 1e-12 or not math.isfinite(n):
        raise DivergenceError("quaternion collapsed during integration", state=out)
    out[QUAT_SLICE] = q / n
    if not np.isfinite(out).all():
        raise DivergenceError("integration produced a non-finite state", state=out)
    return out


# ---------------------------------------------------------------------------
# Control allocation
# ---------------------------------------------------------------------------

# Signed rotor thrust: T = k_f * w * |w|, so reversing a rotor reverses thrust.


def allocate(u: AerialInput, p: VehicleParams, strict: bool = True) -> ActuatorCommand:
    """Map collective thrust and torques to rotor speeds and servo tilt.

    The per-rotor thrusts solve the square mixing system

    ==========================  =======================
    total thrust                ``T1+T2+T3+T4 = m*c``
    roll (left minus right)     ``T1-T2+T3-T4 = tau_x/arm``
    pitch (rear minus front)    ``-T1-T2+T3+T4 = tau_y/arm``
    zero twist                  ``T1-T2-T3+T4 = 0``
    ==========================  =======================

    and yaw torque maps to the servo through the small-angle relation
    ``tau_z = arm * servo * (T3 + T4)`` (the servo tilts the rear-pair
    thrust sideways).

    Parameters
    ----------
    u : AerialInput
    p : VehicleParams
    strict : bool
        If True (default), commands beyond actuator limits raise
        :class:`SaturationError` listing the violating channels. If False,
        the returned command is clipped to the limits instead.

    Returns
    -------
    ActuatorCommand
        Rotor speeds (rad/s, FL/FR/RL/RR) and servo angle (rad).
    """
    b0 = p.mass * u.c
    b1 = u.torque[0] / p.arm
    b2 = u.torque[1] / p.arm
    # Thrusts from the orthogonal mixing rows (M^-1 = M^T / 4).
    t1 = 0.25 * (b0 + b1 - b2)
    t2 = 0.25 * (b0 - b1 - b2)
    t3 = 0.25 * (b0 + b1 + b2)
    t4 = 0.25 * (b0 - b1 + b2)

    rear = t3 + t4
    tz = float(u.torque[2])
    if abs(rear) * p.arm < 1e-9:
        if abs(tz) > 1e-12:
            raise SaturationError(
                "yaw torque demanded with no rear-pair thrust to tilt",
                channels=["servo"],
            )
        servo = 0.0
    else:
        servo = tz / (p.arm * rear)

    speeds = np.empty(4)
    clipped: list[str] = []
    for i, t in enumerate((t1, t2, t3, t4)):
        w = math.copysign(math.sqrt(abs(t) / p.k_f), t)
        if abs(w) > p.rotor_max:
            clipped.append(f"rotor_{i + 1}")
            w = math.copysign(p.rotor_max, w)
        speeds[i] = w
    if abs(servo) > p.servo_max:
        clipped.append("servo")
        servo = math.copysign(p.servo_max, servo)

    if clipped and strict:
        raise SaturationError(
            f"actuator limits exceeded on: {', '.join(clipped)}", channels=clipped
        )
    return ActuatorCommand(rotor_speeds=speeds, servo=servo)


def forward_mix(cmd: ActuatorCommand, p: VehicleParams) -> AerialInput:
    """Forward mixing model: actuator command back to thrust and torques.

    Exact inverse of :func:`allocate` for in-range commands.
    """
    w = cmd.rotor_speeds
    t = p.k_f * w * np.abs(w)
    c = float(t.sum()) / p.mass
    tau_x = p.arm * float(t[0] - t[1] + t[2] - t[3])
    tau_y = p.arm * float(-t[0] - t[1] + t[2] + t[3])
    tau_z = p.arm * cmd.servo * float(t[2] + t[3])
    return AerialInput(c=c, torque=np.array([tau_x, tau_y, tau_z]))


def aquatic_rotor_speeds(speed: float, p: VehicleParams) -> np.ndarray:
    """Equivalent rear-rotor speeds for a surge speed, from the drag balance.

    Thrust ``k_f * w^2`` per driven rotor balances half the quadratic drag
    ``AQUATIC_DRAG_GAIN * speed^2``. Front rotors idle.
    """
    t_each = 0.5 * AQUATIC_DRAG_GAIN * speed * speed
    w = math.sqrt(t_each / p.k_f)
    w = math.copysign(min(w, p.rotor_max), speed) if speed != 0.0 else 0.0
    return np.array([0.0, 0.0, w, w])
