"""Cascade PID control for the aerial mode.

Structure: an outer position loop turns position error into a collective
thrust command and small-angle roll/pitch references; an inner attitude loop
turns attitude error into body torques. Both loops share one discrete PID
primitive:

    output = Kp * e + Ki * clamp(integral of e) + Kd * (e - e_prev) / dt

The derivative is a backward difference on the error and is zero on the
first step after a reset. The integral accumulator is clamped symmetrically
(anti-windup). All saturations in the loops are silent: commands are clipped
and execution continues.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import GRAVITY, Config, PidChannelGains, PidConfig
from .dynamics import AerialInput, VehicleState
from .geometry import quat_roll_pitch, quat_yaw, wrap_angle

__all__ = [
    "PidChannelState",
    "pid_step",
    "position_loop",
    "attitude_loop",
    "CascadePid",
]

log = logging.getLogger(__name__)

# Collective thrust command ceiling, in multiples of gravity.
_C_MAX_G = 3.0


@dataclass(frozen=True)
class PidChannelState:
    """Per-channel controller memory.

    ``prev_error`` is None right after a reset, which makes the first
    derivative term zero by definition.
    """

    integral: float = 0.0
    prev_error: float | None = None


def pid_step(
    state: PidChannelState,
    gains: PidChannelGains,
    error: float,
    dt: float,
    windup_limit: float = 1.0,
) -> tuple[float, PidChannelState]:
    """One discrete PID update for a single channel.

    Parameters
    ----------
    state : PidChannelState
        Channel memory from the previous step.
    gains : PidChannelGains
        Proportional/integral/derivative gains.
    error : float
        Current error (reference minus measurement).
    dt : float
        Time since the previous update, s; must be positive.
    windup_limit : float
        Symmetric clamp applied to the integral accumulator.

    Returns
    -------
    (float, PidChannelState)
        Control output and the updated channel memory.
    """
    if not (math.isfinite(error) and math.isfinite(dt)):
        raise ValueError("error and dt must be finite")
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    integral = state.integral + error * dt
    integral = max(-windup_limit, min(windup_limit, integral))
    if state.prev_error is None:
        derivative = 0.0
    else:
        derivative = (error - state.prev_error) / dt
    output = gains.p * error + gains.i * integral + gains.d * derivative
    return output, PidChannelState(integral=integral, prev_error=error)


def position_loop(
    position_error: np.ndarray,
    yaw: float,
    states: tuple[PidChannelState, PidChannelState, PidChannelState],
    cfg: PidConfig,
    dt: float,
    g_z: float = GRAVITY,
):
    """Outer loop: position error to thrust and attitude references.

    The three channel PIDs produce a desired world acceleration
    ``(ax, ay, az)``. Vertical: ``c = g_z + az`` (clipped to [0, 3g]).
    Horizontal: small-angle inversion of the thrust direction, rotated by
    the current yaw::

        pitch_ref = (ax cos(yaw) + ay sin(yaw)) / g_z
        roll_ref  = (ax sin(yaw) - ay cos(yaw)) / g_z

    both clipped to ``cfg.tilt_limit``.

    Returns
    -------
    ((c, roll_ref, pitch_ref), new_states)
    """
    position_error = np.asarray(position_error, dtype=float)
    if position_error.shape != (3,):
        raise ValueError("position_error must have shape (3,)")
    accel = np.empty(3)
    new_states = []
    for i, gains in enumerate((cfg.x, cfg.y, cfg.z)):
        accel[i], st = pid_step(
            states[i], gains, float(position_error[i]), dt, cfg.windup_limit
        )
        new_states.append(st)

    c = g_z + accel[2]
    c_max = _C_MAX_G * g_z
    if c < 0.0 or c > c_max:
        log.debug("thrust command %.3f clipped to [0, %.3f]", c, c_max)
        c = max(0.0, min(c_max, c))

    cy, sy = math.cos(yaw), math.sin(yaw)
    pitch_ref = (accel[0] * cy + accel[1] * sy) / g_z
    roll_ref = (accel[0] * sy - accel[1] * cy) / g_z
    lim = cfg.tilt_limit
    if abs(pitch_ref) > lim or abs(roll_ref) > lim:
        log.debug("attitude reference clipped to +/-%.3f rad", lim)
    pitch_ref = max(-lim, min(lim, pitch_ref))
    roll_ref = max(-lim, min(lim, roll_ref))
    return (c, roll_ref, pitch_ref), tuple(new_states)


def attitude_loop(
    attitude_error: np.ndarray,
    states: tuple[PidChannelState, PidChannelState, PidChannelState],
    cfg: PidConfig,
    dt: float,
):
    """Inner loop: attitude error (roll, pitch, yaw) to body torques.

    The yaw component is wrapped to (-pi, pi] before the PID so the vehicle
    always turns the short way. Torques are clipped to ``cfg.torque_limit``.

    Returns
    -------
    (torque, new_states)
    """
    attitude_error = np.asarray(attitude_error, dtype=float)
    if attitude_error.shape != (3,):
        raise ValueError("attitude_error must have shape (3,)")
    errors = (
        float(attitude_error[0]),
        float(attitude_error[1]),
        wrap_angle(float(attitude_error[2])),
    )
    torque = np.empty(3)
    new_states = []
    for i, gains in enumerate((cfg.roll, cfg.pitch, cfg.yaw)):
        torque[i], st = pid_step(states[i], gains, errors[i], dt, cfg.windup_limit)
        new_states.append(st)
    lim = cfg.torque_limit
    if np.abs(torque).max() > lim:
        log.debug("torque command clipped to +/-%.3f N*m", lim)
        torque = np.clip(torque, -lim, lim)
    return torque, tuple(new_states)


class CascadePid:
    """Stateful cascade controller: position references in, AerialInput out."""

    def __init__(self, cfg: Config):
        self._pid = cfg.pid
        self._g_z = GRAVITY
        self.reset()

    def reset(self) -> None:
        """Clear all channel memory (integrals and derivative history)."""
        self._pos_states = (PidChannelState(), PidChannelState(), PidChannelState())
        self._att_states = (PidChannelState(), PidChannelState(), PidChannelState())

    def step(
        self,
        state: VehicleState,
        ref_position: np.ndarray,
        ref_yaw: float,
        dt: float,
    ) -> AerialInput:
        """One controller update at the controller rate."""
        ref_position = np.asarray(ref_position, dtype=float)
        pos_err = ref_position - state.position
        yaw = quat_yaw(state.quaternion)
        (c, roll_ref, pitch_ref), self._pos_states = position_loop(
            pos_err, yaw, self._pos_states, self._pid, dt, self._g_z
        )
        roll, pitch = quat_roll_pitch(state.quaternion)
        att_err = np.array([roll_ref - roll, pitch_ref - pitch, ref_yaw - yaw])
        torque, self._att_states = attitude_loop(att_err, self._att_states, self._pid, dt)
        return AerialInput(c=c, torque=torque)
