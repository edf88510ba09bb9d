"""Closed-loop mission runner: plant, controllers, mode machine, logging.

``run`` wires the plant models, the active controller and the mode state
machine into one fixed-step loop.  The plant integrates at the base step,
controllers update at their own period, and the state machine is consulted
every controller tick through guard conditions on mission progress (arrival
radii, the hover-stability window, the touchdown envelope).  Reference
segments advance only when the vehicle satisfies the active segment's
guard, so every waypoint is actually visited.

Logs are plain arrays with a fixed column order and are written as CSV
through an atomic temp-file rename; identical inputs produce byte-identical
files.  ``compute_metrics`` reduces a log to per-segment tracking numbers
(RMS and peak error, per-axis overshoot and settling on step segments,
arrival times).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import Config
from .dynamics import (
    AerialInput,
    AquaticInput,
    TerrestrialInput,
    VehicleParams,
    VehicleState,
    allocate,
    aquatic_derivative,
    aquatic_rotor_speeds,
    aerial_step,
    forward_mix,
    step_rk4,
    terrestrial_derivative,
)
from .errors import ConfigError, DivergenceError, MissionError
from .fsm import (
    EventKind,
    Medium,
    ModeState,
    SubState,
    TransitionEvent,
    initial_state,
    step_fsm,
)
from .geometry import quat_from_yaw, quat_yaw, wrap_angle
from .mission import (
    Action,
    Mission,
    ReferenceGenerator,
    atomic_write,
    in_progress_mode,
    mission_events,
    segment_completion_event,
    segment_entry_events,
)
from .nmpc import NmpcController
from .pid import CascadePid

__all__ = [
    "LOG_COLUMNS",
    "RunLog",
    "SegmentMetrics",
    "TrackingMetrics",
    "run",
    "compute_metrics",
    "save_log",
    "save_metrics",
]

# CSV column order; fixed, and relied on by downstream tooling.
LOG_COLUMNS = (
    "t", "medium", "substate",
    "px", "py", "pz", "vx", "vy", "vz",
    "qw", "qx", "qy", "qz", "wx", "wy", "wz",
    "ref_x", "ref_y", "ref_z", "ref_yaw",
    "c", "tau_x", "tau_y", "tau_z",
    "w1", "w2", "w3", "w4",
    "servo", "cost", "iters",
)

# Guard thresholds for mission-progress events.
HOVER_POS_TOL = 0.3
HOVER_SPEED_TOL = 0.1
HOVER_WINDOW = 0.5
TOUCHDOWN_Z_TOL = 0.05
TOUCHDOWN_DESCENT_TOL = 0.2
# Intermediate surface stops wait until the drive command has decayed.
DRIVE_STOP_SPEED = 0.2

# Surface-drive steering laws: gains and limits.
_K_DIST = 2.0
_K_HEAD = 3.0
_TURN_RATE_MAX = 2.0
_STEER_MAX = 0.6
_CATCH_UP = 1.5

# A position this far out is treated as divergence: the site is 300 m long.
_POSITION_RUNAWAY = 1.0e3

# Step segments shorter than this per axis get no overshoot/settling figures.
_STEP_FLOOR = 1.0


@dataclass(frozen=True)
class RunLog:
    """One run's telemetry at controller-tick resolution.

    Attributes
    ----------
    t : ndarray
        Tick times, s; strictly increasing at the controller period.
    medium, substate : tuple of str
        Mode labels per tick.
    state : ndarray
        (n, 13) vehicle state rows.
    ref : ndarray
        (n, 4) position and yaw reference rows.
    inputs : ndarray
        (n, 4) applied wrench rows (collective accel, body torques).
    rotors : ndarray
        (n, 4) rotor speed commands, rad/s.
    servo : ndarray
        Commanded servo angle per tick, rad.
    cost, iters : ndarray
        Optimizer diagnostics; zero on ticks with no optimizer.
    segment : ndarray
        Active mission segment index per tick.
    transitions : tuple
        (time, old label, event label, new label) per mode transition.
    completed, time_limit_hit, diverged : bool
        How the run ended.
    """

    t: np.ndarray
    medium: tuple
    substate: tuple
    state: np.ndarray
    ref: np.ndarray
    inputs: np.ndarray
    rotors: np.ndarray
    servo: np.ndarray
    cost: np.ndarray
    iters: np.ndarray
    segment: np.ndarray
    transitions: tuple
    completed: bool
    time_limit_hit: bool
    diverged: bool

    def __len__(self) -> int:
        return int(self.t.size)


@dataclass(frozen=True)
class SegmentMetrics:
    """Tracking figures for one mission segment.

    Overshoot is per axis in percent of that axis's commanded step and
    settling is the time until the axis error stays below 2 percent of the
    step; axes whose step is shorter than a meter report zero overshoot
    and zero settling.  A segment that never settles reports infinity.
    """

    index: int
    action: str
    rms: float
    max_error: float
    overshoot: tuple
    settling: tuple
    arrival_time: float
    duration: float


@dataclass(frozen=True)
class TrackingMetrics:
    segments: tuple
    total_time: float

    def arrival_times(self) -> tuple:
        return tuple(s.arrival_time for s in self.segments)


def _surface_state_row(pose: np.ndarray, speed: float, turn_rate: float) -> np.ndarray:
    """Expand a planar (x, y, heading) pose into a 13-state log row."""
    x, y, heading = pose
    row = np.zeros(13)
    row[0:2] = (x, y)
    row[3] = speed * math.cos(heading)
    row[4] = speed * math.sin(heading)
    row[6:10] = quat_from_yaw(heading)
    row[12] = turn_rate
    return row


def _drive_terrestrial(pose: np.ndarray, ref: np.ndarray, cruise: float,
                       track_width: float) -> TerrestrialInput:
    """Differential-drive pursuit of the reference point."""
    dx = ref[0] - pose[0]
    dy = ref[1] - pose[1]
    dist = math.hypot(dx, dy)
    desired = math.atan2(dy, dx) if dist > 0.05 else ref[3]
    err = wrap_angle(desired - pose[2])
    speed = min(_K_DIST * dist, _CATCH_UP * cruise) * max(0.0, math.cos(err))
    turn = float(np.clip(_K_HEAD * err, -_TURN_RATE_MAX, _TURN_RATE_MAX))
    half = 0.5 * turn * track_width
    return TerrestrialInput(v_left=speed - half, v_right=speed + half)


def _drive_aquatic(pose: np.ndarray, ref: np.ndarray, cruise: float) -> AquaticInput:
    """Steered-surge pursuit; keeps way on while turning since the craft
    cannot yaw at zero speed."""
    dx = ref[0] - pose[0]
    dy = ref[1] - pose[1]
    dist = math.hypot(dx, dy)
    desired = math.atan2(dy, dx) if dist > 0.05 else ref[3]
    err = wrap_angle(desired - pose[2])
    speed = min(_K_DIST * dist, _CATCH_UP * cruise) * max(0.3, math.cos(err))
    if dist <= 0.05:
        speed = 0.0
    steer = float(np.clip(_K_HEAD * err, -_STEER_MAX, _STEER_MAX))
    return AquaticInput(speed=speed, steering=steer)


class _Runner:
    """Mutable loop state for one run; ``run`` drives it tick by tick."""

    def __init__(self, config: Config, mission: Mission, controller: str,
                 time_limit: float):
        self.cfg = config
        self.mission = mission
        self.controller = controller
        self.params = VehicleParams.from_config(config)
        scfg = config.sim
        self.tick = scfg.controller_period
        self.substeps = round(self.tick / config.dt)
        if abs(self.substeps * config.dt - self.tick) > 1e-12 or self.substeps < 1:
            raise ConfigError("controller period must be a multiple of dt")
        self.nmpc_every = round(config.nmpc.period / self.tick)
        if abs(self.nmpc_every * self.tick - config.nmpc.period) > 1e-12 \
                or self.nmpc_every < 1:
            raise ConfigError("solver period must be a multiple of the controller period")
        self.time_limit = time_limit

        self.mode = initial_state()
        self.pose = np.array([mission.start[0], mission.start[1], 0.0])
        self.x13: np.ndarray | None = None
        self.gen = ReferenceGenerator(mission, scfg)
        self.pid = CascadePid(config)
        self.nmpc = NmpcController(config) if controller == "nmpc" else None

        self.seg_idx = -1
        self.seg_t0 = 0.0
        self.stable_since: float | None = None
        self.start_z = float(mission.start[2])

        self.aerial_u = AerialInput(c=0.0, torque=np.zeros(3))
        self.realized_u = np.zeros(4)
        self.surface_u = None
        self.force_solve = True
        self.cost = 0.0
        self.iters = 0

        self.transitions: list = []
        self.rows_t: list = []
        self.rows_mode: list = []
        self.rows_state: list = []
        self.rows_ref: list = []
        self.rows_u: list = []
        self.rows_rot: list = []
        self.rows_servo: list = []
        self.rows_cost: list = []
        self.rows_iters: list = []
        self.rows_seg: list = []

    # -- state access -------------------------------------------------

    def position(self) -> np.ndarray:
        if self.mode.medium is Medium.AERIAL and self.x13 is not None:
            return self.x13[0:3]
        return np.array([self.pose[0], self.pose[1], 0.0])

    def speed(self) -> float:
        if self.mode.medium is Medium.AERIAL and self.x13 is not None:
            return float(np.linalg.norm(self.x13[3:6]))
        u = self.surface_u
        if isinstance(u, TerrestrialInput):
            return abs(0.5 * (u.v_left + u.v_right))
        if isinstance(u, AquaticInput):
            return abs(u.speed)
        return 0.0

    # -- mode transitions ----------------------------------------------

    def emit(self, event: TransitionEvent, t: float) -> None:
        old = self.mode
        new = step_fsm(old, event)
        if new == old:
            raise MissionError(
                f"event {event.label()} is illegal from {old.label()} at t={t:g}"
            )
        if event.kind is EventKind.GEAR_CONFIGURED:
            x13 = np.zeros(13)
            x13[0:2] = self.pose[0:2]
            x13[6:10] = quat_from_yaw(self.pose[2])
            self.x13 = x13
        elif event.kind is EventKind.ENTERED_WATER:
            yaw = quat_yaw(self.x13[6:10])
            self.pose = np.array([self.x13[0], self.x13[1], yaw])
            self.x13 = None
            self.surface_u = None
        elif event.kind is EventKind.TOUCHED_DOWN:
            yaw = quat_yaw(self.x13[6:10])
            x13 = np.zeros(13)
            x13[0:2] = self.x13[0:2]
            x13[6:10] = quat_from_yaw(yaw)
            self.x13 = x13
        if new.substate is SubState.TAKEOFF and old.substate is not SubState.TAKEOFF:
            self.pid.reset()
            if self.nmpc is not None:
                self.nmpc.reset()
            self.force_solve = True
        self.mode = new
        self.transitions.append((t, old.label(), event.label(), new.label()))

    def advance(self, index: int, t: float) -> None:
        seg = self.mission.segments[index]
        for event in segment_entry_events(self.mode, seg, self.start_z):
            self.emit(event, t)
        wanted = in_progress_mode(seg, self.start_z)
        if (self.mode.medium, self.mode.substate) != wanted:
            raise MissionError(
                f"segment {index}: {seg.action.value} cannot run from "
                f"{self.mode.label()}"
            )
        start_point = self.mission.start if index == 0 \
            else self.mission.segments[index - 1].target
        self.gen.activate(index, t, start_point)
        self.seg_idx = index
        self.seg_t0 = t
        self.stable_since = None

    def segment_complete(self, t: float) -> bool:
        seg = self.mission.segments[self.seg_idx]
        target = seg.target
        pos = self.position()
        dist = float(np.linalg.norm(pos - target))
        radius = self.cfg.sim.arrival_radius
        if self.seg_idx == len(self.mission.segments) - 1:
            return dist < radius
        if seg.action is Action.DRIVE:
            return dist < radius and self.speed() < DRIVE_STOP_SPEED
        if seg.action is Action.TAKEOFF:
            if dist < HOVER_POS_TOL and self.speed() < HOVER_SPEED_TOL:
                if self.stable_since is None:
                    self.stable_since = t
                return t - self.stable_since >= HOVER_WINDOW
            self.stable_since = None
            return False
        if seg.action is Action.HOVER:
            return (t - self.seg_t0 >= seg.hold and dist < HOVER_POS_TOL
                    and self.speed() < HOVER_SPEED_TOL)
        if seg.action is Action.LAND:
            lateral = math.hypot(pos[0] - target[0], pos[1] - target[1])
            descent = -float(self.x13[5])
            return (abs(pos[2] - target[2]) <= TOUCHDOWN_Z_TOL
                    and descent < TOUCHDOWN_DESCENT_TOL and lateral < radius)
        return dist < radius

    def progress(self, t: float) -> bool:
        """Advance the mission at tick ``t``; True when the route is done."""
        guard = len(self.mission.segments) + 2
        for _ in range(guard):
            if self.seg_idx < 0:
                if not self.mission.segments:
                    return True
                self.advance(0, t)
                continue
            if not self.segment_complete(t):
                return False
            if self.seg_idx == len(self.mission.segments) - 1:
                return True
            seg = self.mission.segments[self.seg_idx]
            event = segment_completion_event(
                seg, self.mission.segments[self.seg_idx + 1], self.seg_idx
            )
            if event is not None:
                self.emit(event, t)
            self.start_z = float(seg.target[2])
            self.advance(self.seg_idx + 1, t)
        raise MissionError("mission made no progress within one tick")

    # -- controllers ----------------------------------------------------

    def control(self, t: float, k: int, ref: np.ndarray) -> None:
        mode = self.mode
        scfg = self.cfg.sim
        if mode.medium is Medium.TERRESTRIAL:
            if mode.substate is SubState.DRIVING:
                self.surface_u = _drive_terrestrial(
                    self.pose, ref, scfg.cruise_ground, self.params.track_width
                )
            else:
                self.surface_u = TerrestrialInput(0.0, 0.0)
            self.cost, self.iters = 0.0, 0
            return
        if mode.medium is Medium.AQUATIC:
            if mode.substate is SubState.DRIVING:
                self.surface_u = _drive_aquatic(self.pose, ref, scfg.cruise_water)
            else:
                self.surface_u = AquaticInput(0.0, 0.0)
            self.cost, self.iters = 0.0, 0
            return
        if mode.substate is SubState.STATIC:
            self.aerial_u = AerialInput(c=0.0, torque=np.zeros(3))
            self.cost, self.iters = 0.0, 0
            return
        state = VehicleState.from_vector(self.x13)
        if self.nmpc is not None:
            if k % self.nmpc_every == 0 or self.force_solve:
                refs = self.gen.preview(t, self.cfg.nmpc.horizon + 1,
                                        self.cfg.nmpc.period)
                self.aerial_u = self.nmpc.step(state, refs)
                sol = self.nmpc.last_solution
                self.cost = float(sol.cost) if sol is not None else 0.0
                self.iters = int(sol.iterations) if sol is not None else 0
                self.force_solve = False
        else:
            self.aerial_u = self.pid.step(state, ref[:3], ref[3], self.tick)
            self.cost, self.iters = 0.0, 0

    def actuators(self) -> tuple:
        """Realize the held command: (applied wrench, rotor speeds, servo).

        Aerial commands pass through allocation with clipping and back
        through the forward mix, so the logged wrench and the wrench the
        plant integrates both honor the actuator limits.
        """
        mode = self.mode
        if mode.medium is Medium.AERIAL:
            if mode.substate is SubState.STATIC:
                self.realized_u = np.zeros(4)
                return np.zeros(4), np.zeros(4), mode.servo
            cmd = allocate(self.aerial_u, self.params, strict=False)
            applied = forward_mix(cmd, self.params)
            wrench = np.array([applied.c, applied.torque[0],
                               applied.torque[1], applied.torque[2]])
            self.realized_u = wrench
            return wrench, cmd.rotor_speeds, cmd.servo
        if mode.medium is Medium.AQUATIC and isinstance(self.surface_u, AquaticInput):
            rotors = aquatic_rotor_speeds(self.surface_u.speed, self.params)
            return np.zeros(4), rotors, mode.servo
        return np.zeros(4), np.zeros(4), mode.servo

    def integrate(self) -> None:
        mode = self.mode
        dt = self.cfg.dt
        if mode.medium is Medium.AERIAL:
            if mode.substate is SubState.STATIC:
                return
            u_vec = self.realized_u
            x = self.x13
            for _ in range(self.substeps):
                x = aerial_step(x, u_vec, self.params, dt)
            self.x13 = x
            if not np.all(np.isfinite(x)) or np.any(np.abs(x[0:3]) > _POSITION_RUNAWAY):
                raise DivergenceError("aerial state diverged", state=x)
            return
        if mode.substate is not SubState.DRIVING:
            return
        rhs = terrestrial_derivative if mode.medium is Medium.TERRESTRIAL \
            else aquatic_derivative
        model = lambda s, u: rhs(s, u, self.params)  # noqa: E731
        pose = self.pose
        for _ in range(self.substeps):
            pose = step_rk4(model, pose, self.surface_u, dt)
        self.pose = pose
        if not np.all(np.isfinite(pose)):
            raise DivergenceError("surface pose diverged", state=pose)

    def log_row(self, t: float, ref: np.ndarray) -> None:
        mode = self.mode
        wrench, rotors, servo = self.actuators()
        if mode.medium is Medium.AERIAL:
            state = self.x13.copy()
        else:
            u = self.surface_u
            if isinstance(u, TerrestrialInput):
                speed = 0.5 * (u.v_left + u.v_right)
                turn = (u.v_right - u.v_left) / self.params.track_width
            elif isinstance(u, AquaticInput):
                speed = u.speed
                turn = u.speed * math.tan(u.steering) / self.params.wheelbase
            else:
                speed, turn = 0.0, 0.0
            state = _surface_state_row(self.pose, speed, turn)
        self.rows_t.append(t)
        self.rows_mode.append((mode.medium.value, mode.substate.value))
        self.rows_state.append(state)
        self.rows_ref.append(ref.copy())
        self.rows_u.append(wrench)
        self.rows_rot.append(rotors)
        self.rows_servo.append(servo)
        self.rows_cost.append(self.cost)
        self.rows_iters.append(self.iters)
        self.rows_seg.append(max(self.seg_idx, 0))

    def build_log(self, completed: bool, time_limit_hit: bool,
                  diverged: bool) -> RunLog:
        n = len(self.rows_t)
        media = tuple(m for m, _ in self.rows_mode)
        subs = tuple(s for _, s in self.rows_mode)
        return RunLog(
            t=np.array(self.rows_t),
            medium=media,
            substate=subs,
            state=np.array(self.rows_state).reshape(n, 13),
            ref=np.array(self.rows_ref).reshape(n, 4),
            inputs=np.array(self.rows_u).reshape(n, 4),
            rotors=np.array(self.rows_rot).reshape(n, 4),
            servo=np.array(self.rows_servo),
            cost=np.array(self.rows_cost),
            iters=np.array(self.rows_iters, dtype=int),
            segment=np.array(self.rows_seg, dtype=int),
            transitions=tuple(self.transitions),
            completed=completed,
            time_limit_hit=time_limit_hit,
            diverged=diverged,
        )


def run(config: Config, mission: Mission, controller: str = "pid",
        time_limit: float | None = None) -> RunLog:
    """Simulate ``mission`` closed loop and return the telemetry log.

    Parameters
    ----------
    config : Config
        Full configuration; the plant steps at ``config.dt``, controllers
        at their own periods.
    mission : Mission
        Route to fly; validated against the transition table up front.
    controller : str
        "pid" for the cascade controller everywhere, "nmpc" to use the
        predictive controller in aerial modes (surface modes always use
        the simple drive laws).
    time_limit : float, optional
        Simulated-seconds budget; defaults to the configured limit.

    Returns
    -------
    RunLog
        Completed, time-limited or diverged telemetry; a divergence
        returns the partial log accumulated so far rather than raising.

    Raises
    ------
    ValueError
        If ``controller`` is not "pid" or "nmpc".
    MissionError
        If the mission cannot be realized by the transition table.
    """
    if controller not in ("pid", "nmpc"):
        raise ValueError(f"unknown controller '{controller}'")
    mission_events(mission)
    limit = config.sim.time_limit if time_limit is None else float(time_limit)
    runner = _Runner(config, mission, controller, limit)

    completed = False
    time_limit_hit = False
    diverged = False
    k = 0
    while True:
        t = k * runner.tick
        try:
            done = runner.progress(t)
            ref = runner.gen.step(t, runner.tick)
            runner.control(t, k, ref)
            runner.log_row(t, ref)
            if done:
                completed = True
                break
            if t >= limit:
                time_limit_hit = True
                break
            runner.integrate()
        except DivergenceError:
            diverged = True
            break
        k += 1
    return runner.build_log(completed, time_limit_hit, diverged)


def compute_metrics(log: RunLog, mission: Mission) -> TrackingMetrics:
    """Per-segment tracking metrics for a completed or partial run.

    Raises
    ------
    ValueError
        If the log carries no reference rows to measure against.
    """
    if len(log) == 0 or log.ref.shape[0] == 0:
        raise ValueError("log has no reference rows")
    per_segment = []
    for index, seg in enumerate(mission.segments):
        mask = log.segment == index
        if not np.any(mask):
            continue
        pos = log.state[mask][:, 0:3]
        ref = log.ref[mask][:, 0:3]
        times = log.t[mask]
        err = pos - ref
        rms = float(np.sqrt(np.mean(np.sum(err * err, axis=1))))
        max_error = float(np.max(np.linalg.norm(err, axis=1)))
        overshoot = []
        settling = []
        for axis in range(3):
            step = float(seg.target[axis] - ref[0, axis])
            if abs(step) < _STEP_FLOOR:
                overshoot.append(0.0)
                settling.append(0.0)
                continue
            direction = math.copysign(1.0, step)
            beyond = direction * (pos[:, axis] - seg.target[axis])
            overshoot.append(100.0 * max(0.0, float(np.max(beyond))) / abs(step))
            tol = 0.02 * abs(step)
            outside = np.abs(pos[:, axis] - seg.target[axis]) >= tol
            if not np.any(outside):
                settling.append(0.0)
            else:
                last_bad = int(np.max(np.nonzero(outside)[0]))
                if last_bad + 1 >= times.size:
                    settling.append(math.inf)
                else:
                    settling.append(float(times[last_bad + 1] - times[0]))
        per_segment.append(SegmentMetrics(
            index=index,
            action=seg.action.value,
            rms=rms,
            max_error=max_error,
            overshoot=tuple(overshoot),
            settling=tuple(settling),
            arrival_time=float(times[-1]),
            duration=float(times[-1] - times[0]),
        ))
    total = float(log.t[-1]) if len(log) else 0.0
    return TrackingMetrics(segments=tuple(per_segment), total_time=total)


def _fmt(value) -> str:
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    return str(value)


def save_log(log: RunLog, path) -> None:
    """Write the log as CSV with the documented column order, atomically."""
    lines = [",".join(LOG_COLUMNS)]
    for i in range(len(log)):
        s = log.state[i]
        r = log.ref[i]
        u = log.inputs[i]
        w = log.rotors[i]
        cells = [_fmt(log.t[i]), log.medium[i], log.substate[i]]
        cells += [_fmt(v) for v in s]
        cells += [_fmt(v) for v in r]
        cells += [_fmt(v) for v in u]
        cells += [_fmt(v) for v in w]
        cells += [_fmt(log.servo[i]), _fmt(log.cost[i]), str(int(log.iters[i]))]
        lines.append(",".join(cells))
    atomic_write(path, "\n".join(lines) + "\n")


def save_metrics(metrics: TrackingMetrics, log: RunLog, path) -> None:
    """Write metrics plus run outcome and the mode trace as key = value lines."""
    lines = [
        f"completed = {str(log.completed).lower()}",
        f"time_limit_hit = {str(log.time_limit_hit).lower()}",
        f"diverged = {str(log.diverged).lower()}",
        f"total_time_s = {_fmt(metrics.total_time)}",
        f"segments_logged = {len(metrics.segments)}",
    ]
    for seg in metrics.segments:
        prefix = f"seg{seg.index}_{seg.action}"
        lines.append(f"{prefix}_rms_m = {_fmt(seg.rms)}")
        lines.append(f"{prefix}_max_error_m = {_fmt(seg.max_error)}")
        for axis, name in enumerate(("x", "y", "z")):
            lines.append(
                f"{prefix}_overshoot_{name}_pct = {_fmt(seg.overshoot[axis])}"
            )
            lines.append(
                f"{prefix}_settling_{name}_s = {_fmt(seg.settling[axis])}"
            )
        lines.append(f"{prefix}_arrival_s = {_fmt(seg.arrival_time)}")
        lines.append(f"{prefix}_duration_s = {_fmt(seg.duration)}")
    for j, (t, old, event, new) in enumerate(log.transitions):
        lines.append(f"transition_{j:02d} = {_fmt(t)} {old} -> {new} ({event})")
    atomic_write(path, "\n".join(lines) + "\n")
