"""Missions, the built-in ground-air-water route, and reference generation.

A mission is an ordered list of segments, each tagged with a medium, an
action, a target waypoint and an optional hover hold.  Segment media must
agree with the site layout, which splits the world by x coordinate into a
ground band (0 to 100 m), a flight band (100 to 200 m) and a water band
(200 to 300 m).

The reference generator turns the active segment into a smooth setpoint
stream: positions ramp along straight legs at the configured cruise speed
for the medium, takeoffs climb vertically before any lateral move, landings
move laterally above the pad before descending, and the yaw reference slews
toward the path heading at a bounded rate so it never jumps.

``mission_events`` derives the nominal state-machine event sequence for a
mission, which the simulator fires through guard conditions and the CLI
replays for validation.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import yaml

from .config import SimConfig
from .errors import MissionError
from .fsm import (
    CommandId,
    EventKind,
    Medium,
    ModeState,
    SubState,
    TransitionEvent,
    initial_state,
    step_fsm,
)
from .geometry import wrap_angle

__all__ = [
    "Action",
    "Segment",
    "Mission",
    "MEDIUM_BANDS",
    "atomic_write",
    "builtin_mission",
    "load_mission",
    "save_mission",
    "segment_entry_events",
    "segment_completion_event",
    "in_progress_mode",
    "mission_events",
    "final_mode",
    "ReferenceGenerator",
]

# Site layout: per-medium [x_min, x_max] bands, m.
MEDIUM_BANDS = {
    Medium.TERRESTRIAL: (0.0, 100.0),
    Medium.AERIAL: (100.0, 200.0),
    Medium.AQUATIC: (200.0, 300.0),
}


class Action(Enum):
    DRIVE = "drive"
    TAKEOFF = "takeoff"
    FLY_TO = "fly_to"
    HOVER = "hover"
    LAND = "land"


_SURFACE_ACTIONS = frozenset({Action.DRIVE})
_AERIAL_ACTIONS = frozenset({Action.TAKEOFF, Action.FLY_TO, Action.HOVER, Action.LAND})

# Final approach of a landing: slow from the descent speed this far above
# the target so the touchdown envelope is reachable without plunging past it.
_FLARE_ALTITUDE = 2.0
_FLARE_SPEED = 0.5


@dataclass(frozen=True)
class Segment:
    """One mission leg: do ``action`` in ``medium`` toward ``target``.

    Parameters
    ----------
    medium : Medium
        Medium the segment runs in; must match the action and the site
        band for the target's x coordinate.
    action : Action
        DRIVE on a surface, or TAKEOFF / FLY_TO / HOVER / LAND in the air.
    target : ndarray
        Waypoint (x, y, z), m.
    hold : float
        Dwell time at the target for HOVER segments, s.

    Raises
    ------
    MissionError
        On a non-finite target, a target outside the medium's band, a
        medium/action mismatch, a surface target off the surface, or a
        negative hold.
    """

    medium: Medium
    action: Action
    target: np.ndarray
    hold: float = 0.0

    def __post_init__(self):
        target = np.asarray(self.target, dtype=float).reshape(-1).copy()
        if target.shape != (3,) or not np.all(np.isfinite(target)):
            raise MissionError("segment target must be a finite (x, y, z) waypoint")
        target.flags.writeable = False
        object.__setattr__(self, "target", target)
        if not math.isfinite(self.hold) or self.hold < 0.0:
            raise MissionError("segment hold must be finite and nonnegative")
        if self.action in _SURFACE_ACTIONS:
            if self.medium is Medium.AERIAL:
                raise MissionError("drive segments must be terrestrial or aquatic")
            if target[2] != 0.0:
                raise MissionError("drive segment targets must lie on the surface")
        elif self.medium is not Medium.AERIAL:
            raise MissionError(f"{self.action.value} segments must be aerial")
        lo, hi = MEDIUM_BANDS[self.medium]
        if not lo <= target[0] <= hi:
            raise MissionError(
                f"target x={target[0]:g} outside the {self.medium.value} "
                f"band [{lo:g}, {hi:g}]"
            )


@dataclass(frozen=True)
class Mission:
    """Ordered segments plus the start position of the vehicle."""

    segments: tuple[Segment, ...]
    start: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        start = np.asarray(self.start, dtype=float).reshape(-1).copy()
        if start.shape != (3,) or not np.all(np.isfinite(start)):
            raise MissionError("mission start must be a finite (x, y, z) point")
        start.flags.writeable = False
        object.__setattr__(self, "start", start)

    def __len__(self) -> int:
        return len(self.segments)


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file and rename.

    An interrupted write never leaves a truncated file at ``path``.
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".cyclosim-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def builtin_mission(hold: float = 2.0) -> Mission:
    """The ground-air-water demonstration route.

    Drive from the origin to (100, 0, 0), take off to 100 m, fly to
    (200, 100, 150) and hover, descend past (150, 80, 100) and hover
    again, land on the water at (200, 0, 0), then drive on the surface to
    (300, 100, 0).
    """
    seg = Segment
    return Mission(
        segments=(
            seg(Medium.TERRESTRIAL, Action.DRIVE, np.array([100.0, 0.0, 0.0])),
            seg(Medium.AERIAL, Action.TAKEOFF, np.array([100.0, 0.0, 100.0])),
            seg(Medium.AERIAL, Action.FLY_TO, np.array([200.0, 100.0, 150.0])),
            seg(Medium.AERIAL, Action.HOVER, np.array([200.0, 100.0, 150.0]), hold=hold),
            seg(Medium.AERIAL, Action.FLY_TO, np.array([150.0, 80.0, 100.0])),
            seg(Medium.AERIAL, Action.HOVER, np.array([150.0, 80.0, 100.0]), hold=hold),
            seg(Medium.AERIAL, Action.LAND, np.array([200.0, 0.0, 0.0])),
            seg(Medium.AQUATIC, Action.DRIVE, np.array([300.0, 100.0, 0.0])),
        ),
        start=np.zeros(3),
    )


def load_mission(path) -> Mission:
    """Read a mission from a YAML file.

    The file holds ``start`` (optional, default origin) and ``segments``,
    each record with ``medium``, ``action``, ``target`` and optional
    ``hold``.

    Raises
    ------
    MissionError
        If the file cannot be read or parsed, or any record is invalid;
        record errors name the segment index.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise MissionError(f"cannot read mission file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise MissionError(f"malformed mission file {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise MissionError("mission file must hold a mapping")
    unknown = set(raw) - {"start", "segments"}
    if unknown:
        raise MissionError(f"unknown mission keys: {sorted(unknown)}")
    records = raw.get("segments") or []
    if not isinstance(records, list):
        raise MissionError("mission 'segments' must be a list")
    segments = []
    for i, rec in enumerate(records):
        try:
            segments.append(_segment_from_record(rec))
        except MissionError as exc:
            raise MissionError(f"segment {i}: {exc}") from exc
    try:
        return Mission(segments=tuple(segments), start=raw.get("start", np.zeros(3)))
    except MissionError as exc:
        raise MissionError(f"mission file {path}: {exc}") from exc


def _segment_from_record(rec) -> Segment:
    if not isinstance(rec, dict):
        raise MissionError("segment record must be a mapping")
    unknown = set(rec) - {"medium", "action", "target", "hold"}
    if unknown:
        raise MissionError(f"unknown keys {sorted(unknown)}")
    for key in ("medium", "action", "target"):
        if key not in rec:
            raise MissionError(f"missing key '{key}'")
    try:
        medium = Medium(rec["medium"])
    except ValueError:
        raise MissionError(f"unknown medium '{rec['medium']}'") from None
    try:
        action = Action(rec["action"])
    except ValueError:
        raise MissionError(f"unknown action '{rec['action']}'") from None
    hold = rec.get("hold", 0.0)
    if not isinstance(hold, (int, float)) or isinstance(hold, bool):
        raise MissionError("hold must be a number")
    target = rec["target"]
    if not isinstance(target, (list, tuple)) or len(target) != 3 or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in target
    ):
        raise MissionError("target must be a 3-number list")
    return Segment(medium=medium, action=action, target=np.array(target, dtype=float),
                   hold=float(hold))


def save_mission(mission: Mission, path) -> None:
    """Write ``mission`` to a YAML file (atomically, temp file + rename)."""
    records = [
        {
            "medium": seg.medium.value,
            "action": seg.action.value,
            "target": [float(v) for v in seg.target],
            "hold": float(seg.hold),
        }
        for seg in mission.segments
    ]
    payload = {"start": [float(v) for v in mission.start], "segments": records}
    atomic_write(path, yaml.safe_dump(payload, sort_keys=False))


def in_progress_mode(segment: Segment, start_z: float) -> tuple[Medium, SubState]:
    """The mode the vehicle holds while flying/driving ``segment``.

    ``start_z`` is the altitude the segment starts from; a FLY_TO below it
    is a descent and runs in the landing sub-state.
    """
    if segment.action is Action.DRIVE:
        return (segment.medium, SubState.DRIVING)
    if segment.action is Action.TAKEOFF:
        return (Medium.AERIAL, SubState.TAKEOFF)
    if segment.action is Action.LAND:
        return (Medium.AERIAL, SubState.LANDING)
    if segment.action is Action.FLY_TO and segment.target[2] < start_z:
        return (Medium.AERIAL, SubState.LANDING)
    return (Medium.AERIAL, SubState.HOVERING)


def segment_entry_events(
    state: ModeState, segment: Segment, start_z: float
) -> list[TransitionEvent]:
    """Events that move the machine from ``state`` into the segment's mode.

    Returns the (possibly empty) event list; it does not check legality.
    The fold in :func:`mission_events` rejects sequences the transition
    table cannot realize.
    """
    ev = TransitionEvent
    events: list[TransitionEvent] = []
    if segment.action is Action.DRIVE:
        events.append(ev(EventKind.COMMAND, CommandId.DRIVE))
    elif segment.action is Action.TAKEOFF:
        if state.medium is not Medium.AERIAL:
            events.append(ev(EventKind.GEAR_CONFIGURED))
        events.append(ev(EventKind.COMMAND, CommandId.TAKEOFF))
    elif segment.action is Action.LAND:
        if state.substate is SubState.HOVERING:
            events.append(ev(EventKind.COMMAND, CommandId.LAND))
    else:
        wanted = in_progress_mode(segment, start_z)[1]
        if wanted is SubState.LANDING and state.substate is SubState.HOVERING:
            events.append(ev(EventKind.COMMAND, CommandId.LAND))
        elif wanted is SubState.HOVERING and state.substate is SubState.LANDING:
            events.append(ev(EventKind.COMMAND, CommandId.HOVER))
    return events


def segment_completion_event(
    segment: Segment, next_segment: Segment | None, index: int
) -> TransitionEvent | None:
    """The event fired when ``segment`` finishes, or None for fly/hover legs."""
    ev = TransitionEvent
    if segment.action is Action.DRIVE:
        return ev(EventKind.REACHED_WAYPOINT, index)
    if segment.action is Action.TAKEOFF:
        return ev(EventKind.HOVER_STABLE)
    if segment.action is Action.LAND:
        if next_segment is not None and next_segment.medium is Medium.AQUATIC:
            return ev(EventKind.ENTERED_WATER)
        return ev(EventKind.TOUCHED_DOWN)
    return None


def mission_events(mission: Mission) -> list[TransitionEvent]:
    """Nominal state-machine event sequence for ``mission``.

    Folds entry and completion events for every segment through the
    transition table, starting parked on the ground.  The final segment's
    completion event is omitted: a run ends at the last waypoint with the
    segment's mode still active.

    Raises
    ------
    MissionError
        If any segment requires a transition the table does not allow
        (for example an aerial leg before any takeoff); the message names
        the segment index.
    """
    state = initial_state()
    events: list[TransitionEvent] = []
    start_z = float(mission.start[2])
    for i, seg in enumerate(mission.segments):
        for e in segment_entry_events(state, seg, start_z):
            nxt = step_fsm(state, e)
            if nxt == state:
                raise MissionError(
                    f"segment {i}: event {e.label()} is illegal from {state.label()}"
                )
            state = nxt
            events.append(e)
        wanted = in_progress_mode(seg, start_z)
        if (state.medium, state.substate) != wanted:
            raise MissionError(
                f"segment {i}: {seg.action.value} cannot run from {state.label()}"
            )
        if i + 1 < len(mission.segments):
            comp = segment_completion_event(seg, mission.segments[i + 1], i)
            if comp is not None:
                nxt = step_fsm(state, comp)
                if nxt == state:
                    raise MissionError(
                        f"segment {i}: event {comp.label()} is illegal "
                        f"from {state.label()}"
                    )
                state = nxt
                events.append(comp)
        start_z = float(seg.target[2])
    return events


def final_mode(mission: Mission) -> tuple[Medium, SubState]:
    """Mode the vehicle should be in when the mission's last leg runs."""
    if not mission.segments:
        s = initial_state()
        return (s.medium, s.substate)
    start_z = float(mission.start[2]) if len(mission.segments) == 1 else float(
        mission.segments[-2].target[2]
    )
    return in_progress_mode(mission.segments[-1], start_z)


def _slew(current: float, desired: float, max_delta: float) -> float:
    """Move ``current`` toward ``desired`` by at most ``max_delta``, wrapped."""
    delta = wrap_angle(desired - current)
    if abs(delta) <= max_delta:
        return wrap_angle(desired)
    return wrap_angle(current + math.copysign(max_delta, delta))


class ReferenceGenerator:
    """Setpoint stream for one run: position ramps plus a slewed yaw.

    One segment is active at a time; :meth:`activate` arms it with its
    start point and clock origin, :meth:`step` advances the yaw state and
    returns the reference for the current tick, and :meth:`preview`
    samples the schedule ahead without mutating anything.

    Position references move along straight legs at the medium's cruise
    speed and clamp at the segment target, so consecutive ticks never
    differ by more than cruise speed times the tick length.  Yaw follows
    the horizontal path heading on driving and flying legs, holds during
    hovers and vertical legs, and slews at the configured rate.
    """

    def __init__(self, mission: Mission, cfg: SimConfig):
        self._mission = mission
        self._cfg = cfg
        self._legs: list[tuple[np.ndarray, np.ndarray, float, float]] = []
        self._t0 = 0.0
        self._end_point = np.array(mission.start, dtype=float)
        self._yaw = 0.0
        self._action: Action | None = None
        self._index: int | None = None

    @property
    def yaw(self) -> float:
        return self._yaw

    def _leg_speed(self, segment: Segment) -> float:
        if segment.action is Action.DRIVE:
            if segment.medium is Medium.TERRESTRIAL:
                return self._cfg.cruise_ground
            return self._cfg.cruise_water
        return self._cfg.cruise_air

    def activate(self, index: int, t: float, start_point: np.ndarray) -> None:
        """Arm segment ``index`` with its schedule starting at time ``t``.

        The first activation anchors at ``start_point``.  Later ones anchor
        at the currently scheduled position, which equals the previous
        target once that schedule has finished; when a segment is cut short
        early the reference stream still stays continuous.
        """
        seg = self._mission.segments[index]
        if self._index is None:
            p0 = np.array(start_point, dtype=float)
        else:
            p0 = self._sample(t)[0]
        self._index = index
        target = np.array(seg.target, dtype=float)
        cruise = self._leg_speed(seg)
        points: list[tuple[np.ndarray, np.ndarray, float]] = []
        if seg.action is Action.TAKEOFF:
            top = np.array([p0[0], p0[1], target[2]])
            points = [(p0, top, cruise), (top, target, cruise)]
        elif seg.action is Action.LAND:
            over = np.array([target[0], target[1], p0[2]])
            drop = float(p0[2] - target[2])
            if drop > _FLARE_ALTITUDE:
                flare = np.array([target[0], target[1], target[2] + _FLARE_ALTITUDE])
                points = [
                    (p0, over, cruise),
                    (over, flare, self._cfg.land_speed),
                    (flare, target, _FLARE_SPEED),
                ]
            else:
                points = [(p0, over, cruise), (over, target, _FLARE_SPEED)]
        else:
            points = [(p0, target, cruise)]
        legs = []
        for a, b, speed in points:
            length = float(np.linalg.norm(b - a))
            if length > 0.0:
                legs.append((a, b, length, length / speed))
        self._legs = legs
        self._t0 = t
        self._end_point = target
        self._action = seg.action

    def _sample(self, t: float) -> tuple[np.ndarray, float | None]:
        """Scheduled position at absolute time ``t`` plus the leg heading.

        Heading is None on vertical legs, hover segments and after the
        schedule has clamped at the target.
        """
        tau = t - self._t0
        for a, b, length, duration in self._legs:
            if tau <= duration:
                frac = max(tau, 0.0) / duration
                pos = a + frac * (b - a)
                heading = None
                if self._action is not Action.HOVER:
                    dx, dy = b[0] - a[0], b[1] - a[1]
                    if math.hypot(dx, dy) > 1e-9 * max(1.0, length):
                        heading = math.atan2(dy, dx)
                return pos, heading
            tau -= duration
        return self._end_point.copy(), None

    def schedule_done(self, t: float) -> bool:
        """True once the position schedule has clamped at the target."""
        return t - self._t0 >= sum(leg[3] for leg in self._legs)

    def step(self, t: float, dt: float) -> np.ndarray:
        """Reference (x, y, z, yaw) for the tick at time ``t``, advancing yaw."""
        pos, heading = self._sample(t)
        if heading is not None:
            self._yaw = _slew(self._yaw, heading, self._cfg.yaw_slew * dt)
        return np.array([pos[0], pos[1], pos[2], self._yaw])

    def preview(self, t: float, n: int, period: float) -> np.ndarray:
        """(n, 4) samples of the schedule at ``t``, ``t+period``, ... .

        Yaw is slewed forward from the current yaw state; the generator
        itself is not mutated, so previews are repeatable.
        """
        yaw = self._yaw
        rows = np.empty((n, 4))
        for i in range(n):
            pos, heading = self._sample(t + i * period)
            if i > 0 and heading is not None:
                yaw = _slew(yaw, heading, self._cfg.yaw_slew * period)
            rows[i] = (pos[0], pos[1], pos[2], yaw)
        return rows
