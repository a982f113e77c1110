"""Ground-truth pedestrian scenarios in the range / radial-speed domain.

Objects move on a 2-D plane around a monostatic sensor at the origin.  Each
walk is a unicycle (speed + heading) driven by slowly changing random
commands.  Accelerations are split into a speed budget and a turning budget
so that the projected radial speed ``v = p . p_dot / |p|`` never changes by
more than ``max_accel * dt`` per frame.  Near the edges of the range window
an object brakes and turns away, which keeps ``v`` continuous.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import ContractError

__all__ = [
    "ConstraintError",
    "KinematicConstraints",
    "ObjectTrajectory",
    "Scenario",
    "generate_random_walk",
    "scenario_preset",
    "ground_truth_at",
    "crossing_frames",
    "DEFAULT_DT",
    "DEFAULT_DURATION",
]

DEFAULT_DT = 0.01
DEFAULT_DURATION = 30.0

# fraction of max_accel given to speed changes and to turning, respectively
_SPEED_BUDGET = 0.45
_TURN_BUDGET = 0.45


class ConstraintError(ContractError):
    """The kinematic constraints cannot hold any walk."""


@dataclass(frozen=True)
class KinematicConstraints:
    max_speed: float = 5.6
    max_turn_rate: float = 1.0
    max_accel: float = 1.0
    range_min: float = 18.0
    range_max: float = 54.0

    def __post_init__(self):
        for name in ("max_turn_rate", "max_accel", "range_min", "range_max"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConstraintError(f"{name} must be > 0, got {value!r}")
        if not np.isfinite(self.max_speed) or self.max_speed < 0:
            raise ConstraintError(f"max_speed must be >= 0, got {self.max_speed!r}")
        if self.range_min >= self.range_max:
            raise ConstraintError("range_min must be below range_max")
        if self.range_max - self.range_min < 2.0:
            raise ConstraintError(
                f"range window [{self.range_min}, {self.range_max}] is too narrow to hold a walk"
            )
        if self.max_speed / self.range_min > self.max_turn_rate:
            # straight-line motion past the sensor would already exceed the
            # turn budget in the rotating radial frame
            raise ConstraintError("max_speed / range_min exceeds max_turn_rate")


@dataclass(frozen=True)
class ObjectTrajectory:
    """Per-frame (range, radial speed) states of one object.

    ``states[k]`` belongs to frame ``birth_frame + k``.  ``planar`` holds the
    generator's internal ``(x, y, heading, speed)`` samples; it is not
    serialised.
    """

    id: int
    birth_frame: int
    states: np.ndarray
    planar: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float).reshape(-1, 2)
        if len(states) == 0:
            raise ContractError("a trajectory needs at least one state")
        object.__setattr__(self, "states", states)
        states.setflags(write=False)

    @property
    def death_frame(self):
        return self.birth_frame + len(self.states) - 1

    @property
    def ranges(self):
        return self.states[:, 0]

    @property
    def speeds(self):
        return self.states[:, 1]

    def alive_at(self, frame):
        return self.birth_frame <= frame <= self.death_frame

    def state_at(self, frame):
        return self.states[frame - self.birth_frame]

    def __eq__(self, other):
        if not isinstance(other, ObjectTrajectory):
            return NotImplemented
        return (
            self.id == other.id
            and self.birth_frame == other.birth_frame
            and np.array_equal(self.states, other.states)
        )

    def __hash__(self):
        return hash((self.id, self.birth_frame, self.states.tobytes()))


@dataclass(frozen=True)
class Scenario:
    trajectories: tuple
    duration: float = DEFAULT_DURATION
    dt: float = DEFAULT_DT
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        if self.dt <= 0 or self.duration < self.dt:
            raise ContractError("need dt > 0 and duration >= dt")
        for traj in self.trajectories:
            if traj.birth_frame < 0 or traj.death_frame >= self.n_frames:
                raise ContractError(f"trajectory {traj.id} leaves the scenario time span")

    @property
    def n_frames(self):
        return int(round(self.duration / self.dt))

    def cardinality(self):
        """Number of alive objects per frame."""
        counts = np.zeros(self.n_frames, dtype=int)
        for traj in self.trajectories:
            counts[traj.birth_frame : traj.death_frame + 1] += 1
        return counts

    def to_dict(self):
        return {
            "label": self.label,
            "dt": self.dt,
            "duration": self.duration,
            "trajectories": [
                {
                    "id": int(t.id),
                    "birth_frame": int(t.birth_frame),
                    "states": t.states.tolist(),
                }
                for t in self.trajectories
            ],
        }

    @classmethod
    def from_dict(cls, data):
        trajs = [
            ObjectTrajectory(int(t["id"]), int(t["birth_frame"]), np.asarray(t["states"], dtype=float))
            for t in data["trajectories"]
        ]
        return cls(trajs, float(data["duration"]), float(data["dt"]), str(data.get("label", "")))

    def save_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def ground_truth_at(scenario, frame):
    """Return ``[(range, speed, id), ...]`` for the objects alive at ``frame``."""
    if not 0 <= frame < scenario.n_frames:
        raise IndexError(f"frame {frame} outside [0, {scenario.n_frames})")
    out = []
    for traj in scenario.trajectories:
        if traj.alive_at(frame):
            r, v = traj.state_at(frame)
            out.append((float(r), float(v), int(traj.id)))
    return out


# -- walk generator ----------------------------------------------------------


class _Walker:
    def __init__(self, rng, constraints, dt):
        self.rng = rng
        self.c = constraints
        self.dt = dt
        self.a_speed = _SPEED_BUDGET * constraints.max_accel
        self.a_turn = _TURN_BUDGET * constraints.max_accel
        self.s_pref = rng.uniform(0.1, 0.6) * constraints.max_speed
        self.turn_cmd = rng.uniform(-0.6, 0.6) * constraints.max_turn_rate

    def run(self, x, y, speed, heading, n_steps):
        c, dt, rng = self.c, self.dt, self.rng
        out = np.empty((n_steps + 1, 4))
        out[0] = x, y, heading, speed
        for k in range(n_steps):
            if rng.random() < dt / 2.0:
                self.s_pref = rng.uniform(0.1, 0.6) * c.max_speed
            if rng.random() < dt / 1.5:
                self.turn_cmd = rng.uniform(-0.6, 0.6) * c.max_turn_rate

            r = np.hypot(x, y)
            bearing = np.arctan2(y, x)
            rel = heading - bearing
            v_rad = speed * np.cos(rel)
            bearing_rate = speed * np.sin(rel) / r

            if v_rad < 0:
                gap = r - c.range_min
            else:
                gap = c.range_max - r
            stop = abs(v_rad) * speed / (2 * self.a_speed) + 2 * speed * dt + 0.05
            braking = speed > 0 and gap <= stop

            if braking:
                accel = -self.a_speed
                away = np.sign(v_rad) * np.sign(np.sin(rel)) or 1.0
                turn = bearing_rate + away * self.a_turn / speed
                self.turn_cmd = np.sign(turn - bearing_rate) * 0.8 * c.max_turn_rate
            else:
                accel = np.clip(0.5 * (self.s_pref - speed), -self.a_speed, self.a_speed)
                turn = self.turn_cmd

            lo, hi = -c.max_turn_rate, c.max_turn_rate
            if speed > 0:
                lo = max(lo, bearing_rate - self.a_turn / speed)
                hi = min(hi, bearing_rate + self.a_turn / speed)
            turn = float(np.clip(turn, lo, hi))

            speed = float(np.clip(speed + accel * dt, 0.0, c.max_speed))
            heading = heading + turn * dt
            x += speed * np.cos(heading) * dt
            y += speed * np.sin(heading) * dt
            out[k + 1] = x, y, heading, speed
        return out


def _project(planar):
    x, y, heading, speed = planar.T
    r = np.hypot(x, y)
    v = speed * (np.cos(heading) * x + np.sin(heading) * y) / r
    return np.column_stack([r, v])


def _initial_state(rng, c):
    width = c.range_max - c.range_min
    r0 = rng.uniform(c.range_min + 0.3 * width, c.range_max - 0.3 * width)
    bearing = rng.uniform(-np.pi / 4, np.pi / 4)
    speed = rng.uniform(0.0, min(1.0, c.max_speed))
    heading = rng.uniform(-np.pi, np.pi)
    return r0 * np.cos(bearing), r0 * np.sin(bearing), speed, heading


def _walk_through(rng, c, dt, anchor, anchor_frame, birth, death):
    """Simulate a walk that passes through ``anchor`` at ``anchor_frame``.

    The part before the anchor is generated by walking the reversed motion
    forward in time and flipping it back.
    """
    x, y, speed, heading = anchor
    walker = _Walker(rng, c, dt)
    fwd = walker.run(x, y, speed, heading, death - anchor_frame)
    walker = _Walker(rng, c, dt)
    bwd = walker.run(x, y, speed, heading + np.pi, anchor_frame - birth)
    bwd = bwd[::-1].copy()
    bwd[:, 2] += np.pi
    planar = np.vstack([bwd[:-1], fwd])
    planar[:, 2] = np.angle(np.exp(1j * planar[:, 2]))
    return planar


def _within_window(states, c):
    r = states[:, 0]
    return np.all(r >= c.range_min) and np.all(r <= c.range_max)


def generate_random_walk(seed, constraints=None, duration=DEFAULT_DURATION, dt=DEFAULT_DT):
    """Generate one constrained random walk covering ``[0, duration)``.

    Deterministic for a fixed ``seed``.  Returns an :class:`ObjectTrajectory`
    with ``id = 0`` and ``birth_frame = 0``.
    """
    c = constraints or KinematicConstraints()
    if dt <= 0 or duration < dt:
        raise ContractError("need dt > 0 and duration >= dt")
    n_frames = int(round(duration / dt))
    rng = np.random.default_rng(seed)
    x, y, speed, heading = _initial_state(rng, c)
    planar = _Walker(rng, c, dt).run(x, y, speed, heading, n_frames - 1)
    planar[:, 2] = np.angle(np.exp(1j * planar[:, 2]))
    states = _project(planar)
    if not _within_window(states, c):
        raise ConstraintError("walk left the range window; constraints are too tight for dt")
    return ObjectTrajectory(0, 0, states, planar)


# -- presets -----------------------------------------------------------------

CROSS_RANGE_TOL = 0.5
CROSS_SPEED_TOL = 0.3


def crossing_frames(a, b, range_tol=CROSS_RANGE_TOL, speed_tol=CROSS_SPEED_TOL):
    """Frames at which two trajectories are within the crossing tolerance."""
    lo = max(a.birth_frame, b.birth_frame)
    hi = min(a.death_frame, b.death_frame)
    if lo > hi:
        return np.zeros(0, dtype=int)
    sa = a.states[lo - a.birth_frame : hi - a.birth_frame + 1]
    sb = b.states[lo - b.birth_frame : hi - b.birth_frame + 1]
    hit = (np.abs(sa[:, 0] - sb[:, 0]) <= range_tol) & (np.abs(sa[:, 1] - sb[:, 1]) <= speed_tol)
    return np.flatnonzero(hit) + lo


def _crossing_anchors(rng, n, r_c, v_c):
    """Planar states sharing range ``r_c`` and radial speed ``v_c``."""
    bearing = rng.uniform(-np.pi / 6, np.pi / 6)
    anchors = []
    for i in range(n):
        speed = abs(v_c) + 0.25 + 0.35 * i + rng.uniform(0.0, 0.2)
        rel = np.arccos(np.clip(v_c / speed, -1.0, 1.0))
        rel = rel if i % 2 == 0 else -rel
        anchors.append((r_c * np.cos(bearing), r_c * np.sin(bearing), speed, bearing + rel))
    return anchors


# (birth s, death s) per object for the six-object presets
_SIX_OBJECT_LIFETIMES = [(0.0, 24.0), (1.5, 30.0), (4.0, 30.0), (0.0, 30.0), (6.0, 27.5), (2.5, 18.5)]


def _two_free(rng, c, n_frames, dt):
    lower = KinematicConstraints(c.max_speed, c.max_turn_rate, c.max_accel, c.range_min, 33.0)
    upper = KinematicConstraints(c.max_speed, c.max_turn_rate, c.max_accel, 39.0, c.range_max)
    trajs = []
    for i, sub in enumerate((lower, upper)):
        x, y, speed, heading = _initial_state(rng, sub)
        planar = _Walker(rng, sub, dt).run(x, y, speed, heading, n_frames - 1)
        trajs.append((i, 0, planar))
    return trajs


def _crossing_group(rng, c, dt, ids, frame, lifetimes):
    r_c = rng.uniform(30.0, 42.0)
    v_c = rng.uniform(-1.0, 1.0)
    out = []
    for obj_id, anchor in zip(ids, _crossing_anchors(rng, len(ids), r_c, v_c)):
        birth, death = lifetimes[obj_id]
        out.append((obj_id, birth, _walk_through(rng, c, dt, anchor, frame, birth, death)))
    return out


def _build_preset(preset_id, rng, c, n_frames, dt):
    if preset_id == 1:
        return _two_free(rng, c, n_frames, dt)
    if preset_id == 2:
        lifetimes = {0: (0, n_frames - 1), 1: (0, n_frames - 1)}
        return _crossing_group(rng, c, dt, [0, 1], int(round(8.0 / dt)), lifetimes)
    lifetimes = {
        i: (int(round(b / dt)), min(int(round(d / dt)), n_frames - 1))
        for i, (b, d) in enumerate(_SIX_OBJECT_LIFETIMES)
    }
    if preset_id == 3:
        parts = _crossing_group(rng, c, dt, [0, 1, 2], int(round(9.0 / dt)), lifetimes)
        parts += _crossing_group(rng, c, dt, [3, 4], int(round(19.0 / dt)), lifetimes)
        birth, death = lifetimes[5]
        x, y, speed, heading = _initial_state(rng, c)
        parts.append((5, birth, _Walker(rng, c, dt).run(x, y, speed, heading, death - birth)))
        return parts
    return _crossing_group(rng, c, dt, list(range(6)), int(round(12.0 / dt)), lifetimes)


def scenario_preset(preset_id, seed=0, constraints=None):
    """Build one of the four evaluation scenarios.

    1: two objects that never come within the association gate of each other.
    2: two objects crossing in (range, speed) around 8 s.
    3: six objects, a three-object crossing at 9 s and a two-object one at 19 s.
    4: the six objects of preset 3 rearranged to all cross around 12 s.

    Walks are re-drawn until every trajectory stays inside the range window.
    """
    if preset_id not in (1, 2, 3, 4):
        raise ContractError(f"preset id must be 1..4, got {preset_id!r}")
    c = constraints or KinematicConstraints()
    dt, duration = DEFAULT_DT, DEFAULT_DURATION
    n_frames = int(round(duration / dt))
    # preset 4 reuses the lifetimes of preset 3; seeding both from the same
    # stream keeps "the same objects" with a rearranged crossing
    for attempt in range(100):
        rng = np.random.default_rng([seed, preset_id, attempt])
        parts = _build_preset(preset_id, rng, c, n_frames, dt)
        trajs = []
        for obj_id, birth, planar in sorted(parts, key=lambda p: p[0]):
            planar[:, 2] = np.angle(np.exp(1j * planar[:, 2]))
            trajs.append(ObjectTrajectory(obj_id, birth, _project(planar), planar))
        if all(_within_window(t.states, c) for t in trajs) and _preset_ok(preset_id, trajs):
            return Scenario(trajs, duration, dt, f"preset-{preset_id}")
    raise ConstraintError(f"could not build preset {preset_id} within the constraints")


def _preset_ok(preset_id, trajs):
    if preset_id == 1:
        a, b = trajs
        gap_r = np.abs(a.ranges - b.ranges)
        gap_v = np.abs(a.speeds - b.speeds)
        return bool(np.all((gap_r > 5.0) | (gap_v > 5.0)))
    return True
