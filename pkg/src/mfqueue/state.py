"""Hybrid queue states, jump maps and trajectories.

A state is the triple ``(k, x, y)``: number of customers, time elapsed since
the last arrival, and elapsed service time of the customer being served.
Between jumps both clocks grow at unit rate (``y`` only while ``k > 0``).
States with ``k == 0`` are stored with ``y == 0``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class JumpType(enum.Enum):
    ARRIVAL = "A"
    SERVICE = "S"

    @property
    def code(self) -> int:
        return 1 if self is JumpType.ARRIVAL else -1

    @classmethod
    def from_code(cls, code: int) -> "JumpType":
        return cls.ARRIVAL if code > 0 else cls.SERVICE


@dataclass(frozen=True)
class State:
    k: int
    x: float
    y: float = 0.0

    def __post_init__(self):
        k = int(self.k)
        if k != self.k or k < 0:
            raise ValueError(f"k must be a nonnegative integer, got {self.k!r}")
        if not (self.x >= 0.0) or not (self.y >= 0.0):
            raise ValueError(f"x and y must be nonnegative, got x={self.x!r}, y={self.y!r}")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y) if k > 0 else 0.0)

    def as_tuple(self) -> tuple[int, float, float]:
        return (self.k, self.x, self.y)

    def norm(self) -> float:
        """Distance to the empty zero state, ``k + x + y``."""
        return self.k + self.x + self.y


ZERO = State(0, 0.0, 0.0)


def drift(s: State, delta: float) -> State:
    if delta < 0:
        raise ValueError(f"drift duration must be nonnegative, got {delta}")
    if delta == 0:
        return s
    if s.k > 0:
        return State(s.k, s.x + delta, s.y + delta)
    return State(0, s.x + delta, 0.0)


def jump_up(s: State) -> State:
    # an arrival to an empty system starts a fresh service (y = 0 by canonical form)
    return State(s.k + 1, 0.0, s.y)


def jump_down(s: State) -> State:
    if s.k < 1:
        raise ValueError("service jump from empty system")
    return State(s.k - 1, s.x, 0.0)


def apply_jump(s: State, kind: JumpType) -> State:
    return jump_up(s) if kind is JumpType.ARRIVAL else jump_down(s)


def state_distance(a: State, b: State) -> float:
    return abs(a.k - b.k) + abs(a.x - b.x) + abs(a.y - b.y)


@dataclass(frozen=True)
class TrajectoryEvent:
    time: float
    kind: JumpType
    pre_state: State

    @property
    def post_state(self) -> State:
        return apply_jump(self.pre_state, self.kind)


@dataclass(frozen=True)
class Trajectory:
    """Initial state plus ordered jump events on ``[0, horizon]``.

    Right-continuous: at an event time the state is the post-jump state.
    """

    initial: State
    events: tuple[TrajectoryEvent, ...]
    horizon: float
    _times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "_times", np.array([e.time for e in self.events], dtype=float))

    @property
    def jump_count(self) -> int:
        return len(self.events)

    def state_at(self, t: float) -> State:
        return state_at(self, t)

    def state_before(self, t: float) -> State:
        """Left limit ``X_{t-}`` (equals ``state_at`` away from event times)."""
        if not 0 <= t <= self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        i = int(np.searchsorted(self._times, t, side="left")) - 1
        if i < 0:
            return drift(self.initial, t)
        ev = self.events[i]
        return drift(ev.post_state, t - ev.time)


def state_at(traj: Trajectory, t: float) -> State:
    if not 0 <= t <= traj.horizon:
        raise ValueError(f"time {t} outside [0, {traj.horizon}]")
    i = int(np.searchsorted(traj._times, t, side="right")) - 1
    if i < 0:
        return drift(traj.initial, t)
    ev = traj.events[i]
    return drift(ev.post_state, t - ev.time)


class TrajectoryError(ValueError):
    pass


def validate_trajectory(traj: Trajectory) -> None:
    """Raise :class:`TrajectoryError` unless every structural invariant holds exactly."""
    prev_time = 0.0
    prev_post = traj.initial
    if traj.initial.k == 0 and traj.initial.y != 0:
        raise TrajectoryError("initial state not canonical")
    for i, ev in enumerate(traj.events):
        if not ev.time > prev_time:
            raise TrajectoryError(f"event {i}: time {ev.time} not after {prev_time}")
        if ev.time > traj.horizon:
            raise TrajectoryError(f"event {i}: time {ev.time} beyond horizon {traj.horizon}")
        expected = drift(prev_post, ev.time - prev_time)
        if ev.pre_state != expected:
            raise TrajectoryError(f"event {i}: pre-state {ev.pre_state} != drifted {expected}")
        if ev.kind is JumpType.SERVICE and ev.pre_state.k == 0:
            raise TrajectoryError(f"event {i}: service jump from empty system")
        prev_time = ev.time
        prev_post = ev.post_state


def make_trajectory(initial: State, events: Sequence[tuple[float, JumpType]], horizon: float) -> Trajectory:
    """Build a trajectory from jump times and kinds, filling in pre-states by drift."""
    out = []
    cur, t_prev = initial, 0.0
    for t, kind in events:
        pre = drift(cur, t - t_prev)
        out.append(TrajectoryEvent(float(t), kind, pre))
        cur, t_prev = apply_jump(pre, kind), t
    return Trajectory(initial, tuple(out), float(horizon))
