"""Leader speed profiles.

A :class:`LeaderTrajectory` is a list of (time, speed) samples replayed by
the trajectory-leading vehicle with linear interpolation. Recorded highway
data is not bundled; the procedural profiles below reproduce the qualitative
shapes used for training and generalization tests (steady cruise, low-speed
crawl, rapid acceleration, emergency braking, and a mix of all of them).
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAX_SPEED = 40.0


class ScenarioTag(str, enum.Enum):
    INTEGRATED = "integrated"
    HIGH_SPEED = "high-speed"
    LOW_SPEED = "low-speed"
    RAPID_ACCEL = "rapid-accel"
    EMERGENCY_BRAKE = "emergency-brake"
    CUSTOM = "custom"


@dataclass(frozen=True)
class LeaderTrajectory:
    times: np.ndarray
    speeds: np.ndarray
    tag: ScenarioTag = ScenarioTag.CUSTOM

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.speeds, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or len(t) < 2:
            raise ValueError("trajectory needs >= 2 matching (t, v) samples")
        if not np.all(np.diff(t) > 0):
            raise ValueError("trajectory times must be strictly increasing")
        if np.any(v < 0) or np.any(v > MAX_SPEED):
            raise ValueError(f"trajectory speeds must lie in [0, {MAX_SPEED}] m/s")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "speeds", v)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def speed_at(self, t):
        return np.interp(t, self.times, self.speeds)

    def resample(self, dt: float) -> "LeaderTrajectory":
        t = np.arange(self.times[0], self.times[-1] + 0.5 * dt, dt)
        return LeaderTrajectory(t, self.speed_at(t), self.tag)

    def n_steps(self, dt: float) -> int:
        """Steps in one full pass at timestep ``dt``."""
        return int(round(self.duration / dt))


def read_csv(path) -> LeaderTrajectory:
    """Read a ``t,v`` comma-separated file."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != ["t", "v"]:
            raise ValueError(f"{path}: expected header 't,v', got {','.join(header)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from exc
    arr = np.array(rows)
    return LeaderTrajectory(arr[:, 0], arr[:, 1], ScenarioTag.CUSTOM)


def write_csv(traj: LeaderTrajectory, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("t,v\n")
        for t, v in zip(traj.times, traj.speeds):
            fh.write(f"{float(t)!r},{float(v)!r}\n")


def _piecewise(knots, tag, dt=0.1):
    # knots: (time, speed) corners joined linearly
    t_k = np.array([k[0] for k in knots], dtype=float)
    v_k = np.array([k[1] for k in knots], dtype=float)
    t = np.arange(0.0, t_k[-1] + 0.5 * dt, dt)
    return LeaderTrajectory(t, np.interp(t, t_k, v_k), tag)


def high_speed(duration=300.0, dt=0.1):
    t = np.arange(0.0, duration + 0.5 * dt, dt)
    v = 30.0 + 2.0 * np.sin(2 * np.pi * t / 60.0)
    return LeaderTrajectory(t, v, ScenarioTag.HIGH_SPEED)


def low_speed(duration=300.0, dt=0.1):
    t = np.arange(0.0, duration + 0.5 * dt, dt)
    v = 6.0 + 2.0 * np.sin(2 * np.pi * t / 40.0)
    return LeaderTrajectory(t, v, ScenarioTag.LOW_SPEED)


def rapid_accel(duration=300.0, dt=0.1):
    # 10 -> 32 m/s at 2.75 m/s2, then hold
    return _piecewise(
        [(0, 10), (30, 10), (38, 32), (duration, 32)], ScenarioTag.RAPID_ACCEL, dt
    )


def emergency_brake(duration=300.0, dt=0.1):
    # 25 m/s cruise, brake at -4 m/s2 to 3 m/s, dwell, recover at 1.1 m/s2
    return _piecewise(
        [(0, 25), (40, 25), (45.5, 3), (55.5, 3), (75.5, 25), (duration, 25)],
        ScenarioTag.EMERGENCY_BRAKE,
        dt,
    )


def integrated(duration=600.0, dt=0.1):
    s = duration / 600.0
    knots = [
        (0, 25), (60, 25), (65.5, 3), (75, 3), (95, 25),
        (150, 25), (170, 8), (260, 8), (270, 30), (380, 30),
        (390, 20), (480, 20), (488, 32), (560, 32), (600, 25),
    ]
    return _piecewise([(k[0] * s, k[1]) for k in knots], ScenarioTag.INTEGRATED, dt)


def sinusoid(mean=20.0, amplitude=5.0, period=50.0, duration=300.0, dt=0.1):
    t = np.arange(0.0, duration + 0.5 * dt, dt)
    v = mean + amplitude * np.sin(2 * np.pi * t / period)
    return LeaderTrajectory(t, v, ScenarioTag.CUSTOM)


def constant(speed=20.0, duration=300.0, dt=0.1):
    t = np.array([0.0, duration])
    return LeaderTrajectory(t, np.array([speed, speed]), ScenarioTag.CUSTOM)


PROFILES = {
    ScenarioTag.INTEGRATED: integrated,
    ScenarioTag.HIGH_SPEED: high_speed,
    ScenarioTag.LOW_SPEED: low_speed,
    ScenarioTag.RAPID_ACCEL: rapid_accel,
    ScenarioTag.EMERGENCY_BRAKE: emergency_brake,
}


def profile(name: str, **kwargs) -> LeaderTrajectory:
    """Look up a built-in profile by tag (``"sinusoid"`` and ``"constant"`` too)."""
    if name == "sinusoid":
        return sinusoid(**kwargs)
    if name == "constant":
        return constant(**kwargs)
    return PROFILES[ScenarioTag(name)](**kwargs)
