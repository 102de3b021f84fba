"""Single-lane longitudinal microsimulation of a mixed platoon.

One trajectory-led vehicle (TL) heads the lane. Behind it follow ``N``
groups, each made of one connected automated vehicle (CAV) and a string of
autonomous vehicles (AVs) that follow the Intelligent Driver Model (IDM).
CAV accelerations are supplied externally (by a policy or a baseline).

State is held in flat numpy arrays ordered front-to-back so that one step
of the whole string is a handful of vectorized operations.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

A_MIN = -4.5
A_MAX = 4.5
GRAVITY = 9.81


class VehicleKind(enum.IntEnum):
    TL = 0
    CAV = 1
    AV = 2


class CollisionError(RuntimeError):
    """Raised when a gap is non-positive where a positive gap is required."""


class ConfigError(ValueError):
    """Raised for inconsistent scenario configuration."""


@dataclass(frozen=True)
class IdmParams:
    """Intelligent Driver Model parameters.

    Attributes
    ----------
    v0 : float
        desired speed, in m/s
    T : float
        safe time headway, in s
    a : float
        maximum acceleration, in m/s2
    b : float
        comfortable deceleration, in m/s2
    delta : float
        acceleration exponent
    s0 : float
        jam distance, in m
    """

    v0: float = 40.0
    T: float = 1.0
    a: float = 1.3
    b: float = 2.0
    delta: float = 4.0
    s0: float = 2.0

    def __post_init__(self):
        for name in ("v0", "T", "a", "b", "delta", "s0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"idm.{name} must be strictly positive")
        if self.delta < 1:
            raise ConfigError("idm.delta must be >= 1")


@dataclass(frozen=True)
class SafetyParams:
    """Parameters of the braking-distance safety margin."""

    t0: float = 0.2  # communication delay, s
    a_max: float = 4.5  # braking deceleration magnitude, m/s2
    d0: float = 2.0  # minimum spacing, m
    ttc_limit: float = 4.0

    def __post_init__(self):
        if not self.a_max > 0 or self.t0 < 0 or not self.d0 > 0:
            raise ConfigError("safety params need a_max > 0, t0 >= 0, d0 > 0")


@dataclass(frozen=True)
class ScenarioConfig:
    """Counts and geometry of a platoon scenario.

    ``total_vehicles`` fixes the fleet size (leader included) and spreads
    the AVs as evenly as possible over ``n_groups``; when it is ``None``
    every group gets ``avs_per_group`` AVs.
    """

    n_groups: int = 10
    avs_per_group: int = 19
    total_vehicles: int | None = None
    spacing: float = 40.0
    road_length: float = 2.5e4
    dt: float = 0.1
    vehicle_length: float = 5.0
    rsu_span: float = 1000.0
    v2v_range: float = 1000.0
    idm: IdmParams = field(default_factory=IdmParams)
    safety: SafetyParams = field(default_factory=SafetyParams)

    def group_sizes(self) -> list[int]:
        """Number of AVs in every group, front group first."""
        if self.n_groups < 1:
            raise ConfigError("n_groups must be >= 1")
        if self.total_vehicles is None:
            if self.avs_per_group < 0:
                raise ConfigError("avs_per_group must be >= 0")
            return [self.avs_per_group] * self.n_groups
        n_avs = self.total_vehicles - 1 - self.n_groups
        if n_avs < 0:
            raise ConfigError("total_vehicles too small for n_groups CAVs")
        base, extra = divmod(n_avs, self.n_groups)
        return [base + (1 if g < extra else 0) for g in range(self.n_groups)]

    @property
    def n_vehicles(self) -> int:
        return 1 + self.n_groups + sum(self.group_sizes())


@dataclass(frozen=True)
class VehicleState:
    id: int
    kind: VehicleKind
    position: float
    speed: float
    accel: float
    group: int | None


@dataclass
class WorldState:
    """Longitudinal state of every vehicle at one instant.

    Arrays are indexed by vehicle id, which is also the front-to-back
    order. ``group`` is -1 for the leader.
    """

    time: float
    kind: np.ndarray
    group: np.ndarray
    position: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    groups: list[tuple[int, list[int]]]
    rsu_span: float
    v2v_range: float
    vehicle_length: float
    collision_flag: bool = False

    @property
    def n_vehicles(self) -> int:
        return len(self.position)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def cav_ids(self) -> np.ndarray:
        return np.array([cav for cav, _ in self.groups], dtype=int)

    @property
    def vehicles(self) -> list[VehicleState]:
        return [
            VehicleState(
                id=i,
                kind=VehicleKind(int(self.kind[i])),
                position=float(self.position[i]),
                speed=float(self.speed[i]),
                accel=float(self.accel[i]),
                group=None if self.group[i] < 0 else int(self.group[i]),
            )
            for i in range(self.n_vehicles)
        ]

    def gaps(self) -> np.ndarray:
        """Bumper-to-bumper gap of every follower to its front vehicle."""
        return self.position[:-1] - self.position[1:] - self.vehicle_length

    def copy(self) -> "WorldState":
        return replace(
            self,
            position=self.position.copy(),
            speed=self.speed.copy(),
            accel=self.accel.copy(),
        )


def idm_accel_array(v, v_front, gap, p: IdmParams):
    """Vectorized IDM acceleration, clamped to the CAV action bounds.

    The dynamic part of the desired gap is floored at zero, as in the usual
    formulation, so a quickly receding leader never induces braking.
    """
    v = np.asarray(v, dtype=float)
    dv = v - np.asarray(v_front, dtype=float)
    s_star = p.s0 + np.maximum(0.0, v * p.T + v * dv / (2.0 * math.sqrt(p.a * p.b)))
    acc = p.a * (1.0 - (v / p.v0) ** p.delta - (s_star / gap) ** 2)
    return np.clip(acc, A_MIN, A_MAX)


def idm_acceleration(ego: VehicleState, front: VehicleState, p: IdmParams, vehicle_length: float = 5.0) -> float:
    gap = front.position - ego.position - vehicle_length
    if gap <= 0:
        raise CollisionError(f"vehicle {ego.id} has non-positive gap {gap:.3f} m")
    return float(idm_accel_array(ego.speed, front.speed, gap, p))


def ttc(ego: VehicleState, front: VehicleState, vehicle_length: float = 5.0) -> float:
    gap = front.position - ego.position - vehicle_length
    return ttc_array(np.array([ego.speed]), np.array([front.speed]), np.array([gap]))[0]


def ttc_array(v_ego, v_front, gap):
    closing = np.asarray(v_ego, float) - np.asarray(v_front, float)
    out = np.full(np.shape(closing), np.inf)
    mask = closing > 0
    np.divide(np.asarray(gap, float), closing, out=out, where=mask)
    return out


def safe_distance(v_ego, v_front, p: SafetyParams):
    """Distance needed to stop behind a front vehicle braking to standstill."""
    return v_ego * p.t0 + (v_ego**2 - v_front**2) / (2.0 * p.a_max) + p.d0


def build_scenario(cfg: ScenarioConfig, initial_speed: float = 0.0) -> WorldState:
    """Place the leader and all groups at uniform spacing.

    The last vehicle starts at x = 0; the leader sits ``(M - 1) * spacing``
    ahead of it.
    """
    sizes = cfg.group_sizes()
    m = cfg.n_vehicles
    if cfg.spacing <= cfg.vehicle_length:
        raise ConfigError("spacing must exceed vehicle_length")
    span = (m - 1) * cfg.spacing
    if span > cfg.road_length:
        raise ConfigError(
            f"platoon length {span:.1f} m exceeds road_length {cfg.road_length:.1f} m"
        )
    kind = np.empty(m, dtype=int)
    group = np.empty(m, dtype=int)
    kind[0], group[0] = VehicleKind.TL, -1
    groups = []
    i = 1
    for g, n_av in enumerate(sizes):
        kind[i], group[i] = VehicleKind.CAV, g
        members = list(range(i + 1, i + 1 + n_av))
        kind[i + 1 : i + 1 + n_av] = VehicleKind.AV
        group[i + 1 : i + 1 + n_av] = g
        groups.append((i, members))
        i += 1 + n_av
    position = span - cfg.spacing * np.arange(m, dtype=float)
    return WorldState(
        time=0.0,
        kind=kind,
        group=group,
        position=position,
        speed=np.full(m, float(initial_speed)),
        accel=np.zeros(m),
        groups=groups,
        rsu_span=cfg.rsu_span,
        v2v_range=cfg.v2v_range,
        vehicle_length=cfg.vehicle_length,
    )


def follower_accelerations(world: WorldState, cav_actions, idm: IdmParams) -> np.ndarray:
    """Commanded accelerations of all followers (index 1..M-1)."""
    cav_actions = np.asarray(cav_actions, dtype=float)
    if cav_actions.shape != (world.n_groups,):
        raise ValueError(f"expected {world.n_groups} CAV actions, got shape {cav_actions.shape}")
    if np.isnan(cav_actions).any():
        raise ValueError("NaN in CAV actions")
    gap = world.gaps()
    with np.errstate(divide="ignore", invalid="ignore"):
        acc = idm_accel_array(world.speed[1:], world.speed[:-1], np.where(gap > 0, gap, np.nan), idm)
    acc = np.where(gap > 0, acc, A_MIN)
    is_cav = world.kind[1:] == VehicleKind.CAV
    acc[is_cav] = np.clip(cav_actions, A_MIN, A_MAX)
    return acc


def step(world: WorldState, cav_actions, traj, dt: float = 0.1, idm: IdmParams | None = None) -> WorldState:
    """Advance the world by one semi-implicit Euler step.

    The leader's speed is read from ``traj`` at the new time; every other
    vehicle integrates its commanded acceleration with the speed floored at
    zero. A non-positive gap after the update sets ``collision_flag``.
    """
    idm = idm or IdmParams()
    acc_cmd = follower_accelerations(world, cav_actions, idm)
    new = world.copy()
    t1 = world.time + dt
    v_lead = float(traj.speed_at(t1))
    new.speed[0] = v_lead
    raw = world.speed[1:] + acc_cmd * dt
    new.speed[1:] = np.maximum(0.0, raw)
    new.accel[0] = (v_lead - world.speed[0]) / dt
    new.accel[1:] = np.where(raw < 0, -world.speed[1:] / dt, acc_cmd)
    new.position += new.speed * dt
    new.time = t1
    new.collision_flag = world.collision_flag or bool((new.gaps() <= 0).any())
    return new


def idm_cav_actions(world: WorldState, idm: IdmParams) -> np.ndarray:
    """IDM accelerations for the CAVs, i.e. the pure-IDM baseline policy."""
    cav = world.cav_ids
    gap = world.position[cav - 1] - world.position[cav] - world.vehicle_length
    gap = np.where(gap > 0, gap, 1e-6)
    return idm_accel_array(world.speed[cav], world.speed[cav - 1], gap, idm)
