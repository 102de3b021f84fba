"""Platoon environment: simulator + reward bookkeeping for one episode at a time."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..graph import vv_connectivity
from ..reward import EnergyBreakdown, EnergyParams, RewardParams, cav_components, r_energy, scalarize
from ..sim import ScenarioConfig, VehicleKind, WorldState, build_scenario, step
from ..trajectories import LeaderTrajectory


@dataclass
class StepResult:
    world: WorldState
    reward: float
    components: np.ndarray  # (N, 4) safe, task, comfort, energy
    per_cav: np.ndarray
    energy: EnergyBreakdown
    handoffs: np.ndarray
    done: bool
    collision: bool


def nearest_cav(world: WorldState, conn: np.ndarray) -> np.ndarray:
    """For every vehicle, the nearest CAV it is linked to (-1 if none)."""
    cav = world.cav_ids
    dist = np.abs(world.position[:, None] - world.position[None, cav])
    dist = np.where(conn[:, cav], dist, np.inf)
    out = cav[np.argmin(dist, axis=1)]
    return np.where(np.isfinite(dist.min(axis=1)), out, -1)


@dataclass
class PlatoonEnv:
    """Episode driver around :func:`ecoplatoon.sim.step`.

    An episode is one pass over the leader trajectory (or ``horizon``
    steps), ending early on collision or when the leader reaches the end of
    the road.
    """

    scenario: ScenarioConfig
    trajectory: LeaderTrajectory
    reward_params: RewardParams = field(default_factory=RewardParams)
    energy_params: EnergyParams = field(default_factory=EnergyParams)
    horizon: int | None = None

    def __post_init__(self):
        if abs(self.energy_params.timestep - self.scenario.dt) > 1e-12:
            raise ValueError("energy timestep must equal the simulation dt")
        self.world = None
        self.t_index = 0

    @property
    def max_steps(self) -> int:
        n = self.trajectory.n_steps(self.scenario.dt)
        return n if self.horizon is None else min(n, self.horizon)

    def reset(self) -> WorldState:
        self.world = build_scenario(self.scenario, initial_speed=float(self.trajectory.speed_at(self.trajectory.times[0])))
        self.world.time = float(self.trajectory.times[0])
        self.t_index = 0
        self._assign = self._assignment(self.world)
        return self.world

    def _assignment(self, world):
        conn = vv_connectivity(world)
        assign = nearest_cav(world, conn)
        assign[world.kind != VehicleKind.AV] = -1
        return assign, conn

    def step(self, cav_actions) -> StepResult:
        if self.world is None:
            raise RuntimeError("call reset() first")
        prev = self.world
        sc = self.scenario
        world = step(prev, cav_actions, self.trajectory, sc.dt, sc.idm)
        self.t_index += 1
        collision = world.collision_flag
        prev_assign, prev_conn = self._assign
        assign, conn = self._assignment(world)
        changed = (assign != prev_assign) & (assign >= 0)
        cav = world.cav_ids
        handoffs = np.array([np.count_nonzero(changed & (assign == c)) for c in cav], dtype=float)
        links = conn[cav].sum(axis=1) - 1.0
        energy = r_energy(world, links, handoffs, self.energy_params)
        comps = cav_components(world, prev.accel, sc.dt, energy, self.reward_params, sc.safety)
        rp = self.reward_params
        per_cav, total = scalarize(comps, rp.weights, collision, rp.collision_penalty)
        done = (
            collision
            or self.t_index >= self.max_steps
            or world.position[0] >= sc.road_length
        )
        self.world = world
        self._assign = (assign, conn)
        return StepResult(world, total, comps, per_cav, energy, handoffs, done, collision)
