"""Four-objective reward: safety, task, comfort and energy.

All non-energy sub-rewards lie in [-1, 0] and are exactly 0 in their ideal
case. Energy terms are joules with a negative sign, later normalized by a
reference power so they are commensurate with the others.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sim import GRAVITY, SafetyParams, WorldState, safe_distance, ttc_array

JERK_BRANCH = 2.94


@dataclass(frozen=True)
class RewardParams:
    ttc_limit: float = 4.0
    gap_desired: float = 20.0
    c1: float = 2.5
    c2: float = 1.0
    jerk_max: float = 90.0
    weights: tuple = (1.0, 1.0, 1.0, 1.0)  # safe, task, comfort, energy
    reference_power: float = 1.0e4
    collision_penalty: float = -100.0


@dataclass(frozen=True)
class EnergyParams:
    """Longitudinal battery model plus communication/computation loads."""

    mass: float = 1600.0
    drag_area: float = 0.6
    air_density: float = 1.2
    rolling_coeff: float = 0.01
    drivetrain_eff: float = 0.9
    regen_eff: float = 0.6
    aux_power: float = 500.0
    comm_power: float = 2.0
    migration_energy: float = 5.0
    local_compute_power: float = 50.0
    regen_cap: float = 6.0e4
    timestep: float = 0.1

    def __post_init__(self):
        vals = [getattr(self, f) for f in self.__dataclass_fields__]
        if any(v < 0 for v in vals):
            raise ValueError("energy parameters must be nonnegative")
        if not (0 < self.drivetrain_eff <= 1 and 0 <= self.regen_eff <= 1):
            raise ValueError("efficiencies out of range")


@dataclass
class RewardVector:
    safe: float
    task: float
    comfort: float
    energy: float
    scalar: float = 0.0

    def as_array(self):
        return np.array([self.safe, self.task, self.comfort, self.energy])


def r_safe(delta_d, d_s, ttc, t_limit=4.0):
    """Braking-distance and time-to-collision penalties ``(r_ds, r_ttc)``."""
    r_ds = -1.0 if delta_d < d_s else 0.0
    if ttc > t_limit:
        r_ttc = 0.0
    elif ttc <= 0:
        r_ttc = -1.0
    else:
        r_ttc = max(-1.0, math.log(ttc / t_limit))
    return r_ds, r_ttc


def r_task(delta_d, delta_d_des, v_ego, v_front):
    if not delta_d_des > 0:
        raise ValueError("desired gap must be positive")
    return -math.tanh(abs(delta_d - delta_d_des)), -math.tanh(abs(v_ego - v_front))


def r_comfort(a, jerk, c1=2.5, c2=1.0, j_max=90.0):
    r_a = max(-1.0, -((a / c1) ** 2))
    q = jerk * jerk / (j_max * j_max)
    r_j = max(-1.0, -c2 * q) if abs(jerk) >= JERK_BRANCH else -q
    return r_a, r_j


def safety_terms(gap, d_s, ttc, t_limit):
    """Vectorized :func:`r_safe`."""
    gap, d_s, ttc = (np.asarray(x, dtype=float) for x in (gap, d_s, ttc))
    r_ds = np.where(gap < d_s, -1.0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.log(np.where(ttc > 0, ttc, 1.0) / t_limit)
    r_ttc = np.where(ttc > t_limit, 0.0, np.where(ttc <= 0, -1.0, np.maximum(-1.0, log_ratio)))
    return r_ds, r_ttc


def task_terms(gap, gap_des, v_ego, v_front):
    gap, v_ego, v_front = (np.asarray(x, dtype=float) for x in (gap, v_ego, v_front))
    return -np.tanh(np.abs(gap - gap_des)), -np.tanh(np.abs(v_ego - v_front))


def comfort_terms(a, jerk, c1, c2, j_max):
    a, jerk = np.asarray(a, dtype=float), np.asarray(jerk, dtype=float)
    r_a = np.maximum(-1.0, -((a / c1) ** 2))
    q = jerk * jerk / (j_max * j_max)
    r_j = np.where(np.abs(jerk) >= JERK_BRANCH, np.maximum(-1.0, -c2 * q), -q)
    return r_a, r_j


def drive_power(v, a, p: EnergyParams):
    """Battery power draw (W) of a point-mass vehicle.

    Traction power is divided by the drivetrain efficiency; negative
    (braking) power is recovered with the regenerative efficiency, capped at
    ``regen_cap``. Auxiliary load is always added.
    """
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    force = p.mass * a + p.mass * GRAVITY * p.rolling_coeff + 0.5 * p.air_density * p.drag_area * v * v
    wheel = force * v
    battery = np.where(wheel >= 0, wheel / p.drivetrain_eff, np.maximum(wheel * p.regen_eff, -p.regen_cap))
    out = battery + p.aux_power
    return float(out) if out.ndim == 0 else out


@dataclass
class EnergyBreakdown:
    """Per-vehicle energy terms (J, <= 0 by sign convention) over one step."""

    battery: np.ndarray
    comm: np.ndarray
    mig: np.ndarray
    cal: np.ndarray

    def totals(self):
        return (float(self.battery.sum()), float(self.comm.sum()), float(self.mig.sum()), float(self.cal.sum()))

    def per_vehicle(self) -> np.ndarray:
        return self.battery + self.comm + self.mig + self.cal


def r_energy(world: WorldState, links, handoffs, p: EnergyParams) -> EnergyBreakdown:
    """Energy spent over one timestep by every vehicle.

    ``links`` and ``handoffs`` are per-CAV counts (ordered like
    ``world.groups``). Only CAVs carry communication, migration and local
    computation energy; every vehicle carries battery energy.
    """
    m = world.n_vehicles
    cav = world.cav_ids
    links = np.broadcast_to(np.asarray(links, dtype=float), cav.shape)
    handoffs = np.broadcast_to(np.asarray(handoffs, dtype=float), cav.shape)
    battery = -np.asarray(drive_power(world.speed, world.accel, p)) * p.timestep
    comm = np.zeros(m)
    mig = np.zeros(m)
    cal = np.zeros(m)
    comm[cav] = -p.comm_power * links * p.timestep
    mig[cav] = -handoffs * p.migration_energy
    cal[cav] = -p.local_compute_power * p.timestep
    return EnergyBreakdown(np.broadcast_to(battery, (m,)).copy(), comm, mig, cal)


def cav_components(world: WorldState, prev_accel, dt, energy: EnergyBreakdown, rp: RewardParams, sp: SafetyParams):
    """Per-CAV ``(safe, task, comfort, energy)`` rows, shape ``(N, 4)``.

    A CAV's energy is the summed energy of its whole group, normalized by
    ``reference_power * dt * M``.
    """
    cav = world.cav_ids
    front = cav - 1
    gap = world.position[front] - world.position[cav] - world.vehicle_length
    v_e, v_f = world.speed[cav], world.speed[front]
    d_s = safe_distance(v_e, v_f, sp)
    r_ds, r_ttc = safety_terms(gap, d_s, ttc_array(v_e, v_f, gap), rp.ttc_limit)
    r_gap, r_speed = task_terms(gap, rp.gap_desired, v_e, v_f)
    jerk = (world.accel[cav] - np.asarray(prev_accel)[cav]) / dt
    r_a, r_j = comfort_terms(world.accel[cav], jerk, rp.c1, rp.c2, rp.jerk_max)
    per_vehicle = energy.per_vehicle()
    group_energy = np.array([per_vehicle[[c, *avs]].sum() for c, avs in world.groups])
    scale = rp.reference_power * dt * world.n_vehicles
    return np.stack([r_ds + r_ttc, r_gap + r_speed, r_a + r_j, group_energy / scale], axis=1)


def scalarize(components, weights=(1.0, 1.0, 1.0, 1.0), collision=False, collision_penalty=-100.0):
    """Weighted per-CAV rewards and their sum over CAVs.

    Returns
    -------
    (per-CAV scalars, global scalar)
    """
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("reward weights must be nonnegative")
    per_cav = np.asarray(components, dtype=float) @ w
    total = float(per_cav.sum())
    if collision:
        total += collision_penalty
    return per_cav, total
