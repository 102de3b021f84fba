"""Nested traffic graphs.

A world snapshot is represented twice:

* a vehicle-level (V-V) graph over all ``M`` vehicles, whose edges encode
  which vehicles can exchange information and how strongly, and
* a formation-level (F-F) graph over the ``N`` platoons.

The two levels are tied together by a membership map from vehicle id to
platoon id. Edge weights of the V-V graph follow a spatio-temporal rule
driven by relative distance and relative speed.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .sim import A_MAX, VehicleKind, WorldState

F_V = 6
F_F = 4
SPEED_SCALE = 40.0
ACCEL_SCALE = A_MAX


class GraphError(ValueError):
    """Structural inconsistency between graph levels."""


class WeightMode(str, enum.Enum):
    AS_WRITTEN = "as-written"
    PROSE = "prose"


@dataclass(frozen=True)
class StWeightParams:
    d_max: float = 100.0
    v_max: float = 40.0
    mode: WeightMode = WeightMode.AS_WRITTEN

    def __post_init__(self):
        if not (self.d_max > 0 and self.v_max > 0):
            raise ValueError("d_max and v_max must be positive")
        object.__setattr__(self, "mode", WeightMode(self.mode))


@dataclass(frozen=True)
class Normalization:
    """Constants dividing raw features before they enter a graph."""

    road_length: float = 2.5e4
    speed: float = SPEED_SCALE
    accel: float = ACCEL_SCALE
    gap: float = 100.0

    def as_dict(self):
        return {"road_length": self.road_length, "speed": self.speed, "accel": self.accel, "gap": self.gap}


@dataclass
class VVGraph:
    node_features: np.ndarray  # (M, 6): X, V, I, dX, dV, a
    adjacency: np.ndarray  # (M, M)
    kind: np.ndarray


@dataclass
class FFGraph:
    node_features: np.ndarray  # (N, 4): V_lead, dX_lead, mean V, mean a
    adjacency: np.ndarray  # (N, N)


@dataclass
class NestedTrafficGraph:
    vv: VVGraph
    ff: FFGraph
    membership: np.ndarray  # vehicle id -> platoon id, -1 for the leader
    cav_ids: np.ndarray = field(default=None)

    @property
    def n_vehicles(self) -> int:
        return self.vv.adjacency.shape[0]

    @property
    def n_platoons(self) -> int:
        return self.ff.adjacency.shape[0]

    def subgraph_nodes(self, platoon: int) -> np.ndarray:
        return np.flatnonzero(self.membership == platoon)


def st_weight(delta_d: float, delta_v: float, p: StWeightParams) -> float:
    """Spatio-temporal edge weight from relative distance and speed.

    ``AS_WRITTEN`` keeps the printed rule: ``max(ln(1 + D/d + |dv|/V), 1)``
    inside the region ``d < D and |dv| >= V``, zero elsewhere. ``PROSE``
    follows the stated intent instead: the weight rises to 1 as vehicles get
    close or the speed difference grows and falls to 0 as ``d`` reaches ``D``.
    """
    if not delta_d > 0:
        raise ValueError(f"delta_d must be positive, got {delta_d}")
    if delta_d >= p.d_max:
        return 0.0
    f = math.log(1.0 + p.d_max / delta_d + abs(delta_v) / p.v_max)
    if p.mode is WeightMode.AS_WRITTEN:
        return max(f, 1.0) if abs(delta_v) >= p.v_max else 0.0
    return min(1.0, max(0.0, 1.0 - math.log(2.0) / f))


def st_weight_array(delta_d, delta_v, p: StWeightParams) -> np.ndarray:
    """Elementwise :func:`st_weight`; entries with ``delta_d <= 0`` give 0."""
    d = np.asarray(delta_d, dtype=float)
    dv = np.abs(np.asarray(delta_v, dtype=float))
    active = (d > 0) & (d < p.d_max)
    safe_d = np.where(active, d, 1.0)
    f = np.log(1.0 + p.d_max / safe_d + dv / p.v_max)
    if p.mode is WeightMode.AS_WRITTEN:
        w = np.where(dv >= p.v_max, np.maximum(f, 1.0), 0.0)
    else:
        w = np.clip(1.0 - math.log(2.0) / f, 0.0, 1.0)
    return np.where(active, w, 0.0)


def rsu_index(position, rsu_span: float) -> np.ndarray:
    return np.floor(np.asarray(position) / rsu_span).astype(int)


def vehicle_features(world: WorldState, norm: Normalization, normalize=True) -> np.ndarray:
    m = world.n_vehicles
    x = world.position
    feats = np.empty((m, F_V))
    gap = np.empty(m)
    dv = np.empty(m)
    gap[0], dv[0] = norm.gap, 0.0  # leader: sentinel gap
    gap[1:] = world.gaps()
    dv[1:] = world.speed[:-1] - world.speed[1:]
    feats[:, 0] = x - x[0]
    feats[:, 1] = world.speed
    feats[:, 2] = world.kind
    feats[:, 3] = gap
    feats[:, 4] = dv
    feats[:, 5] = world.accel
    if normalize:
        feats /= np.array([norm.road_length, norm.speed, 2.0, norm.gap, norm.speed, norm.accel])
    return feats


def vv_connectivity(world: WorldState) -> np.ndarray:
    """Binary V-V connectivity before spatio-temporal weighting.

    CAV pairs sharing an RSU span are linked; a CAV is linked to every AV
    within its V2V range; AVs never link to each other; every vehicle has a
    self-loop. The trajectory leader is treated like an AV: it is observed
    by CAVs in range but does not communicate.
    """
    kind = world.kind
    x = world.position
    is_cav = kind == VehicleKind.CAV
    rsu = rsu_index(x, world.rsu_span)
    dist = np.abs(x[:, None] - x[None, :])
    cav_cav = is_cav[:, None] & is_cav[None, :] & (rsu[:, None] == rsu[None, :])
    reach = dist <= world.v2v_range
    cav_other = (is_cav[:, None] & ~is_cav[None, :]) & reach
    conn = cav_cav | cav_other | cav_other.T
    np.fill_diagonal(conn, True)
    return conn


def build_vv_graph(
    world: WorldState,
    p: StWeightParams | None = None,
    norm: Normalization | None = None,
    weighted: bool = True,
    normalize: bool = True,
) -> VVGraph:
    """V-V graph of a world snapshot.

    With ``weighted`` the off-diagonal edges carry :func:`st_weight`
    values; otherwise the binary connectivity is used as is.
    """
    p = p or StWeightParams()
    norm = norm or Normalization(gap=p.d_max)
    if world.collision_flag:
        raise GraphError("cannot build a graph from a collided world")
    conn = vv_connectivity(world)
    if weighted:
        x, v = world.position, world.speed
        dist = np.abs(x[:, None] - x[None, :])
        w = st_weight_array(dist, v[:, None] - v[None, :], p)
        adj = np.where(conn, w, 0.0)
    else:
        adj = conn.astype(float)
    np.fill_diagonal(adj, 1.0)
    return VVGraph(vehicle_features(world, norm, normalize), adj, world.kind.copy())


def build_ff_graph(world: WorldState, norm: Normalization | None = None, normalize=True) -> FFGraph:
    """F-F graph: one node per platoon, linked when their CAVs share an RSU span."""
    norm = norm or Normalization()
    n = world.n_groups
    feats = np.empty((n, F_F))
    cav_pos = np.empty(n)
    for g, (cav, avs) in enumerate(world.groups):
        members = [cav, *avs]
        if not members:
            raise GraphError(f"platoon {g} is empty")
        feats[g, 0] = world.speed[cav]
        feats[g, 1] = world.position[cav - 1] - world.position[cav] - world.vehicle_length
        feats[g, 2] = world.speed[members].mean()
        feats[g, 3] = world.accel[members].mean()
        cav_pos[g] = world.position[cav]
    rsu = rsu_index(cav_pos, world.rsu_span)
    adj = (rsu[:, None] == rsu[None, :]).astype(float)
    if normalize:
        feats /= np.array([norm.speed, norm.gap, norm.speed, norm.accel])
    return FFGraph(feats, adj)


def nest(vv: VVGraph, ff: FFGraph, membership, cav_ids=None) -> NestedTrafficGraph:
    """Bundle both levels after checking they describe the same platoons."""
    membership = np.asarray(membership, dtype=int)
    m = vv.adjacency.shape[0]
    n = ff.adjacency.shape[0]
    if vv.node_features.shape[0] != m or vv.adjacency.shape != (m, m):
        raise GraphError("V-V feature/adjacency sizes disagree")
    if ff.node_features.shape[0] != n or ff.adjacency.shape != (n, n):
        raise GraphError("F-F feature/adjacency sizes disagree")
    if membership.shape != (m,):
        raise GraphError(f"membership covers {membership.shape[0]} vehicles, graph has {m}")
    followers = vv.kind != VehicleKind.TL
    if np.any(membership[followers] < 0) or np.any(membership >= n):
        raise GraphError("every CAV/AV must belong to exactly one platoon in range")
    present = np.unique(membership[followers])
    if len(present) != n:
        raise GraphError(f"membership names {len(present)} platoons, F-F graph has {n}")
    if cav_ids is None:
        cav_ids = np.flatnonzero(vv.kind == VehicleKind.CAV)
    return NestedTrafficGraph(vv, ff, membership, np.asarray(cav_ids, dtype=int))


def build_nested_graph(
    world: WorldState,
    p: StWeightParams | None = None,
    weighted: bool = True,
    norm: Normalization | None = None,
) -> NestedTrafficGraph:
    p = p or StWeightParams()
    norm = norm or Normalization(gap=p.d_max)
    vv = build_vv_graph(world, p, norm, weighted=weighted)
    ff = build_ff_graph(world, norm)
    return nest(vv, ff, world.group, world.cav_ids)


def nested_message_pass(g: NestedTrafficGraph, h_vehicle, message, update, pool=np.mean):
    """One round of nested message passing.

    Every vehicle ``v`` of platoon ``w`` sums ``message(h_v, h_u, e_vu)``
    over its neighbours ``u`` inside the same platoon (self-loop included)
    and is updated with ``update(h_v, m_v)``. The pooled states of each
    subgraph then become the platoon's node state, which receives the same
    treatment over the F-F graph. The leader has no platoon and is passed
    through unchanged.

    Returns
    -------
    (new vehicle states, new platoon states)
    """
    h_vehicle = np.asarray(h_vehicle, dtype=float)
    if h_vehicle.shape[0] != g.n_vehicles:
        raise GraphError("vehicle state rows must match V-V node count")
    out_v = h_vehicle.copy()
    adj = g.vv.adjacency
    for w in range(g.n_platoons):
        nodes = g.subgraph_nodes(w)
        for v in nodes:
            msg = sum(
                message(h_vehicle[v], h_vehicle[u], adj[v, u]) for u in nodes if adj[v, u] > 0
            )
            out_v[v] = update(h_vehicle[v], msg)
    pooled = np.stack([pool(out_v[g.subgraph_nodes(w)], axis=0) for w in range(g.n_platoons)])
    fadj = g.ff.adjacency
    out_f = np.stack(
        [
            update(pooled[i], sum(message(pooled[i], pooled[j], fadj[i, j]) for j in np.flatnonzero(fadj[i] > 0)))
            for i in range(g.n_platoons)
        ]
    )
    return out_v, out_f
