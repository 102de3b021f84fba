"""Evaluation battery over recorded runs.

A :class:`RunLog` holds dense per-step records of every vehicle plus the
per-step energy ledger. Everything here is a pure function of the log.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sim import SafetyParams, VehicleKind, safe_distance

ACCEL_BIN = 0.1
JERK_BIN = 0.05
ENERGY_COMPONENTS = ("battery", "comm", "mig", "cal")

SUMMARY_COLUMNS = (
    "x_max", "x_mean", "x_std",
    "q_mean",
    "v_min",
    "a_max", "a_min",
    "j_max", "j_mean",
    "E_max", "E_min",
    "theta_safe_max", "theta_safe_mean", "theta_safe_std",
)
# +1: larger is better, -1: smaller is better
COLUMN_SENSE = {c: -1 for c in SUMMARY_COLUMNS} | {"q_mean": 1, "v_min": 1, "a_min": 1}


@dataclass
class RunLog:
    t: np.ndarray  # (T,)
    x: np.ndarray  # (T, M)
    v: np.ndarray
    a: np.ndarray
    kind: np.ndarray  # (M,)
    group: np.ndarray  # (M,), -1 for the leader
    energy: np.ndarray | None = None  # (T, M, 4) joules spent in the step ending at t, <= 0
    dt: float = 0.1
    vehicle_length: float = 5.0
    config: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.t.ndim != 1 or self.x.shape != (len(self.t), len(self.kind)):
            raise ValueError("log arrays are not dense in (t, vehicle)")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("log times must increase")

    @property
    def n_vehicles(self):
        return self.x.shape[1]

    @property
    def cav_ids(self):
        return np.flatnonzero(self.kind == VehicleKind.CAV)

    @classmethod
    def from_worlds(cls, worlds, energies=None, **kw) -> "RunLog":
        """Stack a sequence of world snapshots (and optional ``(M, 4)`` energy rows)."""
        w0 = worlds[0]
        log = cls(
            t=np.array([w.time for w in worlds]),
            x=np.stack([w.position for w in worlds]),
            v=np.stack([w.speed for w in worlds]),
            a=np.stack([w.accel for w in worlds]),
            kind=w0.kind.copy(),
            group=w0.group.copy(),
            energy=None if energies is None else np.stack(energies),
            vehicle_length=w0.vehicle_length,
            **kw,
        )
        return log


def default_window(log: RunLog, warmup=0.1):
    t0, t1 = float(log.t[0]), float(log.t[-1])
    return t0 + warmup * (t1 - t0), t1


def throughput(log: RunLog, x_star: float | None = None, window=None) -> float:
    """Vehicles per hour crossing ``x_star`` (upward) inside ``window``.

    Defaults: ``x_star`` is the midpoint of the occupied road stretch and
    the window skips the first 10 % of the run.
    """
    if x_star is None:
        x_star = 0.5 * (float(log.x.min()) + float(log.x.max()))
    t0, t1 = default_window(log) if window is None else window
    if not t1 > t0:
        raise ValueError("empty throughput window")
    crossed = (log.x[:-1] < x_star) & (log.x[1:] >= x_star)
    in_window = (log.t[1:] > t0) & (log.t[1:] <= t1)
    count = int(crossed[in_window].sum())
    return count * 3600.0 / (t1 - t0)


def cav_gaps(log: RunLog):
    cav = log.cav_ids
    return log.x[:, cav - 1] - log.x[:, cav] - log.vehicle_length


def spacing_stats(log: RunLog, safety: SafetyParams | None = None) -> dict:
    """Gap statistics of every CAV to its front vehicle, plus safety margins.

    ``platoon_gap_*`` measures each CAV to the previous CAV (or the leader),
    the platoon-to-platoon reading of spacing. Standard deviations use the
    population convention.
    """
    safety = safety or SafetyParams()
    cav = log.cav_ids
    gaps = cav_gaps(log)
    d_s = safe_distance(log.v[:, cav], log.v[:, cav - 1], safety)
    theta = gaps - d_s
    heads = np.concatenate([[0], cav[:-1]])
    platoon = log.x[:, heads] - log.x[:, cav] - log.vehicle_length
    out = {}
    for name, arr in (("x", gaps), ("theta_safe", theta), ("platoon_gap", platoon)):
        out[f"{name}_max"] = float(arr.max())
        out[f"{name}_mean"] = float(arr.mean())
        out[f"{name}_std"] = float(arr.std())
    return out


def jerk(log: RunLog) -> np.ndarray:
    """Backward-difference jerk; the first sample is defined as 0."""
    j = np.zeros_like(log.a)
    j[1:] = np.diff(log.a, axis=0) / np.diff(log.t)[:, None]
    return j


def _histogram(values, width):
    lo = np.floor(values.min() / width - 0.5)
    hi = np.ceil(values.max() / width + 0.5)
    edges = (np.arange(lo, hi + 1) + 0.5) * width  # bins centred on multiples of width
    counts, edges = np.histogram(values, bins=edges)
    return counts, edges


def accel_jerk_distributions(log: RunLog, vehicles=None) -> dict:
    """Histograms of acceleration and jerk over the selected followers."""
    idx = np.flatnonzero(log.kind != VehicleKind.TL) if vehicles is None else np.asarray(vehicles)
    a = log.a[:, idx].ravel()
    j = jerk(log)[:, idx].ravel()
    a_counts, a_edges = _histogram(a, ACCEL_BIN)
    j_counts, j_edges = _histogram(j, JERK_BIN)
    return {
        "accel_hist": (a_counts, a_edges),
        "jerk_hist": (j_counts, j_edges),
        "a_max": float(a.max()),
        "a_min": float(a.min()),
        "j_max": float(np.abs(j).max()),
        "j_mean": float(np.abs(j).mean()),
    }


def energy_per_meter(log: RunLog, grouping=None) -> tuple[dict, float | None]:
    """Energy per distance (J/m, positive) of each group and their mean.

    ``grouping`` maps group id to member vehicle ids (default: the log's
    platoons). Groups that did not move are reported as ``None``.
    """
    if log.energy is None:
        raise ValueError("log has no energy ledger")
    if grouping is None:
        grouping = {int(g): np.flatnonzero(log.group == g) for g in np.unique(log.group) if g >= 0}
    spent = -log.energy.sum(axis=(0, 2))  # per vehicle, J
    dist = log.x[-1] - log.x[0]
    out = {}
    for g, members in grouping.items():
        d = float(dist[members].sum())
        out[g] = float(spent[members].sum()) / d if d > 0 else None
    present = [v for v in out.values() if v is not None]
    return out, (float(np.mean(present)) if present else None)


def summary(log: RunLog, safety: SafetyParams | None = None, x_star=None, window=None) -> dict:
    """One row of evaluation results with the columns of :data:`SUMMARY_COLUMNS`."""
    sp = spacing_stats(log, safety)
    dist = accel_jerk_distributions(log)
    followers = log.kind != VehicleKind.TL
    row = {
        "x_max": sp["x_max"],
        "x_mean": sp["x_mean"],
        "x_std": sp["x_std"],
        "q_mean": throughput(log, x_star, window),
        "v_min": float(log.v[:, followers].min()),
        "a_max": dist["a_max"],
        "a_min": dist["a_min"],
        "j_max": dist["j_max"],
        "j_mean": dist["j_mean"],
        "E_max": float("nan"),
        "E_min": float("nan"),
        "theta_safe_max": sp["theta_safe_max"],
        "theta_safe_mean": sp["theta_safe_mean"],
        "theta_safe_std": sp["theta_safe_std"],
    }
    if log.energy is not None:
        per_group, _ = energy_per_meter(log)
        vals = [v for v in per_group.values() if v is not None]
        if vals:
            row["E_max"], row["E_min"] = float(max(vals)), float(min(vals))
    return row


def speed_variance(log: RunLog, vehicles=None) -> float:
    """Mean over the selected vehicles of their speed variance in time."""
    idx = np.flatnonzero(log.kind == VehicleKind.AV) if vehicles is None else np.asarray(vehicles)
    return float(log.v[:, idx].var(axis=0).mean())


# exports -------------------------------------------------------------------


def export_spacetime(log: RunLog, path) -> Path:
    """Write ``t,id,x,v`` rows sorted by (t, id) with round-trip float precision."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("t,id,x,v\n")
        for k, t in enumerate(log.t):
            for i in range(log.n_vehicles):
                fh.write(f"{float(t)!r},{i},{float(log.x[k, i])!r},{float(log.v[k, i])!r}\n")
    return path


def read_spacetime(path, kind=None, group=None) -> RunLog:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = np.unique(rows[:, 0])
    m = int(rows[:, 1].max()) + 1
    if len(rows) != len(t) * m:
        raise ValueError("space-time file is not dense in (t, id)")
    x = rows[:, 2].reshape(len(t), m)
    v = rows[:, 3].reshape(len(t), m)
    kind = np.full(m, VehicleKind.AV) if kind is None else kind
    group = np.zeros(m, dtype=int) if group is None else group
    return RunLog(t, x, v, np.zeros_like(v), np.asarray(kind), np.asarray(group))


def export_speed_traces(log: RunLog, path) -> Path:
    """Wide ``t,v_0,...,v_{M-1}`` speed traces for speed-fluctuation plots."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"v_{i}" for i in range(log.n_vehicles)])
        for k, t in enumerate(log.t):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in log.v[k]])
    return path


def export_energy_ledger(log: RunLog, path) -> Path:
    """Per-step ``t,id,battery,comm,mig,cal`` rows (joules)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("t,id," + ",".join(ENERGY_COMPONENTS) + "\n")
        for k, t in enumerate(log.t):
            for i in range(log.n_vehicles):
                vals = ",".join(repr(float(e)) for e in log.energy[k, i])
                fh.write(f"{float(t)!r},{i},{vals}\n")
    return path


def write_summary(row: dict, path) -> Path:
    """Summary as a JSON document (lossless for floats)."""
    path = Path(path)
    path.write_text(json.dumps({c: row[c] for c in SUMMARY_COLUMNS}, indent=2))
    return path


def read_summary(path) -> dict:
    data = json.loads(Path(path).read_text())
    missing = [c for c in SUMMARY_COLUMNS if c not in data]
    if missing:
        raise ValueError(f"summary {path} lacks columns {missing}")
    return {c: float(data[c]) for c in SUMMARY_COLUMNS}


def write_summary_csv(rows: dict[str, dict], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", *SUMMARY_COLUMNS])
        for name, row in rows.items():
            w.writerow([name] + [repr(float(row[c])) for c in SUMMARY_COLUMNS])
    return path


def compare(rows: dict[str, dict]) -> str:
    """Aligned text table; the best value of each column is starred."""
    if len(rows) < 2:
        raise ValueError("compare needs at least two summaries")
    keys = {tuple(sorted(r)) for r in rows.values()}
    if len(keys) != 1:
        raise ValueError("summaries have different metric sets")
    best = {}
    for c in SUMMARY_COLUMNS:
        vals = [r[c] for r in rows.values() if np.isfinite(r[c])]
        if vals:
            best[c] = max(vals) if COLUMN_SENSE[c] > 0 else min(vals)
    name_w = max(9, *(len(n) for n in rows))
    header = "algorithm".ljust(name_w) + "".join(c.rjust(16) for c in SUMMARY_COLUMNS)
    lines = [header]
    for name, r in rows.items():
        cells = []
        for c in SUMMARY_COLUMNS:
            mark = "*" if c in best and r[c] == best[c] else " "
            cells.append(f"{r[c]:.3f}{mark}".rjust(16))
        lines.append(name.ljust(name_w) + "".join(cells))
    return "\n".join(lines)
