"""Plain-text nested graph dumps.

One directive per line, ``#`` starts a comment::

    vehicles 4
    platoons 2
    dims 6 4                # optional feature widths F_v F_f (must be 6 4)
    norm 25000 40 4.5 100   # optional road_length speed accel gap
    membership -1 0 0 1
    kind 0 1 2 1            # optional; default TL for -1, AV otherwise
    vv 1 2 1.98             # V-V adjacency entry (row, col, weight)
    ff 0 1 1                # F-F adjacency entry
    xv 1 0.1 0.5 0.5 0.2 0 0   # optional V-V feature row (node, F_v values)
    xf 0 0.5 0.2 0.5 0         # optional F-F feature row

Unlisted adjacency entries and feature rows are zero. Weights must be
finite and nonnegative. The normalization line is returned by
``parse_dump(text, with_norm=True)``; the analysis does not use it.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .graph import F_F, F_V, FFGraph, GraphError, NestedTrafficGraph, Normalization, VVGraph, nest
from .sim import VehicleKind


class DumpParseError(GraphError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _ints(tokens, lineno):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise DumpParseError(lineno, f"expected integers, got {' '.join(tokens)!r}") from None


def _floats(tokens, lineno):
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise DumpParseError(lineno, f"expected numbers, got {' '.join(tokens)!r}") from None
    if not all(np.isfinite(vals)):
        raise DumpParseError(lineno, "values must be finite")
    return vals


def parse_dump(text: str, with_norm: bool = False):
    """Parse a dump into a :class:`NestedTrafficGraph`.

    With ``with_norm`` the normalization constants (or ``None``) are
    returned alongside the graph.
    """
    m = n = None
    membership = kind = norm = None
    entries = {"vv": [], "ff": []}
    feats = {"xv": [], "xf": []}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head in ("vehicles", "platoons"):
            if len(rest) != 1:
                raise DumpParseError(lineno, f"{head} takes one count")
            (count,) = _ints(rest, lineno)
            if count < 1:
                raise DumpParseError(lineno, f"{head} must be positive")
            if head == "vehicles":
                m = count
            else:
                n = count
        elif head in ("membership", "kind"):
            if m is None:
                raise DumpParseError(lineno, f"{head} before vehicles")
            vals = _ints(rest, lineno)
            if len(vals) != m:
                raise DumpParseError(lineno, f"{head} lists {len(vals)} values for {m} vehicles")
            if head == "membership":
                membership = np.array(vals)
            else:
                if any(v not in (0, 1, 2) for v in vals):
                    raise DumpParseError(lineno, "kind values must be 0 (TL), 1 (CAV) or 2 (AV)")
                kind = np.array(vals)
        elif head == "dims":
            if _ints(rest, lineno) != [F_V, F_F]:
                raise DumpParseError(lineno, f"feature widths must be {F_V} {F_F}")
        elif head == "norm":
            vals = _floats(rest, lineno)
            if len(vals) != 4 or min(vals) <= 0:
                raise DumpParseError(lineno, "norm takes four positive constants")
            norm = Normalization(*vals)
        elif head in feats:
            size, width = (m, F_V) if head == "xv" else (n, F_F)
            if size is None:
                raise DumpParseError(lineno, f"{head} row before its node count")
            if len(rest) != width + 1:
                raise DumpParseError(lineno, f"{head} needs a node index and {width} values")
            (i,) = _ints(rest[:1], lineno)
            if not 0 <= i < size:
                raise DumpParseError(lineno, f"node index out of range 0..{size - 1}")
            feats[head].append((i, _floats(rest[1:], lineno)))
        elif head in entries:
            size = m if head == "vv" else n
            if size is None:
                raise DumpParseError(lineno, f"{head} entry before its node count")
            if len(rest) != 3:
                raise DumpParseError(lineno, f"{head} needs row, col and weight")
            i, j = _ints(rest[:2], lineno)
            try:
                w = float(rest[2])
            except ValueError:
                raise DumpParseError(lineno, f"bad weight {rest[2]!r}") from None
            if not (0 <= i < size and 0 <= j < size):
                raise DumpParseError(lineno, f"node index out of range 0..{size - 1}")
            if not np.isfinite(w) or w < 0:
                raise DumpParseError(lineno, "weights must be finite and nonnegative")
            entries[head].append((i, j, w))
        else:
            raise DumpParseError(lineno, f"unknown directive {head!r}")
    last = len(text.splitlines())
    if m is None or n is None or membership is None:
        raise DumpParseError(last, "dump needs vehicles, platoons and membership")
    if kind is None:
        kind = np.where(membership < 0, VehicleKind.TL, VehicleKind.AV)
    vv_adj, ff_adj = np.zeros((m, m)), np.zeros((n, n))
    for adj, key in ((vv_adj, "vv"), (ff_adj, "ff")):
        for i, j, w in entries[key]:
            adj[i, j] = w
    xv, xf = np.zeros((m, F_V)), np.zeros((n, F_F))
    for x, key in ((xv, "xv"), (xf, "xf")):
        for i, row in feats[key]:
            x[i] = row
    try:
        g = nest(VVGraph(xv, vv_adj, np.asarray(kind)), FFGraph(xf, ff_adj), membership)
    except GraphError as exc:
        raise DumpParseError(last, str(exc)) from exc
    return (g, norm) if with_norm else g


def read_dump(path) -> NestedTrafficGraph:
    return parse_dump(Path(path).read_text())


def format_dump(g: NestedTrafficGraph, norm: Normalization | None = None) -> str:
    lines = [
        f"vehicles {g.n_vehicles}",
        f"platoons {g.n_platoons}",
        f"dims {F_V} {F_F}",
    ]
    if norm is not None:
        lines.append("norm " + " ".join(repr(float(v)) for v in norm.as_dict().values()))
    lines += [
        "membership " + " ".join(str(int(x)) for x in g.membership),
        "kind " + " ".join(str(int(x)) for x in g.vv.kind),
    ]
    for key, adj in (("vv", g.vv.adjacency), ("ff", g.ff.adjacency)):
        for i, j in zip(*np.nonzero(adj)):
            lines.append(f"{key} {i} {j} {float(adj[i, j])!r}")
    for key, x in (("xv", g.vv.node_features), ("xf", g.ff.node_features)):
        for i, row in enumerate(x):
            lines.append(f"{key} {i} " + " ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_dump(g: NestedTrafficGraph, path, norm: Normalization | None = None) -> Path:
    path = Path(path)
    path.write_text(format_dump(g, norm))
    return path
