"""Graph observation encoders for the four learning variants.

=======  =========================================================
DDPG     no graph: each CAV sees its own vehicle row and platoon row
MGAT     attention over the V-V graph with binary connectivity
STW      attention over the V-V graph with spatio-temporal weights
NSTW     STW plus a platoon-level pass over the F-F graph fed by
         pooled subgraph embeddings
=======  =========================================================
"""
from __future__ import annotations

import enum
from collections import Counter

import numpy as np

from ..graph import F_F, F_V, Normalization, StWeightParams, build_ff_graph, build_vv_graph, vehicle_features
from ..nn import GATLayer, ParameterStore, attention_bias
from ..nn import autodiff as ad
from ..sim import WorldState


class Ablation(str, enum.Enum):
    DDPG = "DDPG"
    MGAT = "MGAT"
    STW = "STW"
    NSTW = "NSTW"


OBS_KEYS = ("vv_x", "vv_adj", "ff_x", "ff_adj")


class GraphEncoder:
    """Maps batched graph observations to one fused feature row per CAV.

    Parameters
    ----------
    ablation : Ablation
        which variant to build
    membership : ndarray
        platoon index of every vehicle (-1 for the leader)
    cav_ids : ndarray
        vehicle index of each platoon's CAV
    heads, hidden, embed : int
        attention heads, hidden width of the first attention layer (split
        over heads) and output width of each encoder
    """

    def __init__(
        self,
        ablation,
        membership,
        cav_ids,
        rng,
        st_params: StWeightParams | None = None,
        norm: Normalization | None = None,
        heads: int = 4,
        hidden: int = 64,
        embed: int = 32,
        slope: float = 0.2,
    ):
        self.ablation = Ablation(ablation)
        self.membership = np.asarray(membership, dtype=int)
        self.cav_ids = np.asarray(cav_ids, dtype=int)
        self.st_params = st_params or StWeightParams()
        self.norm = norm or Normalization(gap=self.st_params.d_max)
        self.counters = Counter()
        self.store = ParameterStore()
        n = len(self.cav_ids)
        m = len(self.membership)
        pool = np.zeros((n, m))
        for g in range(n):
            idx = np.flatnonzero(self.membership == g)
            pool[g, idx] = 1.0 / len(idx)
        self.pool = pool
        if hidden % heads:
            raise ValueError("hidden width must be divisible by the head count")
        self.vv_layers = self.ff_layers = ()
        if self.ablation is Ablation.DDPG:
            self.width = F_V + F_F
            return
        fh = hidden // heads
        self.vv_layers = (
            GATLayer(self.store, "vv.0", F_V, fh, heads, rng, slope=slope),
            GATLayer(self.store, "vv.1", hidden, embed, heads, rng, final=True, slope=slope),
        )
        self.width = embed
        if self.ablation is Ablation.NSTW:
            self.ff_layers = (
                GATLayer(self.store, "ff.0", F_F + embed, fh, heads, rng, slope=slope),
                GATLayer(self.store, "ff.1", hidden, embed, heads, rng, final=True, slope=slope),
            )
            self.width = 2 * embed

    @property
    def uses_graph(self) -> bool:
        return self.ablation is not Ablation.DDPG

    @property
    def weighted(self) -> bool:
        return self.ablation in (Ablation.STW, Ablation.NSTW)

    def observe(self, world: WorldState) -> dict[str, np.ndarray]:
        """Raw observation arrays of one snapshot (what the replay buffer stores)."""
        if not self.uses_graph:
            self.counters["flat_observe"] += 1
            vv_x = vehicle_features(world, self.norm)
            ff = build_ff_graph(world, self.norm)
            m, n = len(vv_x), len(ff.node_features)
            return {"vv_x": vv_x, "vv_adj": np.eye(m), "ff_x": ff.node_features, "ff_adj": np.eye(n)}
        self.counters["graph_observe"] += 1
        self.counters["weighted_adjacency" if self.weighted else "binary_adjacency"] += 1
        vv = build_vv_graph(world, self.st_params, self.norm, weighted=self.weighted)
        ff = build_ff_graph(world, self.norm)
        return {"vv_x": vv.node_features, "vv_adj": vv.adjacency, "ff_x": ff.node_features, "ff_adj": ff.adjacency}

    def __call__(self, obs: dict[str, np.ndarray]) -> ad.Tensor:
        """Fused features ``(B, N, width)`` for batched observations ``(B, ...)``."""
        vv_x = obs["vv_x"]
        if self.ablation is Ablation.DDPG:
            self.counters["graph_bypass"] += 1
            return ad.Tensor(np.concatenate([vv_x[:, self.cav_ids], obs["ff_x"]], axis=-1))
        self.counters["vv_pass"] += 1
        bias = attention_bias(obs["vv_adj"], weighted=self.weighted)
        h = ad.Tensor(vv_x)
        for layer in self.vv_layers:
            h = layer(h, bias).out
        cav_h = ad.take(h, self.cav_ids, axis=1)
        if self.ablation is not Ablation.NSTW:
            return cav_h
        self.counters["ff_pass"] += 1
        pooled = ad.matmul(self.pool, h)  # (B, N, embed)
        hf = ad.concat([ad.Tensor(obs["ff_x"]), pooled], axis=-1)
        fbias = attention_bias(obs["ff_adj"], weighted=False)
        for layer in self.ff_layers:
            hf = layer(hf, fbias).out
        return ad.concat([cav_h, hf], axis=-1)
