"""Dense stacks and multi-head graph attention built on :mod:`.autodiff`."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .params import ParameterStore

ACTION_BOUND = 4.5


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense:
    def __init__(self, store: ParameterStore, name: str, fan_in: int, fan_out: int, rng, activation="identity"):
        self.W = store.add(f"{name}.W", _uniform(rng, fan_in, (fan_in, fan_out)))
        self.b = store.add(f"{name}.b", _uniform(rng, fan_in, (fan_out,)))
        self.activation = activation

    def __call__(self, x):
        return ad.ACTIVATIONS[self.activation](ad.matmul(x, self.W) + self.b)


class MLP:
    """Affine + activation stack applied over the last axis.

    ``output="bounded"`` ends in ``4.5 * tanh`` so outputs respect the CAV
    acceleration bounds.
    """

    def __init__(self, store, name, widths, rng, hidden_activation="relu", output="identity"):
        if len(widths) < 2:
            raise ValueError("MLP needs at least input and output widths")
        self.layers = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            last = i == len(widths) - 2
            act = "identity" if last else hidden_activation
            self.layers.append(Dense(store, f"{name}.{i}", a, b, rng, act))
        self.output = output
        self.widths = tuple(widths)

    def __call__(self, x):
        x = ad.as_tensor(x)
        if x.shape[-1] != self.widths[0]:
            raise ValueError(f"expected input width {self.widths[0]}, got {x.shape[-1]}")
        for layer in self.layers:
            x = layer(x)
        if self.output == "bounded":
            x = ad.tanh(x) * ACTION_BOUND
        return x


def mlp_forward(x, layers):
    """Apply a sequence of ``(W, b, activation)`` triples to ``x``."""
    out = ad.as_tensor(x)
    for W, b, act in layers:
        W, b = ad.as_tensor(W), ad.as_tensor(b)
        if out.shape[-1] != W.shape[0]:
            raise ValueError(f"width mismatch: {out.shape[-1]} into {W.shape[0]}")
        out = ad.ACTIVATIONS[act](ad.matmul(out, W) + b)
    return out


def attention_bias(adjacency, weighted: bool = True) -> np.ndarray:
    """Logit offsets for :class:`GATLayer`.

    Non-edges get ``-inf``. Edges get ``ln(weight)`` when ``weighted``
    (multiplying the unnormalized attention by the edge weight) and 0
    otherwise, so weights act only as connectivity. A head axis is inserted
    before the last two axes.
    """
    a = np.asarray(adjacency, dtype=float)
    with np.errstate(divide="ignore"):
        if weighted:
            bias = np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), -np.inf)
        else:
            bias = np.where(a > 0, 0.0, -np.inf)
    return np.expand_dims(bias, -3)


@dataclass
class GatOutput:
    out: ad.Tensor
    alpha: np.ndarray  # (..., K, n, n)


class GATLayer:
    """Multi-head graph attention.

    Per head ``k``: ``alpha_ij = softmax_j(LeakyReLU(a_k . [W_k h_i, W_k h_j]) + bias_ij)``
    over the neighbours of ``i``, then ``sum_j alpha_ij W_k h_j``. Hidden
    layers concatenate the heads; a final layer averages them before the
    activation.
    """

    def __init__(self, store, name, f_in, f_head, heads, rng, final=False, activation="elu", slope=0.2):
        if heads < 1:
            raise ValueError("need at least one attention head")
        self.W = store.add(f"{name}.W", _uniform(rng, f_in, (heads, f_in, f_head)))
        self.att = store.add(f"{name}.att", _uniform(rng, f_head, (heads, 2 * f_head, 1)))
        self.f_in, self.f_head, self.heads = f_in, f_head, heads
        self.final, self.activation, self.slope = final, activation, slope
        self._src = np.arange(f_head)
        self._dst = np.arange(f_head, 2 * f_head)

    @property
    def out_width(self):
        return self.f_head if self.final else self.f_head * self.heads

    def __call__(self, h, bias) -> GatOutput:
        h = ad.as_tensor(h)
        if h.shape[-1] != self.f_in:
            raise ValueError(f"expected {self.f_in} input features, got {h.shape[-1]}")
        lead = h.shape[:-2]
        n = h.shape[-2]
        nd = len(lead)
        # all heads in one product against the (F_in, K*Fh) flattened weights
        w_flat = ad.reshape(ad.transpose(self.W, (1, 0, 2)), (self.f_in, self.heads * self.f_head))
        wh = ad.reshape(ad.matmul(h, w_flat), lead + (n, self.heads, self.f_head))
        wh = ad.transpose(wh, tuple(range(nd)) + (nd + 1, nd, nd + 2))  # (..., K, n, Fh)
        s_src = ad.matmul(wh, ad.take(self.att, self._src, axis=1))  # (..., K, n, 1)
        s_dst = ad.matmul(wh, ad.take(self.att, self._dst, axis=1))
        perm = tuple(range(nd)) + (nd, nd + 2, nd + 1)
        e = ad.leaky_relu(s_src + ad.transpose(s_dst, perm), self.slope)  # (..., K, n, n)
        alpha = ad.masked_softmax(e, bias)
        agg = ad.matmul(alpha, wh)  # (..., K, n, Fh)
        if self.final:
            out = ad.mean(agg, axis=nd)
        else:
            perm = tuple(range(nd)) + (nd + 1, nd, nd + 2)
            out = ad.reshape(ad.transpose(agg, perm), lead + (n, self.heads * self.f_head))
        return GatOutput(ad.ACTIVATIONS[self.activation](out), alpha.data)


def gat_attention(features, adjacency, layer: GATLayer, weighted: bool = True) -> GatOutput:
    """Run ``layer`` on a feature matrix and its (weighted) adjacency."""
    adjacency = np.asarray(adjacency, dtype=float)
    if not (adjacency > 0).any(axis=-1).all():
        raise ValueError("isolated node without a self-loop")
    return layer(features, attention_bias(adjacency, weighted))
