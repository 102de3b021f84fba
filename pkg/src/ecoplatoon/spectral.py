"""Structural analysis of nested graphs: spectral entropy and information intensity."""
from __future__ import annotations

from collections import Counter

import numpy as np

from .graph import NestedTrafficGraph


def laplacian(adjacency) -> np.ndarray:
    """Combinatorial Laplacian ``D - A`` with self-loops dropped."""
    a = np.array(adjacency, dtype=float)
    np.fill_diagonal(a, 0.0)
    return np.diag(a.sum(axis=1)) - a


def spectral_entropy(adjacency, atol: float = 1e-10) -> float:
    """Shannon entropy (nats) of the normalized Laplacian spectrum.

    Eigenvalues below ``atol`` count as zero and contribute nothing. An
    edgeless graph has an all-zero spectrum and entropy 0 by convention.
    """
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.allclose(a, a.T):
        raise ValueError("spectral entropy needs a symmetric adjacency")
    if np.any(a < 0):
        raise ValueError("adjacency must be nonnegative")
    lam = np.linalg.eigvalsh(laplacian(a))
    lam = lam[lam > atol]
    if lam.size == 0:
        return 0.0
    p = lam / lam.sum()
    return float(-(p * np.log(p)).sum()) + 0.0  # no negative zero


def nested_entropy(subgraphs, weights=None) -> float:
    """Weighted average of the spectral entropies of the given adjacencies."""
    subgraphs = list(subgraphs)
    if weights is None:
        weights = np.full(len(subgraphs), 1.0 / len(subgraphs))
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(subgraphs),):
        raise ValueError("one weight per subgraph required")
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-12):
        raise ValueError("subgraph weights must be nonnegative and sum to 1")
    return float(sum(wi * spectral_entropy(a) for wi, a in zip(w, subgraphs)))


def subgraph_adjacencies(g: NestedTrafficGraph, include_ff: bool = True) -> list[np.ndarray]:
    """Per-platoon V-V blocks followed (optionally) by the F-F adjacency."""
    blocks = []
    for w in range(g.n_platoons):
        idx = g.subgraph_nodes(w)
        blocks.append(symmetrize(g.vv.adjacency[np.ix_(idx, idx)]))
    if include_ff:
        blocks.append(symmetrize(g.ff.adjacency))
    return blocks


def symmetrize(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def information_intensity(g: NestedTrafficGraph, intensity=None, beta=None):
    """Intra-platoon, inter-platoon and total information intensity.

    ``intensity`` is an ``M x M`` nonnegative matrix of pairwise
    intensities ``I(u, v)`` (default: off-diagonal V-V edge weights) and
    ``beta`` an ``N x N`` nonnegative platoon coupling (default: F-F
    adjacency). Diagonal ``beta`` entries are ignored.

    Returns
    -------
    (intra, inter, total)
    """
    if intensity is None:
        intensity = np.array(g.vv.adjacency, dtype=float)
        np.fill_diagonal(intensity, 0.0)
    if beta is None:
        beta = g.ff.adjacency
    return intensity_from_blocks(intensity, beta, g.membership)


def intensity_from_blocks(intensity, beta, membership):
    intensity = np.asarray(intensity, dtype=float)
    beta = np.asarray(beta, dtype=float)
    membership = np.asarray(membership)
    if np.any(intensity < 0) or np.any(beta < 0):
        raise ValueError("intensities and platoon couplings must be nonnegative")
    n = beta.shape[0]
    # block sums S[i, j] = sum_{u in i, v in j} I(u, v)
    onehot = np.zeros((len(membership), n))
    rows = np.flatnonzero(membership >= 0)
    onehot[rows, membership[rows]] = 1.0
    block = onehot.T @ intensity @ onehot
    intra = float(np.trace(block))
    off = beta * block
    inter = float(off.sum() - np.trace(off))
    return intra, inter, intra + inter


def wl_refinement(adjacency, iterations: int | None = None) -> list[Counter]:
    """1-WL colour refinement; returns the colour histogram after each round.

    Colours are canonical tuples, so histograms from different graphs can be
    compared directly.
    """
    a = np.asarray(adjacency) > 0
    np.fill_diagonal(a, False)
    n = a.shape[0]
    colors = [()] * n
    history = [Counter(colors)]
    for _ in range(iterations or n):
        colors = [(colors[v], tuple(sorted(colors[u] for u in np.flatnonzero(a[v])))) for v in range(n)]
        history.append(Counter(colors))
    return history


def wl_indistinguishable(a1, a2) -> bool:
    """True when 1-WL gives identical colour multisets at every round."""
    n = max(len(a1), len(a2))
    return all(h1 == h2 for h1, h2 in zip(wl_refinement(a1, n), wl_refinement(a2, n)))


def cycle_graph(n: int) -> np.ndarray:
    a = np.zeros((n, n))
    for i in range(n):
        a[i, (i + 1) % n] = a[(i + 1) % n, i] = 1.0
    return a


def two_triangles() -> np.ndarray:
    a = np.zeros((6, 6))
    a[:3, :3] = cycle_graph(3)
    a[3:, 3:] = cycle_graph(3)
    return a


def analyze(g: NestedTrafficGraph, weights=None) -> dict:
    """Entropy and intensity report of a nested graph.

    The per-platoon V-V blocks and the F-F graph are the subgraphs; their
    entropies are averaged uniformly unless ``weights`` is given.
    """
    blocks = subgraph_adjacencies(g)
    entropies = [spectral_entropy(b) for b in blocks]
    intra, inter, total = information_intensity(g)
    return {
        "platoon_entropy": entropies[:-1],
        "ff_entropy": entropies[-1],
        "nested_entropy": nested_entropy(blocks, weights),
        "intra_intensity": intra,
        "inter_intensity": inter,
        "total_intensity": total,
    }
