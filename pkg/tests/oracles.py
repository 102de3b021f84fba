"""Independent reference implementations used as test oracles.

Written directly from the defining formulas with ``math`` and explicit
loops, sharing no code with the package.
"""
import math

import numpy as np


def idm(v, v_front, gap, v0=40.0, T=1.0, a=1.3, b=2.0, delta=4.0, s0=2.0):
    dv = v - v_front
    s_star = s0 + max(0.0, v * T + v * dv / (2.0 * math.sqrt(a * b)))
    acc = a * (1.0 - (v / v0) ** delta - (s_star / gap) ** 2)
    return min(4.5, max(-4.5, acc))


def st_weight_as_written(dd, dv, d_max=100.0, v_max=40.0):
    if dd < d_max and abs(dv) >= v_max:
        return max(math.log(1.0 + d_max / dd + abs(dv) / v_max), 1.0)
    return 0.0


def safe_distance(v_e, v_f, t0=0.2, a_max=4.5, d0=2.0):
    return v_e * t0 + (v_e**2 - v_f**2) / (2.0 * a_max) + d0


def drive_power(v, a, m=1600.0, cr=0.01, rho=1.2, cda=0.6, eta=0.9, regen=0.6, aux=500.0, cap=6.0e4, g=9.81):
    force = m * a + m * g * cr + 0.5 * rho * cda * v * v
    wheel = force * v
    bat = wheel / eta if wheel >= 0 else max(wheel * regen, -cap)
    return bat + aux


def laplacian_spectrum_cycle(n):
    return sorted(2.0 - 2.0 * math.cos(2.0 * math.pi * k / n) for k in range(n))


def entropy_from_spectrum(lams, tol=1e-10):
    pos = [x for x in lams if x > tol]
    total = sum(pos)
    return -sum((x / total) * math.log(x / total) for x in pos) if pos else 0.0


def gat_head(h, adj, W, att, slope=0.2, weighted=True):
    """One attention head with explicit loops: returns (alpha, aggregated)."""
    n = h.shape[0]
    wh = h @ W
    fh = W.shape[1]
    alpha = np.zeros((n, n))
    for i in range(n):
        nbrs = [j for j in range(n) if adj[i, j] > 0]
        logits = []
        for j in nbrs:
            e = float(att[:fh] @ wh[i] + att[fh:] @ wh[j])
            e = e if e > 0 else slope * e
            if weighted:
                e += math.log(adj[i, j])
            logits.append(e)
        mx = max(logits)
        ex = [math.exp(x - mx) for x in logits]
        s = sum(ex)
        for j, x in zip(nbrs, ex):
            alpha[i, j] = x / s
    agg = alpha @ wh
    return alpha, agg


def elu(x):
    return np.where(x > 0, x, np.exp(np.minimum(x, 0)) - 1.0)


def throughput(xs, ts, x_star, t0, t1):
    count = 0
    for k in range(1, len(ts)):
        if not (t0 < ts[k] <= t1):
            continue
        for i in range(xs.shape[1]):
            if xs[k - 1, i] < x_star <= xs[k, i]:
                count += 1
    return count * 3600.0 / (t1 - t0)
