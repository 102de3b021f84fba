import numpy as np

from ecoplatoon.nn import autodiff as ad


def numeric_grad(f, x, h=1e-5):
    """Central finite differences of scalar ``f`` w.r.t. array ``x`` (mutated in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b, floor=1e-6):
    """Max abs difference over the larger magnitude; ``floor`` keeps near-zero
    gradients (pure finite-difference noise) from dominating."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(floor, np.max(np.abs(a)), np.max(np.abs(b))))


def check_grads(loss_fn, params, h=1e-5):
    """Max relative error between backprop and finite differences over ``params``.

    ``loss_fn`` builds the loss Tensor from the current parameter data.
    Per-parameter errors use a floor of ``1e-5`` times the largest gradient
    entry overall, below which central differences cannot resolve anything.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    with ad.no_grad():
        numeric = [numeric_grad(lambda: loss_fn().item(), p.data, h) for p in params]
    scale = max(float(np.max(np.abs(g))) if g.size else 0.0 for g in analytic + numeric)
    floor = max(1e-6, 1e-5 * scale)
    return max(rel_error(a, n, floor) for a, n in zip(analytic, numeric))


ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Store one PASS/FAIL line for the terminal summary."""
    ACCEPTANCE[criterion] = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[criterion])
