"""Named parameter storage, update rules and checkpoint serialization."""
from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor

CHECKPOINT_VERSION = 1


class NonFiniteError(FloatingPointError):
    pass


class ShapeMismatchError(ValueError):
    pass


class ParameterStore:
    """Ordered collection of trainable tensors plus update-rule state.

    The default rule is plain gradient descent. ``rule="adam"`` keeps first
    and second moment estimates per parameter.
    """

    def __init__(self, rule: str = "sgd", betas=(0.9, 0.999), eps: float = 1e-8, grad_clip: float | None = None):
        if rule not in ("sgd", "adam"):
            raise ValueError(f"unknown update rule {rule!r}")
        self.params: dict[str, Tensor] = {}
        self.rule = rule
        self.betas = betas
        self.eps = eps
        self.grad_clip = grad_clip
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=float), requires_grad=True)
        self.params[name] = t
        return t

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self):
        return len(self.params)

    def names(self):
        return list(self.params)

    def shapes(self) -> dict[str, tuple]:
        return {k: t.shape for k, t in self.params.items()}

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (np.zeros_like(t.data) if t.grad is None else t.grad) for k, t in self.params.items()}

    def flat(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self.params.values()]) if self.params else np.zeros(0)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        expected, found = self.shapes(), {k: np.shape(v) for k, v in state.items()}
        if set(expected) != set(found) or any(expected[k] != found[k] for k in expected):
            diff = {k: (expected.get(k), found.get(k)) for k in set(expected) | set(found) if expected.get(k) != found.get(k)}
            raise ShapeMismatchError(f"parameter shapes differ (expected, found): {diff}")
        for k, v in state.items():
            self.params[k].data = np.array(v, dtype=float)

    def copy(self) -> "ParameterStore":
        other = ParameterStore(self.rule, self.betas, self.eps, self.grad_clip)
        for k, t in self.params.items():
            other.add(k, t.data.copy())
        return other

    def apply_update(self, lr: float):
        """Move every parameter against its gradient, then clear gradients."""
        grads = self.grads()
        if self.grad_clip is not None:
            norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if norm > self.grad_clip:
                grads = {k: g * (self.grad_clip / norm) for k, g in grads.items()}
        self.step_count += 1
        b1, b2 = self.betas
        for k, t in self.params.items():
            g = grads[k]
            if self.rule == "sgd":
                delta = lr * g
            else:
                m = self._m.get(k, np.zeros_like(g))
                v = self._v.get(k, np.zeros_like(g))
                m = b1 * m + (1 - b1) * g
                v = b2 * v + (1 - b2) * g * g
                self._m[k], self._v[k] = m, v
                m_hat = m / (1 - b1**self.step_count)
                v_hat = v / (1 - b2**self.step_count)
                delta = lr * m_hat / (np.sqrt(v_hat) + self.eps)
            new = t.data - delta
            if not np.all(np.isfinite(new)):
                raise NonFiniteError(f"non-finite value in parameter {k!r} after update")
            t.data = new
        self.zero_grad()


def soft_update(target: ParameterStore, online: ParameterStore, tau: float):
    """``target <- tau * online + (1 - tau) * target`` for every parameter."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if target.shapes() != online.shapes():
        raise ShapeMismatchError("target and online stores have different shapes")
    for k, t in target.params.items():
        t.data = tau * online.params[k].data + (1.0 - tau) * t.data
    return target


def save_checkpoint(path, stores: dict[str, ParameterStore], meta: dict):
    """Write all stores into one ``.npz``-formatted file (any extension)."""
    arrays = {}
    for prefix, store in stores.items():
        for k, v in store.state_dict().items():
            arrays[f"{prefix}/{k}"] = v
    header = dict(meta, version=CHECKPOINT_VERSION, shapes={k: list(v.shape) for k, v in arrays.items()})
    arrays["__meta__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def read_checkpoint(path) -> tuple[dict[str, dict[str, np.ndarray]], dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        stores: dict[str, dict[str, np.ndarray]] = {}
        for key in data.files:
            if key == "__meta__":
                continue
            prefix, name = key.split("/", 1)
            stores.setdefault(prefix, {})[name] = data[key]
    return stores, meta


def load_checkpoint(path, stores: dict[str, ParameterStore]) -> dict:
    """Load parameters into ``stores`` in place; refuses any shape mismatch."""
    saved, meta = read_checkpoint(path)
    if set(saved) != set(stores):
        raise ShapeMismatchError(f"checkpoint holds stores {sorted(saved)}, expected {sorted(stores)}")
    for prefix, store in stores.items():
        store.load_state_dict(saved[prefix])
    return meta
