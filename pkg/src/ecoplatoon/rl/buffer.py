"""Replay buffer of graph-observation transitions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn.layers import ACTION_BOUND


@dataclass
class Transition:
    obs: dict[str, np.ndarray]
    action: np.ndarray
    reward: float
    next_obs: dict[str, np.ndarray]
    terminal: bool


@dataclass
class Batch:
    obs: dict[str, np.ndarray]
    action: np.ndarray  # (B, N)
    reward: np.ndarray  # (B,)
    next_obs: dict[str, np.ndarray]
    terminal: np.ndarray  # (B,)

    def __len__(self):
        return len(self.reward)


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform sampling without replacement.

    Storage is preallocated from the first transition's shapes.
    """

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.rng = rng
        self._size = 0
        self._next = 0
        self._store = None

    def __len__(self):
        return self._size

    def _allocate(self, tr: Transition):
        c = self.capacity
        self._store = {
            "obs": {k: np.empty((c,) + v.shape) for k, v in tr.obs.items()},
            "next_obs": {k: np.empty((c,) + v.shape) for k, v in tr.next_obs.items()},
            "action": np.empty((c,) + np.shape(tr.action)),
            "reward": np.empty(c),
            "terminal": np.empty(c, dtype=bool),
        }

    def add(self, tr: Transition):
        action = np.asarray(tr.action, dtype=float)
        if np.any(np.abs(action) > ACTION_BOUND):
            raise ValueError("transition action outside [-4.5, 4.5]")
        if not np.isfinite(tr.reward):
            raise ValueError("non-finite reward")
        if self._store is None:
            self._allocate(tr)
        i = self._next
        s = self._store
        for k, v in tr.obs.items():
            s["obs"][k][i] = v
        for k, v in tr.next_obs.items():
            s["next_obs"][k][i] = v
        s["action"][i] = action
        s["reward"][i] = tr.reward
        s["terminal"][i] = tr.terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def oldest_index(self) -> int:
        return self._next if self._size == self.capacity else 0

    def get(self, k: int) -> Transition:
        """The ``k``-th stored transition, oldest first."""
        if not 0 <= k < self._size:
            raise IndexError(k)
        i = (self.oldest_index() + k) % self.capacity
        s = self._store
        return Transition(
            {key: v[i].copy() for key, v in s["obs"].items()},
            s["action"][i].copy(),
            float(s["reward"][i]),
            {key: v[i].copy() for key, v in s["next_obs"].items()},
            bool(s["terminal"][i]),
        )

    def sample(self, batch_size: int) -> Batch:
        if batch_size > self._size:
            raise ValueError(f"cannot sample {batch_size} from {self._size} transitions")
        idx = self.rng.choice(self._size, size=batch_size, replace=False)
        s = self._store
        return Batch(
            {k: v[idx] for k, v in s["obs"].items()},
            s["action"][idx],
            s["reward"][idx],
            {k: v[idx] for k, v in s["next_obs"].items()},
            s["terminal"][idx],
        )
