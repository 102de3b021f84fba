"""Deterministic-policy actor-critic over fused graph features."""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..nn import MLP, ParameterStore, no_grad, soft_update
from ..nn import autodiff as ad
from ..nn.layers import ACTION_BOUND
from .buffer import Batch
from .encoder import GraphEncoder


def anneal_noise(step: int, start=0.5, end=7.5e-3, steps=6e5) -> float:
    """Linearly decay the exploration noise std from ``start`` to ``end``."""
    if step < 0:
        raise ValueError("step must be nonnegative")
    if step >= steps:
        return float(end)
    return float(start + (end - start) * step / steps)


@dataclass
class AgentConfig:
    lr: float = 7.5e-3
    actor_lr: float | None = None
    critic_lr: float | None = None
    encoder_lr: float | None = None
    tau: float = 7.5e-2
    gamma: float = 0.99
    rule: str = "sgd"
    grad_clip: float | None = None
    hidden: int = 64
    # which losses train the graph encoders: "both", "critic", "actor", "none"
    encoder_update: str = "both"
    # in the actor loss, let encoder gradients flow through "both" the policy
    # and critic inputs, or only through the "policy" input
    actor_encoder_path: str = "both"


class Actor:
    """Shared per-CAV policy head: one acceleration per fused feature row."""

    def __init__(self, store, width, hidden, rng):
        self.net = MLP(store, "actor", (width, hidden, hidden, 1), rng, output="bounded")

    def __call__(self, features):
        out = self.net(features)
        return ad.reshape(out, out.shape[:-1])


class Critic:
    """Joint value ``Q(F, a) = sum_i q([F_i, a_i / 4.5])`` with shared ``q``."""

    def __init__(self, store, width, hidden, rng):
        self.net = MLP(store, "critic", (width + 1, hidden, hidden, 1), rng)

    def __call__(self, features, actions):
        a = ad.as_tensor(actions) * (1.0 / ACTION_BOUND)
        x = ad.concat([features, ad.reshape(a, a.shape + (1,))], axis=-1)
        q = self.net(x)
        return ad.sum_(ad.reshape(q, q.shape[:-1]), axis=-1)


class DDPGAgent:
    """Actor, critic and graph encoder with their target copies."""

    def __init__(self, encoder: GraphEncoder, cfg: AgentConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.encoder = encoder
        for store in (encoder.store,):
            store.rule, store.grad_clip = cfg.rule, cfg.grad_clip
        self.actor_store = ParameterStore(cfg.rule, grad_clip=cfg.grad_clip)
        self.critic_store = ParameterStore(cfg.rule, grad_clip=cfg.grad_clip)
        self.actor = Actor(self.actor_store, encoder.width, cfg.hidden, rng)
        self.critic = Critic(self.critic_store, encoder.width, cfg.hidden, rng)
        # targets start as exact copies; one deepcopy keeps layers and stores aliased
        (
            self.target_encoder,
            self.target_actor,
            self.target_actor_store,
            self.target_critic,
            self.target_critic_store,
        ) = copy.deepcopy((self.encoder, self.actor, self.actor_store, self.critic, self.critic_store))
        self.target_encoder.counters = encoder.counters

    @property
    def stores(self) -> dict[str, ParameterStore]:
        return {
            "actor": self.actor_store,
            "critic": self.critic_store,
            "encoder": self.encoder.store,
            "target_actor": self.target_actor_store,
            "target_critic": self.target_critic_store,
            "target_encoder": self.target_encoder.store,
        }

    def _lr(self, which):
        return getattr(self.cfg, f"{which}_lr") or self.cfg.lr

    def policy(self, obs) -> np.ndarray:
        """Deterministic actions for batched observations."""
        with no_grad():
            return self.actor(self.encoder(obs)).data

    def act(self, obs_single: dict, noise_std: float, rng: np.random.Generator) -> np.ndarray:
        obs = {k: v[None] for k, v in obs_single.items()}
        mu = self.policy(obs)[0]
        if noise_std > 0:
            mu = mu + rng.normal(0.0, noise_std, size=mu.shape)
        return np.clip(mu, -ACTION_BOUND, ACTION_BOUND)

    def td_target(self, batch: Batch) -> np.ndarray:
        with no_grad():
            f_next = self.target_encoder(batch.next_obs)
            q_next = self.target_critic(f_next, self.target_actor(f_next)).data
        return batch.reward + self.cfg.gamma * (1.0 - batch.terminal) * q_next

    def critic_loss(self, batch: Batch, y=None):
        if len(batch) == 0:
            raise ValueError("empty batch")
        y = self.td_target(batch) if y is None else y
        q = self.critic(self.encoder(batch.obs), batch.action)
        diff = q - y
        return ad.mean(diff * diff)

    def actor_objective(self, batch: Batch):
        f = self.encoder(batch.obs)
        a = self.actor(f)
        f_q = f if self.cfg.actor_encoder_path == "both" else ad.Tensor(f.data)
        return ad.mean(self.critic(f_q, a))

    def critic_update(self, batch: Batch) -> float:
        for s in (self.critic_store, self.encoder.store):
            s.zero_grad()
        loss = self.critic_loss(batch)
        loss.backward()
        self.critic_store.apply_update(self._lr("critic"))
        if self.cfg.encoder_update in ("both", "critic"):
            self.encoder.store.apply_update(self._lr("encoder"))
        self.encoder.store.zero_grad()
        return loss.item()

    def actor_update(self, batch: Batch) -> float:
        for s in (self.actor_store, self.critic_store, self.encoder.store):
            s.zero_grad()
        obj = self.actor_objective(batch)
        (-obj).backward()
        self.actor_store.apply_update(self._lr("actor"))
        if self.cfg.encoder_update in ("both", "actor"):
            self.encoder.store.apply_update(self._lr("encoder"))
        self.critic_store.zero_grad()
        self.encoder.store.zero_grad()
        return obj.item()

    def soft_update_targets(self):
        tau = self.cfg.tau
        soft_update(self.target_critic_store, self.critic_store, tau)
        soft_update(self.target_actor_store, self.actor_store, tau)
        soft_update(self.target_encoder.store, self.encoder.store, tau)

