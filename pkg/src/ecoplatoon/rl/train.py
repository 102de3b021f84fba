"""Training loop, rollouts and run-directory bookkeeping."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..graph import Normalization, StWeightParams
from ..metrics import RunLog
from ..nn import NonFiniteError, load_checkpoint, save_checkpoint
from ..reward import EnergyParams, RewardParams
from ..sim import ScenarioConfig, idm_cav_actions
from ..trajectories import LeaderTrajectory
from .agent import AgentConfig, DDPGAgent, anneal_noise
from .buffer import ReplayBuffer, Transition
from .encoder import Ablation, GraphEncoder
from .env import PlatoonEnv

log = logging.getLogger(__name__)

EPISODE_LOG_HEADER = ("episode", "steps", "mean_reward", "std_reward", "collisions", "noise_std")


@dataclass
class TrainConfig:
    total_steps: int = 900_000
    batch_size: int = 64
    exploration_steps: int = 600_000
    noise_start: float = 0.5
    noise_end: float = 7.5e-3
    lr: float = 7.5e-3
    tau: float = 7.5e-2
    gamma: float = 0.99
    seed: int = 0
    ablation: Ablation = Ablation.NSTW
    buffer_capacity: int = 100_000
    checkpoint_every: int = 100_000
    horizon: int | None = None
    rule: str = "sgd"
    grad_clip: float | None = None
    actor_lr: float | None = None
    critic_lr: float | None = None
    encoder_lr: float | None = None
    heads: int = 4
    hidden: int = 64
    embed: int = 32
    encoder_update: str = "both"
    actor_encoder_path: str = "both"

    def __post_init__(self):
        self.ablation = Ablation(self.ablation)
        for name in ("total_steps", "batch_size", "exploration_steps", "lr", "tau", "buffer_capacity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"train.{name} must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("train.gamma must lie in (0, 1)")
        if self.noise_end > self.noise_start:
            raise ValueError("train.noise_end must not exceed train.noise_start")

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            lr=self.lr, actor_lr=self.actor_lr, critic_lr=self.critic_lr, encoder_lr=self.encoder_lr,
            tau=self.tau, gamma=self.gamma, rule=self.rule, grad_clip=self.grad_clip,
            hidden=self.hidden, encoder_update=self.encoder_update,
            actor_encoder_path=self.actor_encoder_path,
        )

    def noise(self, step: int) -> float:
        return anneal_noise(step, self.noise_start, self.noise_end, self.exploration_steps)


@dataclass
class Setup:
    """Everything needed to build an environment and an agent."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    st: StWeightParams = field(default_factory=StWeightParams)

    def normalization(self) -> Normalization:
        return Normalization(road_length=self.scenario.road_length, gap=self.st.d_max)


def make_agent(setup: Setup, world, seed: int | None = None) -> DDPGAgent:
    tc = setup.train
    rng = np.random.default_rng(np.random.SeedSequence(tc.seed if seed is None else seed).spawn(1)[0])
    enc = GraphEncoder(
        tc.ablation, world.group, world.cav_ids, rng, setup.st, setup.normalization(),
        heads=tc.heads, hidden=tc.hidden, embed=tc.embed,
    )
    return DDPGAgent(enc, tc.agent_config(), rng)


@dataclass
class EpisodeRecord:
    episode: int
    steps: int
    mean_reward: float
    std_reward: float
    collisions: int
    noise_std: float

    def row(self):
        return (self.episode, self.steps, repr(self.mean_reward), repr(self.std_reward), self.collisions, repr(self.noise_std))


@dataclass
class TrainResult:
    agent: DDPGAgent
    episodes: list[EpisodeRecord]
    checkpoints: list[Path]
    steps: int


def train(setup: Setup, trajectory: LeaderTrajectory, run_dir=None, progress=None, manifest: dict | None = None) -> TrainResult:
    """Run the full actor-critic loop over repeated trajectory passes.

    Per step: encode, act with annealed Gaussian noise, simulate, store,
    then (once the buffer holds a batch) one critic update, one actor
    update and a soft target update. Fully deterministic for a given seed.
    """
    tc = setup.train
    seeds = np.random.SeedSequence(tc.seed).spawn(3)
    noise_rng = np.random.default_rng(seeds[1])
    env = PlatoonEnv(setup.scenario, trajectory, setup.reward, setup.energy, tc.horizon)
    world = env.reset()
    agent = make_agent(setup, world)
    buffer = ReplayBuffer(tc.buffer_capacity, np.random.default_rng(seeds[2]))
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
    episodes: list[EpisodeRecord] = []
    checkpoints: list[Path] = []
    obs = agent.encoder.observe(world)
    rewards: list[float] = []
    collisions = 0
    for step_i in range(tc.total_steps):
        noise = tc.noise(step_i)
        action = agent.act(obs, noise, noise_rng)
        res = env.step(action)
        next_obs = obs if res.collision else agent.encoder.observe(res.world)
        buffer.add(Transition(obs, action, res.reward, next_obs, res.collision))
        rewards.append(res.reward)
        collisions += int(res.collision)
        if len(buffer) >= tc.batch_size:
            batch = buffer.sample(tc.batch_size)
            try:
                agent.critic_update(batch)
                agent.actor_update(batch)
            except NonFiniteError as exc:
                _dump_batch(run_dir, batch, step_i)
                raise NonFiniteError(f"step {step_i}: {exc}") from exc
            agent.soft_update_targets()
        last = step_i == tc.total_steps - 1
        if res.done or last:
            rec = EpisodeRecord(len(episodes), len(rewards), float(np.mean(rewards)), float(np.std(rewards)), collisions, noise)
            episodes.append(rec)
            if progress:
                progress(rec)
            rewards, collisions = [], 0
            obs = agent.encoder.observe(env.reset())
        else:
            obs = next_obs
        if run_dir is not None and ((step_i + 1) % tc.checkpoint_every == 0 or last):
            checkpoints.append(write_checkpoint(agent, run_dir, step_i + 1, setup, manifest))
    if run_dir is not None:
        write_episode_log(episodes, run_dir / "episodes.csv")
    return TrainResult(agent, episodes, checkpoints, tc.total_steps)


def write_checkpoint(agent: DDPGAgent, run_dir: Path, step: int, setup: Setup, manifest=None) -> Path:
    path = run_dir / f"ckpt_{step}.bin"
    meta = {
        "step": step,
        "ablation": setup.train.ablation.value,
        "normalization": setup.normalization().as_dict(),
        "config_hash": (manifest or {}).get("config_hash"),
        "seed": setup.train.seed,
    }
    save_checkpoint(path, agent.stores, meta)
    return path


def write_episode_log(episodes, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EPISODE_LOG_HEADER)
        for e in episodes:
            w.writerow(e.row())


def read_episode_log(path) -> list[EpisodeRecord]:
    with Path(path).open(newline="") as fh:
        r = csv.DictReader(fh)
        return [
            EpisodeRecord(int(d["episode"]), int(d["steps"]), float(d["mean_reward"]), float(d["std_reward"]),
                          int(d["collisions"]), float(d["noise_std"]))
            for d in r
        ]


def _dump_batch(run_dir, batch, step):
    if run_dir is None:
        return
    path = run_dir / f"nonfinite_batch_{step}.npz"
    arrays = {f"obs_{k}": v for k, v in batch.obs.items()}
    arrays.update({f"next_obs_{k}": v for k, v in batch.next_obs.items()})
    np.savez(path, action=batch.action, reward=batch.reward, terminal=batch.terminal, **arrays)
    log.error("non-finite update; offending batch written to %s", path)


def load_agent(setup: Setup, path, world) -> DDPGAgent:
    agent = make_agent(setup, world)
    load_checkpoint(path, agent.stores)
    return agent


def rollout(setup: Setup, trajectory: LeaderTrajectory, policy=None) -> tuple[RunLog, dict]:
    """Noise-free episode; ``policy`` is an agent or ``None`` for pure IDM.

    Returns the run log and a dict with the episode reward statistics.
    """
    env = PlatoonEnv(setup.scenario, trajectory, setup.reward, setup.energy, setup.train.horizon)
    world = env.reset()
    worlds = [world]
    energies = [np.zeros((world.n_vehicles, 4))]
    rewards = []
    collided = False
    while True:
        if policy is None:
            action = idm_cav_actions(world, setup.scenario.idm)
        else:
            obs = policy.encoder.observe(world)
            action = policy.policy({k: v[None] for k, v in obs.items()})[0]
        res = env.step(action)
        world = res.world
        worlds.append(world)
        e = res.energy
        energies.append(np.stack([e.battery, e.comm, e.mig, e.cal], axis=1))
        rewards.append(res.reward)
        collided = collided or res.collision
        if res.done:
            break
    runlog = RunLog.from_worlds(worlds, energies, dt=setup.scenario.dt, config=setup_to_dict(setup), seed=setup.train.seed)
    return runlog, {"mean_reward": float(np.mean(rewards)), "steps": len(rewards), "collision": collided}


def setup_to_dict(setup: Setup) -> dict:
    d = asdict(setup)
    return json.loads(json.dumps(d, default=lambda o: getattr(o, "value", str(o))))
