from .agent import AgentConfig, DDPGAgent, anneal_noise
from .buffer import Batch, ReplayBuffer, Transition
from .encoder import OBS_KEYS, Ablation, GraphEncoder
from .env import PlatoonEnv, StepResult
from .train import Setup, TrainConfig, TrainResult, load_agent, make_agent, read_episode_log, rollout, train

__all__ = [
    "AgentConfig",
    "DDPGAgent",
    "anneal_noise",
    "Batch",
    "ReplayBuffer",
    "Transition",
    "OBS_KEYS",
    "Ablation",
    "GraphEncoder",
    "PlatoonEnv",
    "StepResult",
    "Setup",
    "TrainConfig",
    "TrainResult",
    "load_agent",
    "make_agent",
    "read_episode_log",
    "rollout",
    "train",
]
