"""Estimator-style wrappers (``fit``/``predict``/``transform``, ``get_params``).

The core modules are plain functions over world states; these classes give
them the familiar scikit-learn surface so they compose with ``clone`` and
parameter grids.
"""
from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .graph import Normalization, StWeightParams, build_nested_graph
from .metrics import speed_variance
from .rl.train import Setup, rollout, train
from .sim import WorldState, idm_cav_actions
from .spectral import analyze
from .trajectories import LeaderTrajectory


def _worlds(X) -> list[WorldState]:
    worlds = [X] if isinstance(X, WorldState) else list(X)
    if not worlds or not all(isinstance(w, WorldState) for w in worlds):
        raise TypeError("expected a WorldState or a sequence of them")
    return worlds


def _check_trajectory(X) -> LeaderTrajectory:
    if not isinstance(X, LeaderTrajectory):
        raise TypeError("fit expects a LeaderTrajectory")
    return X


class NestedGraphTransformer(TransformerMixin, BaseEstimator):
    """World states to nested traffic graphs.

    Parameters
    ----------
    d_max, v_max : float
        spatio-temporal weight scales
    mode : {"as-written", "prose"}
    weighted : bool
        False keeps only binary connectivity
    """

    def __init__(self, d_max=100.0, v_max=40.0, mode="as-written", weighted=True):
        self.d_max = d_max
        self.v_max = v_max
        self.mode = mode
        self.weighted = weighted

    def fit(self, X=None, y=None):
        self.params_ = StWeightParams(self.d_max, self.v_max, self.mode)
        return self

    def transform(self, X):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit first")
        p = self.params_
        return [build_nested_graph(w, p, self.weighted, Normalization(gap=p.d_max)) for w in _worlds(X)]


class GraphSpectrumTransformer(TransformerMixin, BaseEstimator):
    """Nested graphs to rows ``[nested entropy, intra, inter, total intensity]``."""

    columns = ("nested_entropy", "intra_intensity", "inter_intensity", "total_intensity")

    def fit(self, X=None, y=None):
        self.n_features_out_ = len(self.columns)
        return self

    def transform(self, X):
        reports = [analyze(g) for g in X]
        return np.array([[r[c] for c in self.columns] for r in reports], dtype=float).reshape(-1, len(self.columns))

    def get_feature_names_out(self, input_features=None):
        return np.array(self.columns, dtype=object)


class IdmController(BaseEstimator):
    """CAVs drive with the same car-following law as the AVs (the baseline)."""

    def __init__(self, setup: Setup | None = None):
        self.setup = setup

    def fit(self, X=None, y=None):
        self.setup_ = self.setup or Setup()
        return self

    def predict(self, X) -> np.ndarray:
        idm = self.setup_.scenario.idm
        return np.stack([idm_cav_actions(w, idm) for w in _worlds(X)])

    def score(self, X, y=None) -> float:
        """Negative follower speed variance of a rollout behind trajectory ``X``."""
        log, _ = rollout(self.setup_, _check_trajectory(X), None)
        return -speed_variance(log, np.arange(1, log.n_vehicles))


class NSTWController(BaseEstimator):
    """Trained graph policy; ``fit`` runs the full training loop on a trajectory.

    Parameters
    ----------
    setup : Setup, optional
        scenario, reward and training configuration (defaults otherwise)
    ablation, total_steps, exploration_steps, seed : optional
        override the matching training fields of ``setup``
    """

    def __init__(self, setup: Setup | None = None, ablation=None, total_steps=None, exploration_steps=None, seed=None):
        self.setup = setup
        self.ablation = ablation
        self.total_steps = total_steps
        self.exploration_steps = exploration_steps
        self.seed = seed

    def _resolved_setup(self) -> Setup:
        base = self.setup or Setup()
        overrides = {
            k: v
            for k, v in (
                ("ablation", self.ablation),
                ("total_steps", self.total_steps),
                ("exploration_steps", self.exploration_steps),
                ("seed", self.seed),
            )
            if v is not None
        }
        return dataclasses.replace(base, train=dataclasses.replace(base.train, **overrides))

    def fit(self, X, y=None, run_dir=None):
        self.setup_ = self._resolved_setup()
        result = train(self.setup_, _check_trajectory(X), run_dir=run_dir)
        self.agent_ = result.agent
        self.episodes_ = result.episodes
        return self

    def _check(self):
        if not hasattr(self, "agent_"):
            raise NotFittedError("NSTWController is not fitted")

    def predict(self, X) -> np.ndarray:
        """Noise-free CAV accelerations, one row per world state."""
        self._check()
        enc = self.agent_.encoder
        obs = [enc.observe(w) for w in _worlds(X)]
        batch = {k: np.stack([o[k] for o in obs]) for k in obs[0]}
        return self.agent_.policy(batch)

    def score(self, X, y=None) -> float:
        """Negative follower speed variance of a noise-free rollout behind ``X``."""
        self._check()
        log, _ = rollout(self.setup_, _check_trajectory(X), self.agent_)
        return -speed_variance(log, np.arange(1, log.n_vehicles))
