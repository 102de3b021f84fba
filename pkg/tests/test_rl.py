import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import check_grads
from ecoplatoon.nn import autodiff as ad
from ecoplatoon.reward import scalarize
from ecoplatoon.rl import (
    OBS_KEYS,
    Ablation,
    ReplayBuffer,
    Setup,
    TrainConfig,
    Transition,
    anneal_noise,
    load_agent,
    make_agent,
    read_episode_log,
    rollout,
    train,
)
from ecoplatoon.rl.env import PlatoonEnv
from ecoplatoon.sim import ScenarioConfig, build_scenario, idm_cav_actions
from ecoplatoon.trajectories import constant, sinusoid

TOL = 1e-4


def small_setup(ablation="NSTW", **train_kw):
    tc = dict(total_steps=40, batch_size=4, exploration_steps=20, hidden=8, embed=4, heads=2, seed=3, ablation=ablation)
    tc.update(train_kw)
    return Setup(
        scenario=ScenarioConfig(n_groups=2, avs_per_group=1, road_length=1e5),
        train=TrainConfig(**tc),
    )


def make_batch(setup, n=6, seed=0):
    r = np.random.default_rng(seed)
    env = PlatoonEnv(setup.scenario, sinusoid(duration=5.0))
    world = env.reset()
    agent = make_agent(setup, world)
    buf = ReplayBuffer(100, np.random.default_rng(seed))
    obs = agent.encoder.observe(world)
    for _ in range(n):
        act = r.uniform(-2, 2, world.n_groups)
        res = env.step(act)
        nxt = agent.encoder.observe(res.world)
        buf.add(Transition(obs, act, res.reward, nxt, res.collision))
        obs = nxt
    return agent, buf.sample(n)


class TestNoise:
    def test_schedule_points(self):
        assert anneal_noise(0) == 0.5
        assert anneal_noise(300_000) == pytest.approx(0.25375, rel=1e-9)
        assert anneal_noise(600_000) == pytest.approx(7.5e-3)
        assert anneal_noise(900_000) == pytest.approx(7.5e-3)

    def test_negative_step(self):
        with pytest.raises(ValueError):
            anneal_noise(-1)

    @given(a=st.integers(0, 10**6), b=st.integers(0, 10**6))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert anneal_noise(lo) >= anneal_noise(hi)


def fake_transition(i, n=2):
    obs = {k: np.full((3,), float(i)) for k in OBS_KEYS}
    return Transition(obs, np.full(n, 0.1 * (i % 10)), float(i), obs, False)


class TestBuffer:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(5, np.random.default_rng(0))
        for i in range(8):
            buf.add(fake_transition(i))
        assert len(buf) == 5
        assert [buf.get(k).reward for k in range(5)] == [3.0, 4.0, 5.0, 6.0, 7.0]

    @given(cap=st.integers(1, 20), extra=st.integers(0, 30))
    def test_never_exceeds_capacity(self, cap, extra):
        buf = ReplayBuffer(cap, np.random.default_rng(0))
        for i in range(cap + extra):
            buf.add(fake_transition(i))
        assert len(buf) == cap
        assert buf.get(0).reward == float(extra)

    def test_action_bound_enforced(self):
        buf = ReplayBuffer(3, np.random.default_rng(0))
        tr = fake_transition(0)
        with pytest.raises(ValueError):
            buf.add(dataclasses.replace(tr, action=np.array([5.0, 0.0])))

    def test_nonfinite_reward_rejected(self):
        buf = ReplayBuffer(3, np.random.default_rng(0))
        with pytest.raises(ValueError):
            buf.add(dataclasses.replace(fake_transition(0), reward=float("nan")))

    def test_sample_without_replacement(self):
        buf = ReplayBuffer(10, np.random.default_rng(1))
        for i in range(10):
            buf.add(fake_transition(i))
        b = buf.sample(10)
        assert sorted(b.reward.tolist()) == [float(i) for i in range(10)]
        with pytest.raises(ValueError):
            buf.sample(11)

    def test_bad_capacity(self):
        with pytest.raises(ValueError):
            ReplayBuffer(0, np.random.default_rng(0))


class TestEncoder:
    @pytest.mark.parametrize("ablation,width", [("DDPG", 10), ("MGAT", 4), ("STW", 4), ("NSTW", 8)])
    def test_fused_width(self, ablation, width):
        agent, batch = make_batch(small_setup(ablation))
        f = agent.encoder(batch.obs)
        assert f.shape == (6, 2, width) and agent.encoder.width == width

    def test_ddpg_uses_raw_rows(self):
        agent, batch = make_batch(small_setup("DDPG"))
        f = agent.encoder(batch.obs).data
        cav = agent.encoder.cav_ids
        np.testing.assert_array_equal(f[:, :, :6], batch.obs["vv_x"][:, cav])
        assert agent.encoder.counters["graph_bypass"] == 1

    def test_paths_are_instrumented(self):
        counts = {}
        for ab in Ablation:
            agent, batch = make_batch(small_setup(ab.value))
            agent.encoder(batch.obs)
            counts[ab] = dict(agent.encoder.counters)
        assert "vv_pass" not in counts[Ablation.DDPG]
        assert counts[Ablation.MGAT]["binary_adjacency"] > 0 and "ff_pass" not in counts[Ablation.MGAT]
        assert counts[Ablation.STW]["weighted_adjacency"] > 0 and "ff_pass" not in counts[Ablation.STW]
        assert counts[Ablation.NSTW]["ff_pass"] == 1

    def test_symmetric_cavs_get_identical_rows(self):
        setup = small_setup("NSTW")
        w = build_scenario(ScenarioConfig(n_groups=2, avs_per_group=0, spacing=1000.0, rsu_span=1000.0, v2v_range=10.0, road_length=1e5), 20.0)
        agent = make_agent(setup, w)
        obs = agent.encoder.observe(w)
        # make both CAV neighbourhoods identical (features other than position)
        obs["vv_x"][:, 0] = 0.0
        f = agent.encoder({k: v[None] for k, v in obs.items()}).data[0]
        np.testing.assert_allclose(f[0], f[1], atol=1e-12)


class TestAgent:
    @pytest.mark.parametrize("seed", range(20))
    def test_critic_loss_gradients(self, seed):
        setup = small_setup("NSTW", seed=seed)
        agent, batch = make_batch(setup, seed=seed)
        y = agent.td_target(batch)
        params = [t for _, t in agent.critic_store] + [t for _, t in agent.encoder.store]
        assert check_grads(lambda: agent.critic_loss(batch, y), params) < TOL

    @pytest.mark.parametrize("seed", range(20))
    def test_actor_chain_rule_gradients(self, seed):
        setup = small_setup("NSTW", seed=100 + seed)
        agent, batch = make_batch(setup, seed=seed)
        params = [t for _, t in agent.actor_store] + [t for _, t in agent.encoder.store]
        assert check_grads(lambda: agent.actor_objective(batch), params) < TOL

    def test_actor_gradient_equals_dq_da_times_dmu(self):
        agent, batch = make_batch(small_setup("DDPG"))
        f = agent.encoder(batch.obs)
        a = agent.actor(f)
        a_leaf = ad.Tensor(a.data, requires_grad=True)
        ad.mean(agent.critic(f, a_leaf)).backward()
        dq_da = a_leaf.grad
        agent.actor_store.zero_grad()
        ad.sum_(agent.actor(f) * dq_da).backward()
        chain = {k: t.grad.copy() for k, t in agent.actor_store}
        agent.actor_store.zero_grad()
        agent.actor_objective(batch).backward()
        for k, t in agent.actor_store:
            np.testing.assert_allclose(t.grad, chain[k], rtol=1e-10, atol=1e-14)

    def test_critic_gradients_are_pure(self):
        agent, batch = make_batch(small_setup())
        grads = []
        for _ in range(2):
            agent.critic_store.zero_grad()
            agent.critic_loss(batch).backward()
            grads.append(agent.critic_store.flat().copy())
            grads[-1] = np.concatenate([g.ravel() for g in agent.critic_store.grads().values()])
        np.testing.assert_array_equal(grads[0], grads[1])

    def test_targets_start_equal_and_track(self):
        agent, batch = make_batch(small_setup())
        np.testing.assert_array_equal(agent.target_actor_store.flat(), agent.actor_store.flat())
        agent.critic_update(batch)
        agent.actor_update(batch)
        gap0 = np.abs(agent.target_actor_store.flat() - agent.actor_store.flat()).max()
        agent.soft_update_targets()
        gap1 = np.abs(agent.target_actor_store.flat() - agent.actor_store.flat()).max()
        assert gap1 == pytest.approx((1 - agent.cfg.tau) * gap0, rel=1e-9)

    def test_actions_bounded(self):
        agent, batch = make_batch(small_setup())
        obs = {k: v[0] for k, v in batch.obs.items()}
        a = agent.act(obs, 50.0, np.random.default_rng(0))
        assert np.all(np.abs(a) <= 4.5)

    def test_empty_batch(self):
        agent, batch = make_batch(small_setup())
        empty = dataclasses.replace(batch, reward=batch.reward[:0])
        with pytest.raises(ValueError):
            agent.critic_loss(empty)

    def test_frozen_encoder(self):
        agent, batch = make_batch(small_setup(encoder_update="none"))
        before = agent.encoder.store.flat().copy()
        agent.critic_update(batch)
        agent.actor_update(batch)
        np.testing.assert_array_equal(agent.encoder.store.flat(), before)


class TestEnv:
    def test_reward_is_scalarized_components(self):
        setup = small_setup()
        env = PlatoonEnv(setup.scenario, sinusoid(duration=3.0))
        world = env.reset()
        for _ in range(10):
            res = env.step(idm_cav_actions(world, setup.scenario.idm))
            world = res.world
            assert res.reward == scalarize(res.components, setup.reward.weights, res.collision)[1]

    def test_episode_length(self):
        setup = small_setup()
        env = PlatoonEnv(setup.scenario, constant(20.0, duration=2.0))
        env.reset()
        steps = 0
        while not env.step(np.zeros(2)).done:
            steps += 1
        assert steps + 1 == 20

    def test_reset_required(self):
        env = PlatoonEnv(small_setup().scenario, constant(20.0))
        with pytest.raises(RuntimeError):
            env.step(np.zeros(2))

    def test_timestep_mismatch(self):
        from ecoplatoon.reward import EnergyParams

        with pytest.raises(ValueError):
            PlatoonEnv(small_setup().scenario, constant(20.0), energy_params=EnergyParams(timestep=0.2))


class TestTrain:
    def test_same_seed_identical_logs(self):
        setup = small_setup()
        traj = sinusoid(duration=1.5)
        a = train(setup, traj)
        b = train(setup, traj)
        assert [e.row() for e in a.episodes] == [e.row() for e in b.episodes]
        np.testing.assert_array_equal(a.agent.actor_store.flat(), b.agent.actor_store.flat())

    def test_different_seed_differs(self):
        traj = sinusoid(duration=1.5)
        a = train(small_setup(seed=1), traj)
        b = train(small_setup(seed=2), traj)
        assert not np.array_equal(a.agent.actor_store.flat(), b.agent.actor_store.flat())

    def test_run_dir_artifacts(self, tmp_path):
        setup = small_setup(checkpoint_every=25)
        res = train(setup, sinusoid(duration=1.5), run_dir=tmp_path)
        assert [p.name for p in res.checkpoints] == ["ckpt_25.bin", "ckpt_40.bin"]
        log = read_episode_log(tmp_path / "episodes.csv")
        assert [e.row() for e in log] == [e.row() for e in res.episodes]
        assert (tmp_path / "episodes.csv").read_text().splitlines()[0] == "episode,steps,mean_reward,std_reward,collisions,noise_std"
        world = build_scenario(setup.scenario)
        agent = load_agent(setup, res.checkpoints[-1], world)
        np.testing.assert_array_equal(agent.actor_store.flat(), res.agent.actor_store.flat())

    def test_collision_transition_is_terminal_and_self_looped(self, monkeypatch):
        from ecoplatoon.rl import buffer as buffer_mod

        seen = []
        orig = buffer_mod.ReplayBuffer.add

        def spy(self, tr):
            seen.append(tr)
            return orig(self, tr)

        monkeypatch.setattr(buffer_mod.ReplayBuffer, "add", spy)
        setup = small_setup(total_steps=80, noise_start=4.5, noise_end=4.5)
        setup = dataclasses.replace(setup, scenario=dataclasses.replace(setup.scenario, spacing=7.0))
        train(setup, constant(5.0, duration=8.0))
        crashes = [t for t in seen if t.terminal]
        assert crashes
        for t in crashes:
            for k in OBS_KEYS:
                np.testing.assert_array_equal(t.obs[k], t.next_obs[k])
        assert all(np.all(np.abs(t.action) <= 4.5) for t in seen)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(gamma=1.0)
        with pytest.raises(ValueError):
            TrainConfig(noise_start=0.1, noise_end=0.2)
        with pytest.raises(ValueError):
            TrainConfig(ablation="GCN")


def test_rollout_idm_baseline_is_deterministic():
    setup = small_setup()
    a, sa = rollout(setup, sinusoid(duration=3.0))
    b, sb = rollout(setup, sinusoid(duration=3.0))
    np.testing.assert_array_equal(a.x, b.x)
    assert sa == sb and sa["steps"] == 30 and not sa["collision"]
