import pytest

from ecoplatoon.config import (
    ConfigError,
    build_config,
    config_hash,
    defaults,
    env_overrides,
    load_config,
    load_trajectory,
    parse_value,
)
from ecoplatoon.rl import Ablation


def write(tmp_path, text):
    p = tmp_path / "cfg.toml"
    p.write_text(text)
    return p


def test_defaults_resolve():
    cfg = build_config({})
    assert cfg.setup.scenario.n_vehicles == 201
    assert cfg.ablation is Ablation.NSTW
    assert cfg.setup.train.lr == 7.5e-3 and cfg.setup.train.tau == 7.5e-2
    assert cfg.run_id == "NSTW-s0"


def test_precedence_file_env_flag(tmp_path):
    p = write(tmp_path, "[train]\nseed = 1\nbatch_size = 8\n")
    env = {"ECOPLATOON_TRAIN__SEED": "2", "ECOPLATOON_TRAIN__BATCH_SIZE": "16", "HOME": "/x"}
    cfg = load_config(p, environ=env, overrides={"train.seed": 3})
    assert cfg.seed == 3
    assert cfg.setup.train.batch_size == 16
    assert load_config(p, environ={}).setup.train.batch_size == 8


def test_nested_sections(tmp_path):
    p = write(tmp_path, "[scenario.idm]\nv0 = 30.0\n[scenario]\nn_groups = 2\navs_per_group = 1\n")
    cfg = load_config(p, environ={})
    assert cfg.setup.scenario.idm.v0 == 30.0 and cfg.setup.scenario.n_vehicles == 5


def test_unknown_key():
    with pytest.raises(ConfigError, match="unknown config key: train.nope"):
        build_config({"train.nope": 1})


def test_type_errors_name_the_key():
    with pytest.raises(ConfigError, match="train.batch_size"):
        build_config({"train.batch_size": "many"})
    with pytest.raises(ConfigError, match="train.lr"):
        build_config({"train.lr": True})


def test_invalid_values_name_the_section():
    with pytest.raises(ConfigError, match="idm"):
        build_config({"scenario.idm.v0": -1.0})
    with pytest.raises(ConfigError, match="train.ablation"):
        build_config({"train.ablation": "GCN"})
    with pytest.raises(ConfigError, match="timestep"):
        build_config({"scenario.dt": 0.2})
    with pytest.raises(ConfigError, match="penetration"):
        build_config({"run.penetration": 1.5})


def test_missing_file():
    with pytest.raises(ConfigError, match="config not found"):
        load_config("/nonexistent/x.toml", environ={})


def test_bad_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[train\n"), environ={})


def test_penetration_sets_groups():
    cfg = build_config({"run.penetration": 0.10})
    sc = cfg.setup.scenario
    assert sc.n_groups == 20 and sc.n_vehicles == 201


def test_hash_stable_and_sensitive():
    a = build_config({"train.seed": 1}).config_hash()
    assert a == build_config({"train.seed": 1}).config_hash()
    assert a != build_config({"train.seed": 2}).config_hash()
    assert len(a) == 64
    assert config_hash({"b": 1, "a": 2}) == config_hash({"a": 2, "b": 1})


def test_with_overrides():
    cfg = build_config({}).with_overrides(**{"train.ablation": "MGAT"})
    assert cfg.ablation is Ablation.MGAT


@pytest.mark.parametrize("text,want", [("3", 3), ("2.5", 2.5), ("true", True), ('"x"', "x"), ("[1, 2]", [1, 2]), ("sinusoid", "sinusoid")])
def test_parse_value(text, want):
    assert parse_value(text) == want


def test_env_prefix_only():
    assert env_overrides({"OTHER": "1", "ECOPLATOON_RUN__ID": "abc"}) == {"run.id": "abc"}


def test_defaults_cover_every_section():
    keys = defaults()
    for section in ("scenario.", "scenario.idm.", "train.", "reward.", "energy.", "st.", "run.", "metrics."):
        assert any(k.startswith(section) for k in keys)


def test_trajectory_sources(tmp_path):
    assert load_trajectory("constant", speed=10.0).speed_at(1.0) == 10.0
    csv = tmp_path / "lead.csv"
    csv.write_text("t,v\n0,5\n1,6\n")
    assert load_trajectory(str(csv)).speed_at(0.5) == 5.5
    with pytest.raises(ConfigError):
        load_trajectory("warp-speed")
    with pytest.raises(ConfigError):
        load_trajectory(str(tmp_path / "missing.csv"))


def test_trajectory_params_apply_to_main_profile():
    cfg = build_config({"run.trajectory": "sinusoid", "run.trajectory_params": {"duration": 7.0}})
    assert cfg.trajectory().duration == 7.0
    assert cfg.trajectory("sinusoid").duration == 7.0
    assert cfg.trajectory("constant").duration == 300.0
