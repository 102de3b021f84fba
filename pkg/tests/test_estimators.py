import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from ecoplatoon.estimators import GraphSpectrumTransformer, IdmController, NestedGraphTransformer, NSTWController
from ecoplatoon.graph import NestedTrafficGraph
from ecoplatoon.rl import Setup, TrainConfig
from ecoplatoon.sim import ScenarioConfig, build_scenario
from ecoplatoon.trajectories import sinusoid


def setup():
    return Setup(
        scenario=ScenarioConfig(n_groups=2, avs_per_group=1, road_length=1e5),
        train=TrainConfig(total_steps=20, batch_size=4, exploration_steps=10, hidden=8, embed=4, heads=2),
    )


def worlds(k=3):
    out = []
    for v in np.linspace(10, 20, k):
        out.append(build_scenario(ScenarioConfig(n_groups=2, avs_per_group=1), initial_speed=float(v)))
    return out


def test_graph_transformer():
    graphs = NestedGraphTransformer(mode="prose").fit_transform(worlds())
    assert len(graphs) == 3 and all(isinstance(g, NestedTrafficGraph) for g in graphs)


def test_pipeline_to_spectrum_rows():
    pipe = make_pipeline(NestedGraphTransformer(), GraphSpectrumTransformer())
    X = pipe.fit_transform(worlds(4))
    assert X.shape == (4, 4)
    np.testing.assert_allclose(X[:, 3], X[:, 1] + X[:, 2])
    assert list(pipe[-1].get_feature_names_out()) == ["nested_entropy", "intra_intensity", "inter_intensity", "total_intensity"]


def test_params_and_clone():
    t = NestedGraphTransformer(d_max=50.0)
    assert clone(t).get_params()["d_max"] == 50.0
    c = NSTWController(ablation="MGAT", seed=4)
    assert clone(c).get_params()["ablation"] == "MGAT"


def test_transform_before_fit():
    with pytest.raises(NotFittedError):
        NestedGraphTransformer().transform(worlds(1))


def test_bad_input():
    with pytest.raises(TypeError):
        NestedGraphTransformer().fit().transform([1, 2])


def test_idm_controller():
    est = IdmController(setup()).fit()
    assert est.predict(worlds(2)).shape == (2, 2)
    assert est.score(sinusoid(duration=3.0)) <= 0.0


def test_nstw_controller_fit_predict_score():
    est = NSTWController(setup(), ablation="STW", seed=2)
    with pytest.raises(NotFittedError):
        est.predict(worlds(1))
    est.fit(sinusoid(duration=1.0))
    assert est.setup_.train.ablation.value == "STW" and est.setup_.train.seed == 2
    a = est.predict(worlds(2))
    assert a.shape == (2, 2) and np.all(np.abs(a) <= 4.5)
    assert np.isfinite(est.score(sinusoid(duration=2.0)))
    with pytest.raises(TypeError):
        est.fit(worlds(1))
