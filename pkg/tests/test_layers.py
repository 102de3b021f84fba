import numpy as np
import pytest

import oracles
from helpers import check_grads
from ecoplatoon.nn import MLP, Dense, GATLayer, ParameterStore, attention_bias, gat_attention, mlp_forward
from ecoplatoon.nn import autodiff as ad

TOL = 1e-4
N_INSTANCES = 20


def random_graph(r, n, p=0.4, weighted=True):
    mask = r.uniform(size=(n, n)) < p
    mask = mask | mask.T
    np.fill_diagonal(mask, True)
    w = r.uniform(0.2, 2.0, (n, n)) if weighted else np.ones((n, n))
    return np.where(mask, (w + w.T) / 2, 0.0)


class TestMlpForward:
    def test_zero_weights(self):
        out = mlp_forward(np.ones(3), [(np.zeros((3, 2)), np.zeros(2), "identity")])
        np.testing.assert_array_equal(out.data, 0.0)

    def test_identity_layer(self):
        x = np.array([1.5, -2.0, 0.25])
        out = mlp_forward(x, [(np.eye(3), np.zeros(3), "identity")])
        np.testing.assert_array_equal(out.data, x)

    def test_two_layer_by_hand(self):
        x = np.array([1.0, 2.0])
        W1 = np.array([[1.0, -1.0], [0.5, 1.0]])
        b1 = np.array([0.0, -3.0])
        W2 = np.array([[2.0], [1.0]])
        b2 = np.array([0.5])
        # h = relu([2, 1-3]) = [2, 0]; out = 4 + 0.5
        out = mlp_forward(x, [(W1, b1, "relu"), (W2, b2, "identity")])
        assert out.data.tolist() == [4.5]

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            mlp_forward(np.ones(3), [(np.ones((2, 2)), np.zeros(2), "relu")])


class TestDenseGradients:
    @pytest.mark.parametrize("seed", range(N_INSTANCES))
    def test_mlp_finite_differences(self, seed):
        r = np.random.default_rng(seed)
        store = ParameterStore()
        net = MLP(store, "m", (4, 6, 5, 2), r, hidden_activation="tanh", output="bounded")
        x = r.normal(size=(3, 4))
        c = r.normal(size=(3, 2))
        assert check_grads(lambda: ad.sum_(net(x) * c), [t for _, t in store]) < TOL

    def test_bounded_output(self, rng):
        net = MLP(ParameterStore(), "m", (2, 3, 1), rng, output="bounded")
        out = net(rng.normal(scale=100, size=(50, 2)))
        assert np.all(np.abs(out.data) <= 4.5)

    def test_dense_shapes(self, rng):
        store = ParameterStore()
        Dense(store, "d", 3, 7, rng)
        assert store.shapes() == {"d.W": (3, 7), "d.b": (7,)}


class TestAttention:
    def test_single_neighbour(self, rng):
        layer = GATLayer(ParameterStore(), "g", 3, 2, 2, rng)
        out = gat_attention(rng.normal(size=(3, 3)), np.eye(3), layer)
        np.testing.assert_array_equal(out.alpha, np.broadcast_to(np.eye(3), (2, 3, 3)))

    def test_symmetric_neighbours_split_evenly(self, rng):
        layer = GATLayer(ParameterStore(), "g", 2, 3, 1, rng)
        feats = np.array([[0.3, -1.0], [0.3, -1.0], [0.3, -1.0]])
        adj = np.array([[0, 1, 1], [1, 1, 0], [1, 0, 1]], float)
        out = gat_attention(feats, adj, layer)
        assert out.alpha[0, 0, 1] == pytest.approx(0.5) and out.alpha[0, 0, 2] == pytest.approx(0.5)

    @pytest.mark.parametrize("weighted", [True, False])
    @pytest.mark.parametrize("seed", range(5))
    def test_against_loop_oracle(self, seed, weighted):
        r = np.random.default_rng(100 + seed)
        n, f_in, fh, k = 5, 4, 3, 2
        layer = GATLayer(ParameterStore(), "g", f_in, fh, k, r, final=True)
        h = r.normal(size=(n, f_in))
        adj = random_graph(r, n)
        out = gat_attention(h, adj, layer, weighted=weighted)
        aggs = []
        for head in range(k):
            alpha, agg = oracles.gat_head(h, adj, layer.W.data[head], layer.att.data[head, :, 0], weighted=weighted)
            np.testing.assert_allclose(out.alpha[head], alpha, atol=1e-12)
            aggs.append(agg)
        np.testing.assert_allclose(out.out.data, oracles.elu(np.mean(aggs, axis=0)), atol=1e-12)

    def test_hidden_layer_concatenates(self, rng):
        layer = GATLayer(ParameterStore(), "g", 4, 3, 2, rng)
        out = gat_attention(rng.normal(size=(5, 4)), np.eye(5), layer)
        assert out.out.shape == (5, 6) and layer.out_width == 6

    @pytest.mark.parametrize("seed", range(N_INSTANCES))
    def test_rows_normalized_and_masked(self, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(1, 9))
        adj = random_graph(r, n, p=float(r.uniform(0, 0.6)))
        layer = GATLayer(ParameterStore(), "g", 3, 2, 3, r)
        alpha = gat_attention(r.normal(scale=3, size=(2, n, 3)), adj, layer).alpha
        np.testing.assert_allclose(alpha.sum(axis=-1), 1.0, atol=1e-9)
        assert np.all(alpha[..., adj == 0] == 0.0)

    @pytest.mark.parametrize("seed", range(N_INSTANCES))
    def test_two_layer_finite_differences(self, seed):
        r = np.random.default_rng(1000 + seed)
        store = ParameterStore()
        l0 = GATLayer(store, "g0", 3, 2, 2, r)
        l1 = GATLayer(store, "g1", 4, 3, 2, r, final=True)
        n = 4
        h = r.normal(size=(2, n, 3))
        bias = attention_bias(random_graph(r, n), weighted=True)
        c = r.normal(size=(2, n, 3))
        loss = lambda: ad.sum_(l1(l0(h, bias).out, bias).out * c)  # noqa: E731
        assert check_grads(loss, [t for _, t in store]) < TOL

    def test_isolated_without_self_loop(self, rng):
        layer = GATLayer(ParameterStore(), "g", 2, 2, 1, rng)
        with pytest.raises(ValueError):
            gat_attention(rng.normal(size=(2, 2)), np.array([[1.0, 0.0], [0.0, 0.0]]), layer)

    def test_bias_is_log_weight(self):
        b = attention_bias(np.array([[1.0, 2.0], [0.0, 1.0]]))
        assert b[0, 0, 1] == pytest.approx(np.log(2.0)) and b[0, 1, 0] == -np.inf
        assert attention_bias(np.array([[1.0, 2.0], [0.0, 1.0]]), weighted=False)[0, 0, 1] == 0.0
