import numpy as np
import pytest

from conftest import classifier, make_graph, regressor
from oracles import walk_relevance_loops, walks
from xcg.cellgraph.graph import CellGraph
from xcg.gnn.sparse import SparseMatrix
from xcg.lrp import (LrpConfig, LrpError, enumerate_walks, forward_cache, lrp_linear, naive_node_relevance,
                     node_relevance, resolve_target, subgraph_relevance, tile_relevances,
                     walk_relevance_oracle)

EXACT = LrpConfig(gamma=0.0, epsilon_stab=0.0)


class TestLinear:
    def test_identity(self, rng):
        a = rng.uniform(0.1, 1, (3, 4))
        R = rng.normal(size=(3, 4))
        np.testing.assert_allclose(lrp_linear(a, np.eye(4), R, EXACT), R, rtol=1e-14)

    def test_conservation(self, rng):
        a = rng.normal(size=(5, 4))
        R = rng.normal(size=(5, 3))
        assert abs(lrp_linear(a, rng.normal(size=(4, 3)), R, EXACT).sum() - R.sum()) < 1e-9

    def test_hand_3x3(self):
        a = np.array([1.0, 2.0, 0.5])
        W = np.array([[1.0, -1.0, 0.0], [0.5, 2.0, 1.0], [-2.0, 1.0, 3.0]])
        R = np.array([0.3, -0.6, 0.9])
        gamma = 0.25
        expected = np.zeros(3)
        for k in range(3):
            rho = [W[j, k] + gamma * max(W[j, k], 0) for j in range(3)]
            z = sum(a[j] * rho[j] for j in range(3))
            for j in range(3):
                expected[j] += a[j] * rho[j] / z * R[k]
        got = lrp_linear(a, W, R, LrpConfig(gamma=gamma, epsilon_stab=0.0))
        np.testing.assert_allclose(got, expected, rtol=1e-14)

    def test_zero_input_no_nan(self):
        out = lrp_linear(np.zeros(3), np.ones((3, 2)), np.ones(2), EXACT)
        assert np.array_equal(out, np.zeros(3))


class TestNodeRelevance:
    @pytest.mark.parametrize("gamma", [0.0, 0.1, 0.5])
    def test_conservation(self, gamma, rng):
        model = classifier(4, 6, seed=1)
        g = make_graph(30, 4, rng)
        cache = forward_cache(model, g)
        cfg = LrpConfig(gamma=gamma, epsilon_stab=0.0)
        R = node_relevance(model, g, cfg, cache)
        assert abs(R.sum() - cache["logits"][resolve_target(cache, cfg)]) < 1e-9

    def test_single_node(self):
        model = classifier(2, 4, seed=3)
        g = CellGraph("one", np.array([0]), np.zeros((1, 2)), np.array([1]), 2, SparseMatrix.empty(1, 1), 0)
        cache = forward_cache(model, g)
        R = node_relevance(model, g, EXACT, cache)
        assert abs(R[0] - cache["logits"][resolve_target(cache, EXACT)]) < 1e-12
        (walk,) = list(enumerate_walks(g.adjacency, 3))
        assert walk == (0, 0, 0, 0)

    def test_matches_loop_oracle(self, rng):
        model = classifier(3, 4, seed=4)
        g = make_graph(5, 3, rng, p_edge=0.5)
        cfg = LrpConfig(gamma=0.2, epsilon_stab=1e-9, target_class="long")
        cache = forward_cache(model, g)
        dense = g.adjacency.to_dense()
        expected = np.zeros(5)
        for w in walks(dense, 4):
            expected[w[0]] += walk_relevance_loops(model, cache, dense, w, 1, 0.2, 1e-9)
        np.testing.assert_allclose(node_relevance(model, g, cfg, cache), expected, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(naive_node_relevance(model, g, cfg, cache), expected, rtol=1e-9, atol=1e-12)

    def test_dense_equals_sparse(self, rng):
        model = classifier(3, 5, seed=5, zero_bias=False)
        g = make_graph(12, 3, rng)
        np.testing.assert_allclose(node_relevance(model, g, dense=True), node_relevance(model, g),
                                   rtol=1e-12, atol=1e-14)

    def test_rejects_regression_model(self, rng):
        with pytest.raises(LrpError, match="no-pooling classifier"):
            node_relevance(regressor(3, 4, seed=0), make_graph(5, 3, rng))


class TestWalks:
    def test_walk_sum_is_logit(self, rng):
        model = classifier(3, 4, seed=6)
        g = make_graph(6, 3, rng)
        cfg = LrpConfig(gamma=0.3, epsilon_stab=0.0)
        cache = forward_cache(model, g)
        total = sum(walk_relevance_oracle(model, g, w, cfg, cache) for w in enumerate_walks(g.adjacency, 3))
        assert abs(total - cache["logits"][resolve_target(cache, cfg)]) < 1e-9

    def test_enumeration_matches_product_oracle(self, rng):
        g = make_graph(6, 2, rng)
        assert set(enumerate_walks(g.adjacency, 3)) == set(walks(g.adjacency.to_dense(), 4))

    def test_invalid_walk(self):
        model = classifier(2, 3, seed=0)
        A = SparseMatrix.from_coo([0, 1], [1, 0], np.ones(2), (3, 3))
        g = CellGraph("g", np.arange(3), np.zeros((3, 2)), np.array([0, 1, 0]), 2, A, 0)
        with pytest.raises(LrpError, match="not adjacent"):
            walk_relevance_oracle(model, g, [0, 2, 2, 2])
        with pytest.raises(LrpError):
            walk_relevance_oracle(model, g, [0, 1])


class TestSubgraph:
    def test_full_and_empty(self, rng):
        model = classifier(3, 5, seed=7)
        g = make_graph(15, 3, rng)
        cache = forward_cache(model, g)
        assert subgraph_relevance(model, g, [], EXACT, cache) == 0.0
        full = subgraph_relevance(model, g, range(15), EXACT, cache)
        assert abs(full - cache["logits"][resolve_target(cache, EXACT)]) < 1e-9

    def test_matches_loop_oracle(self, rng):
        model = classifier(3, 4, seed=8, zero_bias=False)
        g = make_graph(7, 3, rng, p_edge=0.45)
        cache = forward_cache(model, g)
        cfg = LrpConfig(gamma=0.1, target_class="short")
        S = [0, 2, 3, 5]
        dense = g.adjacency.to_dense()
        expected = sum(walk_relevance_loops(model, cache, dense, w, 0, 0.1, 1e-9) for w in walks(dense, 4, S))
        assert abs(subgraph_relevance(model, g, S, cfg, cache) - expected) <= 1e-9 * max(1.0, abs(expected))

    def test_tiles_batched_equal_individual(self, rng):
        model = classifier(3, 5, seed=9)
        g = make_graph(20, 3, rng)
        labels = rng.integers(0, 4, 20)
        labels = np.unique(labels, return_inverse=True)[1]
        cache = forward_cache(model, g)
        batched = tile_relevances(model, g, labels, LrpConfig(), cache)
        single = [subgraph_relevance(model, g, np.flatnonzero(labels == k), LrpConfig(), cache)
                  for k in range(labels.max() + 1)]
        np.testing.assert_allclose(batched, single, rtol=1e-10, atol=1e-13)

    def test_stale_cache(self, rng):
        model = classifier(3, 4, seed=0)
        g = make_graph(6, 3, rng)
        cache = forward_cache(model, g)
        model.params["out.w"] *= 2
        model.touch()
        with pytest.raises(RuntimeError):
            subgraph_relevance(model, g, [0, 1], LrpConfig(), cache)


def test_config_validation():
    with pytest.raises(ValueError):
        LrpConfig(gamma=-1)
    with pytest.raises(ValueError):
        LrpConfig(target_class="medium")
