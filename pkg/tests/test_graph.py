import json

import numpy as np
import pytest
import scipy.sparse as sp

from greedypig.graph import (
    SparseGraph,
    UntrainedModelError,
    _gcn_forward,
    attribute_edges,
    baseline_edge_selector,
    compression_curve,
    edges_for_ratio,
    gcn_accuracy,
    gcn_forward,
    gnn_edge_objective,
    normalize_adjacency,
    read_graph,
    symmetrize_gradient,
    write_graph,
)
from greedypig.models import TinyGCN, grad_check, log_softmax, random_interior_points, train_model
from greedypig.synthetic import make_sbm_graph


def _path_graph(m=10, seed=0):
    rng = np.random.default_rng(seed)
    edges = [(i, i + 1) for i in range(m - 1)]
    labels = (np.arange(m) >= m // 2).astype(int)
    X = rng.normal(size=(m, 3)) + labels[:, None]
    return SparseGraph(m, edges, X, labels, np.arange(0, m, 2), np.arange(1, m, 2))


def _trained(graph, dims, seed=0, epochs=60):
    return train_model(TinyGCN.init(dims, seed), graph, epochs, 0.2)[0]


# --- graph container ------------------------------------------------------------------


def test_sparse_graph_canonicalises_edges():
    g = SparseGraph(4, [(2, 1), (0, 3), (1, 2)], np.zeros((4, 1)), [0, 0, 1, 1], [0], [1])
    np.testing.assert_array_equal(g.edges, [[0, 3], [1, 2]])
    np.testing.assert_array_equal(g.degrees(), [1, 1, 1, 1])
    with pytest.raises(ValueError, match="self-loop"):
        SparseGraph(2, [(1, 1)], np.zeros((2, 1)), [0, 1], [0], [1])
    with pytest.raises(IndexError):
        SparseGraph(2, [(0, 2)], np.zeros((2, 1)), [0, 1], [0], [1])


def test_within_hops():
    g = _path_graph(8)
    np.testing.assert_array_equal(np.flatnonzero(g.within_hops(0, 3)), [0, 1, 2, 3])
    np.testing.assert_array_equal(np.flatnonzero(g.within_hops(4, 1)), [3, 4, 5])


# --- normalisation ------------------------------------------------------------------------


def test_normalize_examples():
    np.testing.assert_allclose(normalize_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]])), [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_array_equal(normalize_adjacency(np.zeros((3, 3))), np.eye(3))
    ring = np.roll(np.eye(6), 1, axis=1)
    ring = ring + ring.T  # 2-regular
    np.testing.assert_allclose(normalize_adjacency(ring).sum(axis=1), 1.0)


def test_normalize_errors():
    with pytest.raises(ValueError, match="nonnegative"):
        normalize_adjacency(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    with pytest.raises(ValueError, match="symmetric"):
        normalize_adjacency(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        normalize_adjacency(np.zeros((2, 3)))


def test_normalize_sparse_matches_dense(rng):
    W = rng.uniform(size=(7, 7)) * (rng.uniform(size=(7, 7)) < 0.4)
    W = np.triu(W, 1)
    W = W + W.T
    np.testing.assert_allclose(normalize_adjacency(sp.csr_matrix(W)).toarray(), normalize_adjacency(W), atol=1e-15)


def test_normalize_symmetry_and_spectral_radius(rng):
    for _ in range(20):
        m = int(rng.integers(2, 65))
        W = np.triu(rng.uniform(size=(m, m)) * (rng.uniform(size=(m, m)) < 0.2), 1)
        W = W + W.T
        A = normalize_adjacency(W)
        assert np.max(np.abs(A - A.T)) <= 1e-12
        assert np.max(np.abs(np.linalg.eigvalsh(A))) <= 1 + 1e-9


# --- edge objective -------------------------------------------------------------------------


def test_edge_objective_endpoints(small_graph):
    graph, gcn = small_graph
    obj = gnn_edge_objective(gcn, graph, "train")
    nodes = graph.train
    full = np.log(gcn_forward(gcn, graph))[nodes, graph.labels[nodes]].mean()
    assert obj.value(np.ones(graph.num_edges)) == pytest.approx(full, abs=1e-12)
    Z, _ = _gcn_forward(gcn, graph.node_features, np.eye(graph.num_nodes))
    empty = log_softmax(Z)[nodes, graph.labels[nodes]].mean()
    assert obj.value(np.zeros(graph.num_edges)) == pytest.approx(empty, abs=1e-14)


@pytest.mark.parametrize("target", ["train", "all"])
def test_edge_gradient_passes_finite_differences(small_graph, target):
    graph, gcn = small_graph
    obj = gnn_edge_objective(gcn, graph, target)
    for w in random_interior_points(graph.num_edges, 20, seed=3):
        assert grad_check(obj, w) <= 1e-4


def test_directed_convention_equals_dense_symmetrised_gradient():
    """Differentiate a dense GCN w.r.t. every directed adjacency entry independently,
    then compare (M + M^T)/2 with the oracle's per-edge values on a 6-node graph."""
    rng = np.random.default_rng(2)
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)]
    graph = SparseGraph(6, edges, rng.normal(size=(6, 3)), [0, 0, 0, 1, 1, 1], [0, 1, 3, 4], [2, 5])
    gcn = _trained(graph, [3, 4, 4, 2], seed=2, epochs=30)
    s = rng.uniform(0.2, 0.9, size=graph.num_edges)
    nodes, y = graph.train, graph.labels[graph.train]

    def dense_value(W):
        r = 1.0 / np.sqrt(W.sum(axis=1) + 1.0)
        A = r[:, None] * (W + np.eye(6)) * r[None, :]
        Z, _ = _gcn_forward(gcn, graph.node_features, A)
        return log_softmax(Z)[nodes, y].mean()

    W0 = graph.dense_adjacency(s)
    M = np.zeros((6, 6))
    h = 1e-6
    for u, v in zip(*np.nonzero(W0)):
        Wp, Wm = W0.copy(), W0.copy()
        Wp[u, v] += h
        Wm[u, v] -= h
        M[u, v] = (dense_value(Wp) - dense_value(Wm)) / (2 * h)
    sym = symmetrize_gradient(M)
    got = gnn_edge_objective(gcn, graph, "train", convention="directed").gradient(s)
    np.testing.assert_allclose(got, sym[graph.edges[:, 0], graph.edges[:, 1]], rtol=1e-6, atol=1e-10)
    full = gnn_edge_objective(gcn, graph, "train").gradient(s)
    np.testing.assert_allclose(full, 2 * got, rtol=1e-12)


def test_edge_gradient_ignores_orientation(small_graph):
    graph, gcn = small_graph
    flipped = SparseGraph(graph.num_nodes, graph.edges[:, ::-1], graph.node_features, graph.labels,
                          graph.train, graph.test)
    s = np.linspace(0.1, 0.9, graph.num_edges)
    np.testing.assert_array_equal(gnn_edge_objective(gcn, graph).gradient(s),
                                  gnn_edge_objective(gcn, flipped).gradient(s))


def test_single_node_gradient_support():
    graph = _path_graph(10)
    gcn = _trained(graph, [3, 4, 4, 2])
    obj = gnn_edge_objective(gcn, graph, 0)
    support = obj.meta["edge_support"]
    np.testing.assert_array_equal(support, [1, 1, 1, 0, 0, 0, 0, 0, 0])
    for s in np.random.default_rng(0).uniform(size=(5, 9)):
        g = obj.gradient(s)
        np.testing.assert_array_equal(g[3:], 0.0)
    with pytest.raises(IndexError):
        gnn_edge_objective(gcn, graph, 10)


def test_edge_objective_requires_training():
    graph = _path_graph()
    with pytest.raises(UntrainedModelError):
        gnn_edge_objective(TinyGCN.init([3, 4, 4, 2], 0), graph)


def test_symmetrize_examples():
    np.testing.assert_array_equal(symmetrize_gradient(np.array([[0, 2], [0, 0]])), [[0, 1], [1, 0]])
    S = np.array([[1.0, 3.0], [3.0, -2.0]])
    np.testing.assert_array_equal(symmetrize_gradient(S), S)
    np.testing.assert_array_equal(symmetrize_gradient(sp.csr_matrix([[0, 2], [0, 0]])).toarray(), [[0, 1], [1, 0]])


# --- selectors and curves ----------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["uniform", "degree_weighted"])
def test_selector_extremes_and_determinism(kind, small_graph):
    graph, _ = small_graph
    E = graph.num_edges
    assert sorted(baseline_edge_selector(graph, kind, 1.0, 0)) == list(range(E))
    assert baseline_edge_selector(graph, kind, 0.0, 0) == []
    half = baseline_edge_selector(graph, kind, 0.5, 4)
    assert len(half) == 11 and len(set(half)) == 11
    assert half == baseline_edge_selector(graph, kind, 0.5, 4)
    with pytest.raises(ValueError):
        baseline_edge_selector(graph, kind, 1.5, 0)


def test_degree_weighted_single_edge():
    g = SparseGraph(2, [(0, 1)], np.zeros((2, 1)), [0, 1], [0], [1])
    assert baseline_edge_selector(g, "degree_weighted", 0.5, 9) == [0]


def test_degree_weighted_prefers_low_degree_edges():
    # a star (hub 0 with 8 leaves) plus a separate edge between two degree-1 nodes
    edges = [(0, i) for i in range(1, 9)] + [(9, 10)]
    g = SparseGraph(11, edges, np.zeros((11, 1)), np.zeros(11, dtype=int), [0], [1])
    first = [baseline_edge_selector(g, "degree_weighted", 1 / 9, seed)[0] for seed in range(400)]
    # weight of the isolated edge is 1 against 8 * (1/sqrt(8)) for the star
    assert np.mean(np.array(first) == 8) == pytest.approx(1 / (1 + 8 / np.sqrt(8)), abs=0.06)


def test_edges_for_ratio():
    assert edges_for_ratio([4, 2, 0, 1, 3], 5, 0.5) == [4, 2, 0]
    assert edges_for_ratio([4, 2, 0, 1, 3], 5, 0.4) == [4, 2]
    with pytest.raises(ValueError):
        edges_for_ratio([1], 5, 1.0)


def test_compression_curve_endpoints_are_exact(small_graph):
    graph, gcn = small_graph
    order = list(range(graph.num_edges))[::-1]
    curve = compression_curve(gcn, graph, order, [0.0, 0.5, 1.0])
    assert curve.at(1.0) == curve.reference == gcn_accuracy(gcn, graph)
    Z, _ = _gcn_forward(gcn, graph.node_features, np.eye(graph.num_nodes))
    features_only = float(np.mean(np.argmax(Z[graph.test], axis=1) == graph.labels[graph.test]))
    assert curve.at(0.0) == features_only
    sampled = compression_curve(gcn, graph, lambda r: baseline_edge_selector(graph, "uniform", r, 0), [0.0, 1.0])
    assert sampled.at(1.0) == curve.reference
    with pytest.raises(ValueError):
        compression_curve(gcn, graph, order, [0.5, 0.0])


def test_attribute_edges_orders_every_edge(small_graph):
    graph, gcn = small_graph
    res = attribute_edges(gcn, graph, rounds=4, steps=4)
    assert sorted(res.order) == list(range(graph.num_edges))
    assert res.config["per_round"] == 6
    ig = attribute_edges(gcn, graph, "ig", steps=4)
    assert ig.config["ranking_mode"] == "absolute"
    with pytest.raises(ValueError):
        attribute_edges(gcn, graph, "saliency")


# --- files ---------------------------------------------------------------------------------------


def test_graph_round_trip(tmp_path):
    g = make_sbm_graph(2, 5, 0.8, 0.1, 3, seed=2)
    write_graph(g, tmp_path / "g")
    assert (tmp_path / "g" / "labels.csv").read_text().splitlines()[0] == "node_id,label"
    assert set(json.loads((tmp_path / "g" / "split.json").read_text())) == {"train", "test"}
    back = read_graph(tmp_path / "g")
    np.testing.assert_array_equal(back.edges, g.edges)
    np.testing.assert_array_equal(back.node_features, g.node_features)
    np.testing.assert_array_equal(back.labels, g.labels)
    np.testing.assert_array_equal(back.test, g.test)


def test_missing_split_file(tmp_path):
    write_graph(_path_graph(), tmp_path / "g")
    (tmp_path / "g" / "split.json").unlink()
    with pytest.raises(FileNotFoundError, match="split"):
        read_graph(tmp_path / "g")
