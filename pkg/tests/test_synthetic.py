import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greedypig.attribution import greedy_pig, integrated_gradients
from greedypig.core import AlgoConfig
from greedypig.graph import gcn_accuracy
from greedypig.models import TabularDataset, cross_entropy, linreg_objective, linreg_solve, train_model
from greedypig.objectives import SetFunctionView, eval_set, function_objective, modular_objective
from greedypig.synthetic import (
    PlantedTabularSpec,
    ReplicationSpec,
    closed_form_pig_linreg,
    exact_redundancy_view,
    make_correlated_linreg,
    make_planted_tabular,
    make_redundancy_instance,
    make_region_model,
    make_sbm_graph,
    random_coverage_instance,
    redundancy_demo_spec,
    replicate_features,
)


# --- replication ----------------------------------------------------------------------


@pytest.mark.parametrize("mode", ["smooth_max", "mean"])
def test_unit_counts_reproduce_the_base(mode, rng):
    base = function_objective(3, lambda s: float(s[0] * s[1] + s[2] ** 2),
                              lambda s: np.array([s[1], s[0], 2 * s[2]]))
    rep = replicate_features(ReplicationSpec(base, (1, 1, 1), mode))
    for s in rng.uniform(size=(5, 3)):
        v1, g1 = base.value_and_gradient(s)
        v2, g2 = rep.value_and_gradient(s)
        assert v1 == v2
        np.testing.assert_array_equal(g1, g2)


def test_demo_instance_ig_scores():
    res = integrated_gradients(replicate_features(redundancy_demo_spec()), 64)
    np.testing.assert_allclose(res.scores[:3], 5 / 3, rtol=1e-3)
    assert res.scores[3] == pytest.approx(1.0)
    assert abs(res.scores[0] - res.scores[1]) <= 1e-9 and abs(res.scores[1] - res.scores[2]) <= 1e-9


def test_frozen_replica_silences_its_copies():
    obj = replicate_features(redundancy_demo_spec())
    for t in (0.0, 0.25, 0.5):
        g = obj.gradient(np.array([1.0, t, t, t]))
        assert np.all(np.abs(g[1:3]) <= 1e-3)
    # with every copy at 1 the block is tied again and the weight is shared evenly
    np.testing.assert_allclose(obj.gradient(np.ones(4))[:3], 5 / 3)


@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.sampled_from(["smooth_max", "mean"]),
       st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_replica_symmetry(counts, mode, seed):
    w = np.random.default_rng(seed).uniform(-2, 2, size=len(counts))
    spec = ReplicationSpec(modular_objective(w), tuple(counts), mode, 8.0)
    scores = integrated_gradients(replicate_features(spec), 16).scores
    for blk in spec.blocks:
        assert np.ptp(scores[blk]) <= 1e-9


def test_replication_spec_validation():
    base = modular_objective([1.0, 2.0])
    with pytest.raises(ValueError):
        ReplicationSpec(base, (1,))
    with pytest.raises(ValueError):
        ReplicationSpec(base, (0, 1))
    with pytest.raises(ValueError):
        ReplicationSpec(base, (1, 1), beta=0.0)
    with pytest.raises(ValueError):
        ReplicationSpec(base, (1, 1), mode="softmax")


def test_redundancy_pathology_exact_values():
    spec = redundancy_demo_spec()
    obj = replicate_features(spec)
    exact = exact_redundancy_view(spec)
    ig = integrated_gradients(obj, 32)
    gp = greedy_pig(obj, AlgoConfig(rounds=4, per_round=1, steps=32))
    assert ig.order[:3] == [0, 1, 2]
    assert eval_set(exact, ig.order[:2]) == 5.0
    assert eval_set(exact, gp.order[:2]) == 6.0


def test_smooth_surrogate_is_close_to_the_exact_view_at_corners():
    spec = redundancy_demo_spec()
    smooth, exact = SetFunctionView(replicate_features(spec)), exact_redundancy_view(spec)
    for S in ([], [3], [0, 1, 2], [0, 1, 2, 3]):
        assert smooth(S) == pytest.approx(exact(S), abs=1e-12)
    for mask in range(16):
        S = [i for i in range(4) if mask >> i & 1]
        assert abs(smooth(S) - exact(S)) <= 5 * np.log(3) / spec.beta


def test_redundancy_instances_are_reproducible():
    a, b = make_redundancy_instance(7), make_redundancy_instance(7)
    assert a.counts == b.counts
    assert max(a.counts) >= 2


# --- correlated linear regression -----------------------------------------------------


def test_uncorrelated_design():
    p = make_correlated_linreg(2, rho=0.0, seed=0)
    assert abs(p.A[:, 0] @ p.A[:, 1]) <= 0.15
    np.testing.assert_allclose(np.linalg.norm(p.A, axis=0), 1.0)
    assert make_correlated_linreg(1, seed=3).A.shape == (200, 1)


def test_correlated_pair_gives_opposite_sign_ig():
    """IG splits sign across a strongly correlated pair when the second coefficient is
    negative and smaller than rho in magnitude (see the decision log for why (1, -1) cannot)."""
    p = make_correlated_linreg(2, [(0, 1)], rho=0.99, seed=0, coef=[1.0, -0.5])
    assert p.A[:, 0] @ p.A[:, 1] > 0.98
    ig = integrated_gradients(linreg_objective(p), 1024).scores
    assert ig[0] * ig[1] < 0
    np.testing.assert_allclose(ig, closed_form_pig_linreg(p), rtol=1e-6)


def test_equal_and_opposite_coefficients_keep_the_same_sign():
    for seed in range(5):
        p = make_correlated_linreg(2, [(0, 1)], rho=0.99, seed=seed, coef=[1.0, -1.0])
        ig = closed_form_pig_linreg(p)
        assert ig[0] * ig[1] > 0


def test_correlated_linreg_rejects_bad_rho():
    with pytest.raises(ValueError):
        make_correlated_linreg(2, [(0, 1)], rho=1.0)


def test_closed_form_examples(rng):
    np.testing.assert_allclose(closed_form_pig_linreg(linreg_solve(np.eye(2), [1, 2])), [1, 4])
    np.testing.assert_array_equal(closed_form_pig_linreg(linreg_solve(rng.normal(size=(6, 3)), np.zeros(6))), 0)
    for _ in range(10):
        p = linreg_solve(rng.normal(size=(12, 4)), rng.normal(size=12))
        obj = linreg_objective(p)
        gap = obj.value(np.ones(4)) - obj.value(np.zeros(4))
        assert abs(closed_form_pig_linreg(p).sum() - gap) <= 1e-9


# --- planted tabular ------------------------------------------------------------------


def test_planted_default_is_frozen():
    data, informative = make_planted_tabular()
    assert informative == [3, 20, 24, 25, 27]
    assert data.rows.shape == (4096, 30)
    again, _ = make_planted_tabular()
    np.testing.assert_array_equal(data.rows, again.rows)
    np.testing.assert_array_equal(data.labels, again.labels)


def test_planted_degenerate_specs():
    data, informative = make_planted_tabular(PlantedTabularSpec(6, 6, 200, 0.0, 1))
    assert informative == list(range(6))
    data, informative = make_planted_tabular(PlantedTabularSpec(6, 0, 200, 0.0, 1))
    assert informative == []
    assert 0 < data.labels.mean() < 1
    with pytest.raises(ValueError):
        PlantedTabularSpec(3, 4)


def test_planted_set_beats_random_sets():
    data, informative = make_planted_tabular()
    train, val = data.split(0.8, 0)

    def val_loss(cols):
        net, _ = train_model([5, 16, 2], TabularDataset(train.rows[:, cols], train.labels), 150, 0.5, seed=0)
        return cross_entropy(net, TabularDataset(val.rows[:, cols], val.labels))

    planted = val_loss(informative)
    rng = np.random.default_rng(0)
    for _ in range(20):
        cols = sorted(rng.choice(30, 5, replace=False).tolist())
        if cols != informative:
            assert planted < val_loss(cols)


# --- SBM graphs -------------------------------------------------------------------------


def test_sbm_cliques():
    g = make_sbm_graph(2, 5, 1.0, 0.0, 3, seed=0)
    assert g.num_edges == 2 * 10
    assert all(g.labels[u] == g.labels[v] for u, v in g.edges)


def test_sbm_default_shape_and_reproducibility(sbm_default):
    graph, gcn = sbm_default
    assert graph.num_nodes == 120 and graph.num_edges == 807
    assert np.all(graph.edges[:, 0] < graph.edges[:, 1])
    again = make_sbm_graph(seed=0)
    np.testing.assert_array_equal(again.edges, graph.edges)
    np.testing.assert_array_equal(again.node_features, graph.node_features)
    assert gcn_accuracy(gcn, graph) >= 0.9


def test_sbm_rejects_bad_parameters():
    with pytest.raises(ValueError):
        make_sbm_graph(2, [3, 0])
    with pytest.raises(ValueError):
        make_sbm_graph(p_in=1.5)


def test_sbm_equal_probabilities_carry_no_structure():
    g = make_sbm_graph(2, 80, 0.1, 0.1, 2, seed=4)
    same = np.mean([g.labels[u] == g.labels[v] for u, v in g.edges])
    assert 0.4 <= same <= 0.6


# --- small analytic instances -----------------------------------------------------------


def test_coverage_extension_agrees_at_corners():
    obj = random_coverage_instance(5, 3)
    view = SetFunctionView(obj)
    assert view([]) == 0.0
    vals = [view([i]) for i in range(5)]
    assert all(v >= 0 for v in vals)
    assert view(range(5)) >= max(vals)


def test_region_model_reads_only_its_region():
    net, regions = make_region_model()
    assert regions[1] == [4, 5, 6, 7]
    W = net.weights[0]
    for c, reg in enumerate(regions):
        outside = np.setdiff1d(np.arange(16), reg)
        np.testing.assert_array_equal(W[outside, c], 0.0)
