import json

import numpy as np
import pytest

from greedypig.core import DifferentiableObjective, DimensionError, DomainError
from greedypig.models import (
    MarginError,
    SoftmaxNet,
    TabularDataset,
    TinyGCN,
    TrainingDivergedError,
    accuracy,
    grad_check,
    linreg_objective,
    linreg_solve,
    load_model,
    mlp_backward,
    mlp_forward,
    random_interior_points,
    save_model,
    softmax,
    train_model,
)
from greedypig.objectives import function_objective


# --- linear regression ------------------------------------------------------


def test_linreg_solve_examples():
    np.testing.assert_allclose(linreg_solve(np.eye(2), [1, 2]).x, [1, 2])
    np.testing.assert_allclose(linreg_solve(np.ones((3, 1)), [1, 2, 3]).x, [2.0])
    np.testing.assert_array_equal(linreg_solve(np.zeros((2, 2)), [1, 1]).x, [0, 0])
    with pytest.raises(DimensionError):
        linreg_solve(np.zeros((0, 0)), [])


def test_linreg_normal_equation_residual(rng):
    for _ in range(10):
        A = rng.normal(size=(int(rng.integers(3, 40)), int(rng.integers(1, 6))))
        b = rng.normal(size=A.shape[0])
        p = linreg_solve(A, b)
        assert p.normal_residual() <= 1e-8 * (1 + np.max(np.abs(A.T @ b)))


def test_linreg_rank_deficient_returns_minimum_norm():
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    p = linreg_solve(A, [1.0, 2.0])
    np.testing.assert_allclose(p.x, [0.5, 0.5])


def test_linreg_objective_values_and_gradients():
    obj = linreg_objective(linreg_solve(np.eye(2), [1, 2]))
    assert obj.value([1, 1]) == 0.0
    assert obj.value([0, 0]) == -5.0
    np.testing.assert_allclose(obj.gradient([0, 0]), [2, 8])
    np.testing.assert_allclose(obj.gradient([1, 1]), [0, 0], atol=1e-12)
    with pytest.raises(DomainError):
        obj.value([1.5, 0])


def test_linreg_gradient_vanishes_at_one_for_any_problem(rng):
    A = rng.normal(size=(20, 4))
    obj = linreg_objective(linreg_solve(A, rng.normal(size=20)))
    np.testing.assert_allclose(obj.gradient(np.ones(4)), 0, atol=1e-10)


# --- MLP ----------------------------------------------------------------------


def test_forward_is_stable_and_normalised():
    np.testing.assert_allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])
    np.testing.assert_allclose(softmax(np.array([1000.0, 1000.0])), [0.5, 0.5])
    net = SoftmaxNet.zeros([4, 3])
    np.testing.assert_allclose(mlp_forward(net, np.arange(4.0)), [1 / 3] * 3)
    net = SoftmaxNet.init([5, 16, 4], 3)
    p = mlp_forward(net, np.random.default_rng(0).normal(size=(7, 5)) * 50)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(p > 0)


def test_forward_rejects_wrong_width():
    with pytest.raises(DimensionError):
        mlp_forward(SoftmaxNet.zeros([4, 3]), np.ones(5))


def test_backward_zero_net_and_identity_squared_error():
    net = SoftmaxNet.zeros([3, 8, 2])
    np.testing.assert_array_equal(mlp_backward(net, np.ones(3), np.ones(2)), 0)
    ident = SoftmaxNet([2, 2], [np.eye(2)], [np.zeros(2)])
    x, target = np.array([0.3, -1.2]), np.array([1.0, 0.5])
    # L = ||logits - target||^2 has dL/dlogits = 2(x - target) and logits = x
    np.testing.assert_allclose(mlp_backward(ident, x, 2 * (x - target), wrt="logits"), 2 * (x - target))


def test_backward_matches_central_differences_2_16_3():
    net = SoftmaxNet.init([2, 16, 3], 7)
    x = np.array([0.4, -0.9])
    up = np.array([0.2, -1.0, 0.5])
    g = mlp_backward(net, x, up)
    h = 1e-6
    fd = np.array([(up @ mlp_forward(net, x + h * e) - up @ mlp_forward(net, x - h * e)) / (2 * h)
                   for e in np.eye(2)])
    np.testing.assert_allclose(g, fd, rtol=1e-5)


def test_model_json_round_trip(tmp_path):
    net = SoftmaxNet.init([3, 4, 2], 0)
    save_model(net, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    for a, b in zip(net.weights + net.biases, back.weights + back.biases):
        np.testing.assert_array_equal(a, b)
    d = json.loads((tmp_path / "m.json").read_text())
    assert d["weights"][0] == net.weights[0].reshape(-1).tolist()  # row-major
    gcn = TinyGCN.init([3, 4, 4, 2], 0)
    save_model(gcn, tmp_path / "g.json")
    back = load_model(tmp_path / "g.json")
    assert isinstance(back, TinyGCN) and not back.trained
    np.testing.assert_array_equal(back.theta2, gcn.theta2)
    save_model(linreg_solve(np.eye(2), [1, 2]), tmp_path / "l.json")
    np.testing.assert_allclose(load_model(tmp_path / "l.json").x, [1, 2])


def test_truncated_model_file_is_rejected(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"layer_dims": [2, 3], "weig')
    with pytest.raises(json.JSONDecodeError):
        load_model(p)


def test_init_is_seeded_and_bounded():
    a, b = SoftmaxNet.init([9, 5, 2], 4), SoftmaxNet.init([9, 5, 2], 4)
    np.testing.assert_array_equal(a.weights[0], b.weights[0])
    assert np.max(np.abs(a.weights[0])) <= 1 / 3


# --- data -------------------------------------------------------------------------


def test_dataset_csv_round_trip(tmp_path):
    ds = TabularDataset(np.array([[0.1, 2.0], [3.5, -1.0], [0.0, 0.0]]), [0, 1, 1], batch_size=2)
    ds.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "x0,x1,label"
    back = TabularDataset.from_csv(tmp_path / "d.csv", batch_size=2)
    np.testing.assert_array_equal(back.rows, ds.rows)
    np.testing.assert_array_equal(back.labels, [0, 1, 1])
    assert back.n_batches == 2
    np.testing.assert_array_equal(back.batch_rows([1, 0]), [2, 0, 1])


def test_dataset_rejects_missing_values(tmp_path):
    (tmp_path / "d.csv").write_text("a,label\n1.0,0\nnan,1\n")
    with pytest.raises(ValueError, match="non-finite"):
        TabularDataset.from_csv(tmp_path / "d.csv")
    (tmp_path / "e.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="label"):
        TabularDataset.from_csv(tmp_path / "e.csv")
    with pytest.raises(ValueError):
        TabularDataset(np.ones((2, 2)), [0, 1], batch_size=0)


# --- training -------------------------------------------------------------------


def _blobs(seed=0, n=200):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    X = rng.normal(size=(n, 2)) * 0.5 + np.where(y[:, None] == 1, 2.0, -2.0)
    return TabularDataset(X, y)


def test_training_separates_blobs():
    data = _blobs()
    net, loss = train_model([2, 8, 2], data, 500, 0.5, seed=0)
    assert accuracy(net, data) >= 0.95
    assert loss < 0.1


def test_training_edge_cases_leave_model_unchanged():
    data = _blobs()
    net0 = SoftmaxNet.init([2, 8, 2], 1)
    same, _ = train_model(net0, data, 0, 0.5)
    np.testing.assert_array_equal(same.weights[0], net0.weights[0])
    same, _ = train_model(net0, data, 25, 0.0)
    np.testing.assert_array_equal(same.weights[1], net0.weights[1])


def test_training_is_bit_reproducible():
    data = _blobs(3)
    a, la = train_model([2, 8, 2], data, 50, 0.3, seed=9)
    b, lb = train_model([2, 8, 2], data, 50, 0.3, seed=9)
    assert la == lb
    np.testing.assert_array_equal(a.weights[0], b.weights[0])


def test_divergence_is_reported():
    with np.errstate(all="ignore"), pytest.raises(TrainingDivergedError, match="smaller learning rate"):
        train_model([2, 8, 2], _blobs(), 20, 1e300, seed=0)


def test_training_rejects_empty_dataset():
    with pytest.raises(ValueError):
        train_model([2, 2], TabularDataset(np.zeros((0, 2)), []), 1, 0.1)


# --- grad_check -------------------------------------------------------------------


def test_grad_check_polynomial_and_linreg():
    prod = function_objective(2, lambda s: s[0] * s[1], lambda s: np.array([s[1], s[0]]))
    assert grad_check(prod, [0.5, 0.5]) <= 1e-8
    obj = linreg_objective(linreg_solve(np.eye(2), [1, 2]))
    assert grad_check(obj, [0.3, 0.7]) <= 1e-6


def test_grad_check_detects_corruption():
    obj = linreg_objective(linreg_solve(np.eye(2), [1, 2]))
    bad = DifferentiableObjective(2, lambda s: (obj.value(s), obj.gradient(s) + np.array([1.0, 0.0])))
    assert grad_check(bad, [0.3, 0.7]) >= 0.5


def test_grad_check_margin_error():
    obj = linreg_objective(linreg_solve(np.eye(2), [1, 2]))
    with pytest.raises(MarginError):
        grad_check(obj, [0.00005, 0.5])
    with pytest.raises(DimensionError):
        grad_check(obj, [0.5])


def test_grad_check_uses_the_local_piece_only_across_kinks():
    """At a point whose stencil crosses a ReLU kink, plain differences disagree with the
    analytic gradient while the frozen-pattern difference agrees."""
    net = SoftmaxNet([1, 1, 2], [np.array([[1.0]]), np.array([[1.0, -1.0]])],
                     [np.array([-0.5]), np.zeros(2)])
    from greedypig.objectives import topclass_objective

    obj = topclass_objective(net, np.array([1.0]), target=0)
    point = np.array([0.5 + 5e-5])  # kink at s = 0.5, inside the +-1e-4 stencil
    report = grad_check(obj, point, detail=True)
    assert report.gated == [0]
    assert report.max_rel_error <= 1e-6
    plain = (obj.value(point + 1e-4) - obj.value(point - 1e-4)) / 2e-4
    assert abs(plain - report.analytic[0]) / abs(report.analytic[0]) > 0.1


def test_random_interior_points_are_seeded():
    a = random_interior_points(3, 5, 1)
    np.testing.assert_array_equal(a, random_interior_points(3, 5, 1))
    assert a.min() >= 0.01 and a.max() <= 0.99
