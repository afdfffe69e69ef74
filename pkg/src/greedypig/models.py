"""Differentiable model zoo with analytic gradients.

Everything is float64 numpy. The MLP reverse pass is written out by hand;
``grad_check`` is the central-difference harness used to verify every oracle.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import DifferentiableObjective, DimensionError, DomainError

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN = (64, 32, 16)


class TrainingDivergedError(RuntimeError):
    pass


class MarginError(ValueError):
    """Finite-difference point too close to the boundary of the unit cube."""


# ---------------------------------------------------------------------------
# Linear regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinRegProblem:
    A: np.ndarray
    b: np.ndarray
    x: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def normal_residual(self) -> float:
        return float(np.max(np.abs(self.A.T @ (self.A @ self.x - self.b))))

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist()}


def linreg_solve(A, b) -> LinRegProblem:
    """Least-squares solution of ``A x ~ b`` (minimum norm when ``A`` is rank deficient)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if A.size == 0:
        raise DimensionError("design matrix", 1, 0)
    if A.shape[0] != b.shape[0]:
        raise DimensionError("targets vs design rows", A.shape[0], b.shape[0])
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return LinRegProblem(A.copy(), b.copy(), x)


def linreg_objective(problem: LinRegProblem) -> DifferentiableObjective:
    """g(w) = -||A (x* * w) - b||^2 over the unit cube."""
    A, b, x = problem.A, problem.b, problem.x

    def fn(w):
        r = A @ (x * w) - b
        return 0.0 - float(r @ r), -2.0 * x * (A.T @ r)

    def value_fn(w):
        r = A @ (x * w) - b
        return 0.0 - float(r @ r)

    return DifferentiableObjective(problem.n, fn, "linreg", value_fn=value_fn)


# ---------------------------------------------------------------------------
# Softmax MLP
# ---------------------------------------------------------------------------


@dataclass
class SoftmaxNet:
    """ReLU hidden layers followed by a softmax output.

    ``weights[l]`` has shape ``(layer_dims[l], layer_dims[l+1])``.
    """

    layer_dims: list
    weights: list
    biases: list
    activation: str = "relu"

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        if len(self.layer_dims) < 2:
            raise ValueError("need at least an input and an output layer")
        self.weights = [np.asarray(W, dtype=np.float64) for W in self.weights]
        self.biases = [np.asarray(c, dtype=np.float64).reshape(-1) for c in self.biases]
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("number of weight/bias arrays does not match layer_dims")
        for l, (W, c) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[l], self.layer_dims[l + 1])
            if W.shape != shape:
                raise ValueError(f"layer {l}: weight shape {W.shape} incompatible with {shape}")
            if c.shape != (shape[1],):
                raise ValueError(f"layer {l}: bias length {c.shape[0]} != {shape[1]}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @classmethod
    def init(cls, layer_dims: Sequence[int], seed: int = 0) -> "SoftmaxNet":
        rng = np.random.default_rng(seed)
        Ws, bs = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            lim = 1.0 / np.sqrt(fan_in)
            Ws.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            bs.append(rng.uniform(-lim, lim, size=fan_out))
        return cls(list(layer_dims), Ws, bs)

    @classmethod
    def zeros(cls, layer_dims: Sequence[int]) -> "SoftmaxNet":
        return cls(
            list(layer_dims),
            [np.zeros((a, b)) for a, b in zip(layer_dims[:-1], layer_dims[1:])],
            [np.zeros(b) for b in layer_dims[1:]],
        )

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "SoftmaxNet":
        return SoftmaxNet(list(self.layer_dims), [W.copy() for W in self.weights],
                          [c.copy() for c in self.biases], self.activation)

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "weights": [W.reshape(-1).tolist() for W in self.weights],
            "biases": [c.tolist() for c in self.biases],
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SoftmaxNet":
        dims = [int(v) for v in d["layer_dims"]]
        Ws = []
        for l, flat in enumerate(d["weights"]):
            flat = np.asarray(flat, dtype=np.float64)
            if flat.size != dims[l] * dims[l + 1]:
                raise ValueError(f"layer {l}: {flat.size} weights for shape {dims[l]}x{dims[l + 1]}")
            Ws.append(flat.reshape(dims[l], dims[l + 1]))
        return cls(dims, Ws, d["biases"], d.get("activation", "relu"))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def _check_input(net: SoftmaxNet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.n_inputs:
        raise DimensionError("network input", net.n_inputs, x.shape[-1])
    return x


def _forward(net: SoftmaxNet, x: np.ndarray, gates=None):
    """Logits plus the per-layer inputs and pre-activations needed by the reverse pass.

    ``gates`` freezes the ReLU on/off pattern (one boolean array per hidden layer),
    turning the network into the linear piece that pattern selects.
    """
    acts, pres = [x], []
    h = x
    last = len(net.weights) - 1
    for l, (W, c) in enumerate(zip(net.weights, net.biases)):
        z = h @ W + c
        pres.append(z)
        if l < last:
            h = np.maximum(z, 0.0) if gates is None else z * gates[l]
            acts.append(h)
    return pres[-1], acts, pres


def relu_gates(pres) -> list:
    """On/off pattern of every hidden ReLU (the last entry of ``pres`` is the logits)."""
    return [z > 0.0 for z in pres[:-1]]


def _backward(net: SoftmaxNet, acts, pres, dlogits, want_params: bool = False):
    """Propagate dL/dlogits back to the input (and optionally the parameters)."""
    d = dlogits
    dWs = [None] * len(net.weights)
    dbs = [None] * len(net.weights)
    for l in range(len(net.weights) - 1, -1, -1):
        if l < len(net.weights) - 1:
            d = d * (pres[l] > 0.0)  # ReLU'(0) := 0
        if want_params:
            a = acts[l]
            if d.ndim == 1:
                dWs[l] = np.outer(a, d)
                dbs[l] = d.copy()
            else:
                dWs[l] = a.T @ d
                dbs[l] = d.sum(axis=0)
        d = d @ net.weights[l].T
    return d, dWs, dbs


def mlp_logits(net: SoftmaxNet, x) -> np.ndarray:
    return _forward(net, _check_input(net, x))[0]


def mlp_forward(net: SoftmaxNet, x) -> np.ndarray:
    """Class probabilities for one input (1-d) or a batch (2-d)."""
    return softmax(mlp_logits(net, x))


def mlp_backward(net: SoftmaxNet, x, upstream, wrt: str = "probs") -> np.ndarray:
    """Gradient of a scalar loss with respect to the network input.

    ``upstream`` is dL/d(probabilities) when ``wrt="probs"`` and dL/d(logits)
    when ``wrt="logits"``.
    """
    x = _check_input(net, x)
    logits, acts, pres = _forward(net, x)
    u = np.asarray(upstream, dtype=np.float64)
    if u.shape != logits.shape:
        raise DimensionError("upstream gradient", logits.shape[-1], u.shape[-1])
    if wrt == "probs":
        p = softmax(logits)
        dlogits = p * (u - np.sum(u * p, axis=-1, keepdims=True))
    elif wrt == "logits":
        dlogits = u
    else:
        raise ValueError(f"wrt must be 'probs' or 'logits', got {wrt!r}")
    return _backward(net, acts, pres, dlogits)[0]


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass
class TabularDataset:
    rows: np.ndarray
    labels: np.ndarray
    batch_size: int = 64
    feature_names: Optional[list] = None

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        self.labels = np.asarray(self.labels).reshape(-1)
        if self.rows.shape[0] != self.labels.shape[0]:
            raise DimensionError("labels vs rows", self.rows.shape[0], self.labels.shape[0])
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("dataset contains missing or non-finite values")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.feature_names is None:
            self.feature_names = [f"x{i}" for i in range(self.rows.shape[1])]

    def __len__(self):
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    @property
    def n_batches(self) -> int:
        return -(-len(self) // self.batch_size)

    def batch_rows(self, batch_indices) -> np.ndarray:
        """Row indices covered by the given batch numbers, in batch order."""
        parts = [np.arange(b * self.batch_size, min((b + 1) * self.batch_size, len(self)))
                 for b in batch_indices]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    def subset(self, rows=None, columns=None) -> "TabularDataset":
        r = slice(None) if rows is None else np.asarray(rows)
        c = slice(None) if columns is None else np.asarray(columns)
        names = self.feature_names if columns is None else [self.feature_names[i] for i in columns]
        return TabularDataset(self.rows[r][:, c], self.labels[r], self.batch_size, list(names))

    def split(self, fraction: float, seed: int):
        """Seeded (train, validation) split."""
        perm = np.random.default_rng(seed).permutation(len(self))
        cut = int(round(fraction * len(self)))
        return self.subset(np.sort(perm[:cut])), self.subset(np.sort(perm[cut:]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(self.feature_names) + ["label"])
            for row, y in zip(self.rows, self.labels):
                w.writerow([repr(float(v)) for v in row] + [_label_str(y)])

    @classmethod
    def from_csv(cls, path, batch_size: int = 64) -> "TabularDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValueError(f"{path}: empty file") from None
            if "label" not in header:
                raise ValueError(f"{path}: no 'label' column in header {header}")
            li = header.index("label")
            names = [h for j, h in enumerate(header) if j != li]
            rows, labels = [], []
            for lineno, rec in enumerate(reader, start=2):
                if not rec:
                    continue
                if len(rec) != len(header):
                    raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
                try:
                    rows.append([float(v) for j, v in enumerate(rec) if j != li])
                    labels.append(float(rec[li]))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
        if not rows:
            raise ValueError(f"{path}: no data rows")
        labels = np.asarray(labels)
        if np.all(labels == np.round(labels)):
            labels = labels.astype(np.int64)
        return cls(np.asarray(rows), labels, batch_size, names)


def _label_str(y) -> str:
    if float(y) == int(y):
        return str(int(y))
    return repr(float(y))


# ---------------------------------------------------------------------------
# GCN parameters (propagation lives in ``graph``)
# ---------------------------------------------------------------------------


@dataclass
class TinyGCN:
    """Three-layer GCN weights: softmax(Â relu(Â relu(Â X θ1) θ2) θ3)."""

    theta1: np.ndarray
    theta2: np.ndarray
    theta3: np.ndarray
    trained: bool = False

    def __post_init__(self):
        self.theta1 = np.asarray(self.theta1, dtype=np.float64)
        self.theta2 = np.asarray(self.theta2, dtype=np.float64)
        self.theta3 = np.asarray(self.theta3, dtype=np.float64)
        if self.theta1.shape[1] != self.theta2.shape[0] or self.theta2.shape[1] != self.theta3.shape[0]:
            raise ValueError("GCN layer dimensions are incompatible")

    @classmethod
    def init(cls, layer_dims: Sequence[int], seed: int = 0) -> "TinyGCN":
        if len(layer_dims) != 4:
            raise ValueError("TinyGCN has exactly three propagation layers (4 layer dims)")
        net = SoftmaxNet.init(layer_dims, seed)
        return cls(*net.weights, trained=False)

    @property
    def layer_dims(self) -> list:
        return [self.theta1.shape[0], self.theta1.shape[1], self.theta2.shape[1], self.theta3.shape[1]]

    @property
    def params(self) -> list:
        return [self.theta1, self.theta2, self.theta3]

    def copy(self) -> "TinyGCN":
        return TinyGCN(self.theta1.copy(), self.theta2.copy(), self.theta3.copy(), self.trained)

    def to_dict(self) -> dict:
        return {
            "layer_dims": self.layer_dims,
            "activation": "relu",
            "theta1": self.theta1.reshape(-1).tolist(),
            "theta2": self.theta2.reshape(-1).tolist(),
            "theta3": self.theta3.reshape(-1).tolist(),
            "trained": self.trained,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TinyGCN":
        dims = [int(v) for v in d["layer_dims"]]
        thetas = []
        for l in range(3):
            flat = np.asarray(d[f"theta{l + 1}"], dtype=np.float64)
            if flat.size != dims[l] * dims[l + 1]:
                raise ValueError(f"theta{l + 1}: {flat.size} values for shape {dims[l]}x{dims[l + 1]}")
            thetas.append(flat.reshape(dims[l], dims[l + 1]))
        return cls(*thetas, trained=bool(d.get("trained", True)))


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Read a model file.

    GCN files are recognised by their ``theta1`` key and linear-regression
    problems by ``A`` and ``b`` (the solution is recomputed on load).
    """
    with open(path) as fh:
        d = json.load(fh)
    if isinstance(d, dict) and "A" in d and "b" in d:
        return linreg_solve(d["A"], d["b"])
    if not isinstance(d, dict) or "layer_dims" not in d:
        raise ValueError(f"{path}: not a model file")
    if "theta1" in d:
        return TinyGCN.from_dict(d)
    return SoftmaxNet.from_dict(d)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def cross_entropy(net: SoftmaxNet, data: TabularDataset) -> float:
    lp = log_softmax(mlp_logits(net, data.rows))
    return float(-np.mean(lp[np.arange(len(data)), data.labels]))


def accuracy(net: SoftmaxNet, data: TabularDataset) -> float:
    return float(np.mean(np.argmax(mlp_logits(net, data.rows), axis=1) == data.labels))


def _mlp_loss_and_grads(net, X, y):
    logits, acts, pres = _forward(net, X)
    lp = log_softmax(logits)
    m = X.shape[0]
    loss = -float(np.mean(lp[np.arange(m), y]))
    d = np.exp(lp)
    d[np.arange(m), y] -= 1.0
    d /= m
    _, dWs, dbs = _backward(net, acts, pres, d, want_params=True)
    return loss, dWs + dbs


def train_model(model, data, epochs: int = 200, learning_rate: float = 0.1, seed: Optional[int] = None):
    """Full-batch gradient descent on mean cross-entropy.

    ``model`` is a ``SoftmaxNet`` or ``TinyGCN`` (then ``data`` is a ``SparseGraph``),
    or a list of layer dims, in which case weights are initialised from ``seed``.
    Returns ``(trained_model, final_loss)``; the input model is not modified.
    """
    if isinstance(model, (list, tuple)):
        dims = list(model)
        model = TinyGCN.init(dims, seed or 0) if _is_graph(data) else SoftmaxNet.init(dims, seed or 0)
    if isinstance(model, TinyGCN):
        from .graph import gcn_loss_and_grads as loss_and_grads
        params = lambda m: m.params  # noqa: E731
        X, y = data, None
    else:
        if len(data) == 0:
            raise ValueError("cannot train on an empty dataset")
        loss_and_grads = _mlp_loss_and_grads
        params = lambda m: m.weights + m.biases  # noqa: E731
        X, y = data.rows, np.asarray(data.labels, dtype=np.int64)
    model = model.copy()
    loss = None
    for epoch in range(epochs):
        loss, grads = loss_and_grads(model, X, y)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}; try a smaller learning rate than {learning_rate}")
        if learning_rate != 0.0:
            for p, g in zip(params(model), grads):
                p -= learning_rate * g
    if isinstance(model, TinyGCN):
        model.trained = True
        final = loss_and_grads(model, X, y)[0]
    else:
        final = _mlp_loss_and_grads(model, X, y)[0]
    if not np.isfinite(final):
        raise TrainingDivergedError(f"non-finite final loss; try a smaller learning rate than {learning_rate}")
    logger.debug("trained %s for %d epochs, loss %.6f", type(model).__name__, epochs, final)
    return model, final


def _is_graph(data) -> bool:
    return hasattr(data, "edges") and hasattr(data, "node_features")


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    rel_errors: np.ndarray
    analytic: np.ndarray
    numeric: np.ndarray
    worst_index: int = field(default=-1)
    gated: list = field(default_factory=list)

    def __float__(self):
        return self.max_rel_error


def grad_check(objective, point, step: float = 1e-4, floor: float = 1e-8, detail: bool = False):
    """Worst per-coordinate relative error between the analytic and central-difference gradients.

    The relative error of coordinate i is |a_i - f_i| / max(|f_i|, floor), measured
    against the finite-difference reference f.

    Piecewise-smooth objectives (ReLU networks) may publish ``meta["gates"](s)``
    and ``meta["gated_value"](s, gates)``. When the activation pattern at
    ``point +- step*e_i`` differs from the one at ``point``, the stencil straddles
    a kink and plain central differences do not estimate the derivative there; that
    coordinate is then differenced on the piece containing ``point`` instead and
    listed in ``report.gated``.
    """
    w = np.asarray(point, dtype=np.float64).reshape(-1)
    if w.shape[0] != objective.n:
        raise DimensionError("grad_check point", objective.n, w.shape[0])
    if np.any(w < step) or np.any(w > 1.0 - step):
        raise MarginError(f"point must lie in [{step}, {1 - step}]^n for step {step}")
    analytic = objective.gradient(w)
    numeric = np.empty_like(analytic)
    gates_fn = objective.meta.get("gates")
    gated_value = objective.meta.get("gated_value")
    here = gates_fn(w) if gates_fn is not None else None
    gated = []
    for i in range(objective.n):
        wp = w.copy()
        wm = w.copy()
        wp[i] += step
        wm[i] -= step
        if here is not None and not (_same_gates(here, gates_fn(wp)) and _same_gates(here, gates_fn(wm))):
            gated.append(i)
            numeric[i] = (gated_value(wp, here) - gated_value(wm, here)) / (2.0 * step)
        else:
            numeric[i] = (objective.value(wp) - objective.value(wm)) / (2.0 * step)
    denom = np.maximum(np.abs(numeric), floor)
    rel = np.abs(analytic - numeric) / denom
    worst = int(np.argmax(rel)) if rel.size else -1
    report = GradCheckReport(float(rel.max()) if rel.size else 0.0, rel, analytic, numeric, worst, gated)
    return report if detail else report.max_rel_error


def _same_gates(a, b) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def random_interior_points(n: int, count: int, seed: int, margin: float = 0.01) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(margin, 1.0 - margin, size=(count, n))
