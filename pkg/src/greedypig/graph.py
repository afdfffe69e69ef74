"""Edge attribution for a three-layer GCN and accuracy-versus-kept-edges curves.

Each undirected edge carries one mask value shared by both directions. The
normalised adjacency (D+I)^-1/2 (W+I) (D+I)^-1/2 is rebuilt from the masked
weights on every call, and the reverse pass goes through the degrees too.
"""

from __future__ import annotations

import csv
import json
import math
import os
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .attribution import greedy_pig, integrated_gradients
from .core import AlgoConfig, AttributionResult, DifferentiableObjective, DimensionError
from .models import TinyGCN, log_softmax

GCN_DEPTH = 3


class UntrainedModelError(ValueError):
    pass


@dataclass
class SparseGraph:
    num_nodes: int
    edges: np.ndarray
    node_features: np.ndarray
    labels: np.ndarray
    train: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed in the edge list")
        if e.size and (e.min() < 0 or e.max() >= self.num_nodes):
            raise IndexError("edge endpoint out of range")
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0) if e.size else e.reshape(0, 2)
        self.edges = e
        self.node_features = np.atleast_2d(np.asarray(self.node_features, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.train = np.asarray(self.train, dtype=np.int64).reshape(-1)
        self.test = np.asarray(self.test, dtype=np.int64).reshape(-1)
        if self.node_features.shape[0] != self.num_nodes:
            raise DimensionError("node feature rows", self.num_nodes, self.node_features.shape[0])
        if self.labels.shape[0] != self.num_nodes:
            raise DimensionError("labels", self.num_nodes, self.labels.shape[0])

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def degrees(self) -> np.ndarray:
        return (np.bincount(self.edges[:, 0], minlength=self.num_nodes)
                + np.bincount(self.edges[:, 1], minlength=self.num_nodes)).astype(np.float64)

    def dense_adjacency(self, edge_mask=None) -> np.ndarray:
        s = np.ones(self.num_edges) if edge_mask is None else np.asarray(edge_mask, dtype=np.float64)
        A = np.zeros((self.num_nodes, self.num_nodes))
        A[self.edges[:, 0], self.edges[:, 1]] = s
        A[self.edges[:, 1], self.edges[:, 0]] = s
        return A

    def neighbours(self) -> list:
        nb = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            nb[u].append(int(v))
            nb[v].append(int(u))
        return nb

    def within_hops(self, node: int, hops: int) -> np.ndarray:
        """Boolean node mask of everything at distance <= hops from ``node``."""
        nb = self.neighbours()
        dist = np.full(self.num_nodes, -1)
        dist[node] = 0
        q = deque([node])
        while q:
            u = q.popleft()
            if dist[u] == hops:
                continue
            for v in nb[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    q.append(v)
        return dist >= 0


# ---------------------------------------------------------------------------
# Normalisation
# ---------------------------------------------------------------------------


def normalize_adjacency(W):
    """(D+I)^-1/2 (W+I) (D+I)^-1/2 with D the row sums of W.

    Accepts a dense array (returns dense) or a scipy sparse matrix (returns CSR).
    """
    if sp.issparse(W):
        W = sp.csr_matrix(W, dtype=np.float64)
        if W.shape[0] != W.shape[1]:
            raise DimensionError("adjacency columns", W.shape[0], W.shape[1])
        if W.nnz and W.data.min() < 0:
            raise ValueError("adjacency weights must be nonnegative")
        if abs(W - W.T).max() > 0:
            raise ValueError("adjacency must be symmetric")
        r = 1.0 / np.sqrt(np.asarray(W.sum(axis=1)).reshape(-1) + 1.0)
        Dr = sp.diags(r)
        return (Dr @ (W + sp.identity(W.shape[0])) @ Dr).tocsr()
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {W.shape}")
    if np.any(W < 0):
        raise ValueError("adjacency weights must be nonnegative")
    if not np.array_equal(W, W.T):
        raise ValueError("adjacency must be symmetric")
    r = 1.0 / np.sqrt(W.sum(axis=1) + 1.0)
    return r[:, None] * (W + np.eye(W.shape[0])) * r[None, :]


class _Propagation:
    """Masked normalised adjacency in COO form: both edge directions, then the diagonal."""

    def __init__(self, graph: SparseGraph, edge_mask):
        m, E = graph.num_nodes, graph.num_edges
        s = np.asarray(edge_mask, dtype=np.float64)
        u, v = graph.edges[:, 0], graph.edges[:, 1]
        diag = np.arange(m)
        self.E = E
        self.rows = np.concatenate([u, v, diag])
        self.cols = np.concatenate([v, u, diag])
        self.w = np.concatenate([s, s, np.ones(m)])
        self.deg = 1.0 + np.bincount(u, s, minlength=m) + np.bincount(v, s, minlength=m)
        self.r = 1.0 / np.sqrt(self.deg)
        vals = self.w * self.r[self.rows] * self.r[self.cols]
        self.A = sp.csr_matrix((vals, (self.rows, self.cols)), shape=(m, m))

    def grad_entries(self, dOut, Y) -> np.ndarray:
        """d/dÂ_ij of <dOut, Â Y> on every stored entry."""
        return np.einsum("ij,ij->i", dOut[self.rows], Y[self.cols])

    def edge_gradient(self, gA: np.ndarray) -> np.ndarray:
        """Chain an entry-wise gradient through the normalisation to the shared edge masks."""
        E = self.E
        dw = gA * self.r[self.rows] * self.r[self.cols]
        gw = gA * self.w
        dr = (np.bincount(self.rows, gw * self.r[self.cols], minlength=self.r.shape[0])
              + np.bincount(self.cols, gw * self.r[self.rows], minlength=self.r.shape[0]))
        dd = -0.5 * dr * self.deg ** -1.5
        u, v = self.rows[:E], self.cols[:E]
        return dw[:E] + dw[E:2 * E] + dd[u] + dd[v]


def _gcn_forward(gcn: TinyGCN, X, A, gates=None):
    """``gates`` optionally freezes the two ReLU patterns (see ``grad_check``)."""
    Y1 = X @ gcn.theta1
    P1 = A @ Y1
    H1 = np.maximum(P1, 0.0) if gates is None else P1 * gates[0]
    Y2 = H1 @ gcn.theta2
    P2 = A @ Y2
    H2 = np.maximum(P2, 0.0) if gates is None else P2 * gates[1]
    Y3 = H2 @ gcn.theta3
    Z = A @ Y3
    return Z, (Y1, P1, H1, Y2, P2, H2, Y3)


def _gcn_backward(gcn: TinyGCN, X, A, cache, dZ, prop: _Propagation = None):
    """Returns (parameter grads, entry-wise grads of Â or None)."""
    Y1, P1, H1, Y2, P2, H2, Y3 = cache
    gA = prop.grad_entries(dZ, Y3) if prop is not None else None
    dY3 = A @ dZ  # Â is symmetric
    dth3 = H2.T @ dY3
    dP2 = (dY3 @ gcn.theta3.T) * (P2 > 0.0)
    if prop is not None:
        gA = gA + prop.grad_entries(dP2, Y2)
    dY2 = A @ dP2
    dth2 = H1.T @ dY2
    dP1 = (dY2 @ gcn.theta2.T) * (P1 > 0.0)
    if prop is not None:
        gA = gA + prop.grad_entries(dP1, Y1)
    dY1 = A @ dP1
    dth1 = X.T @ dY1
    return [dth1, dth2, dth3], gA


def gcn_forward(gcn: TinyGCN, graph: SparseGraph, edge_mask=None) -> np.ndarray:
    """Class probabilities for every node."""
    s = np.ones(graph.num_edges) if edge_mask is None else edge_mask
    Z, _ = _gcn_forward(gcn, graph.node_features, _Propagation(graph, s).A)
    return np.exp(log_softmax(Z))


def gcn_accuracy(gcn: TinyGCN, graph: SparseGraph, edge_mask=None, nodes=None) -> float:
    nodes = graph.test if nodes is None else np.asarray(nodes)
    s = np.ones(graph.num_edges) if edge_mask is None else edge_mask
    Z, _ = _gcn_forward(gcn, graph.node_features, _Propagation(graph, s).A)
    return float(np.mean(np.argmax(Z[nodes], axis=1) == graph.labels[nodes]))


def gcn_loss_and_grads(gcn: TinyGCN, graph: SparseGraph, _unused=None):
    """Mean cross-entropy on the training nodes of the full graph and its parameter gradients."""
    prop = _Propagation(graph, np.ones(graph.num_edges))
    Z, cache = _gcn_forward(gcn, graph.node_features, prop.A)
    lp = log_softmax(Z)
    t = graph.train
    y = graph.labels[t]
    loss = -float(np.mean(lp[t, y]))
    dZ = np.zeros_like(Z)
    dZ[t] = np.exp(lp[t])
    dZ[t, y] -= 1.0
    dZ /= t.shape[0]
    grads, _ = _gcn_backward(gcn, graph.node_features, prop.A, cache, dZ)
    return loss, grads


# ---------------------------------------------------------------------------
# Edge objective
# ---------------------------------------------------------------------------


def gnn_edge_objective(gcn: TinyGCN, graph: SparseGraph, target: Union[str, int] = "train",
                       convention: str = "undirected") -> DifferentiableObjective:
    """g(s) = mean log-likelihood of the target nodes' labels with edges scaled by s.

    ``target`` is ``"train"`` (training nodes, true labels), ``"all"`` (every node,
    labelled by the full-graph prediction, so the objective rewards edge sets that
    keep the model's classification of all nodes and never reads test labels) or a
    node id. For a single node the
    gradient is zeroed outside the edges whose endpoints both lie within three hops.
    ``convention="undirected"`` returns the exact derivative with respect to the shared
    edge variable; ``"directed"`` returns the symmetrised directed gradient
    (M + M^T)/2 read off at each edge, which is half of it.
    """
    if not gcn.trained:
        raise UntrainedModelError("edge attribution needs a trained GCN")
    if convention not in ("undirected", "directed"):
        raise ValueError(f"unknown convention {convention!r}")
    if graph.num_edges == 0:
        raise ValueError("graph has no edges to attribute")
    X = graph.node_features
    support = None
    if isinstance(target, str):
        if target == "train":
            nodes = graph.train
            y = graph.labels[nodes]
        elif target == "all":
            nodes = np.arange(graph.num_nodes)
            Z, _ = _gcn_forward(gcn, X, _Propagation(graph, np.ones(graph.num_edges)).A)
            y = np.argmax(Z, axis=1)
        else:
            raise ValueError(f"target must be 'train', 'all' or a node id, got {target!r}")
    else:
        node = int(target)
        if not 0 <= node < graph.num_nodes:
            raise IndexError(f"node {node} out of range for {graph.num_nodes} nodes")
        nodes = np.array([node])
        y = graph.labels[nodes]
        near = graph.within_hops(node, GCN_DEPTH)
        support = (near[graph.edges[:, 0]] & near[graph.edges[:, 1]]).astype(np.float64)
    scale = 0.5 if convention == "directed" else 1.0

    def fn(s):
        prop = _Propagation(graph, s)
        Z, cache = _gcn_forward(gcn, X, prop.A)
        lp = log_softmax(Z)
        value = float(np.mean(lp[nodes, y]))
        dZ = np.zeros_like(Z)
        dZ[nodes] = -np.exp(lp[nodes])
        dZ[nodes, y] += 1.0
        dZ /= nodes.shape[0]
        _, gA = _gcn_backward(gcn, X, prop.A, cache, dZ, prop)
        g = prop.edge_gradient(gA) * scale
        if support is not None:
            g = g * support
        return value, g

    def value_fn(s, gates=None):
        Z, _ = _gcn_forward(gcn, X, _Propagation(graph, s).A, gates)
        return float(np.mean(log_softmax(Z)[nodes, y]))

    def gates(s):
        _, cache = _gcn_forward(gcn, X, _Propagation(graph, s).A)
        return [cache[1] > 0.0, cache[4] > 0.0]

    meta = {"edge_support": support, "target_nodes": nodes, "target_labels": y}
    if support is None:
        # the single-node gradient is deliberately truncated, so it is not a finite-difference target
        meta.update(gates=gates, gated_value=value_fn)
    name = target if support is None else f"node {int(target)}"
    return DifferentiableObjective(graph.num_edges, fn, f"gcn-edges({name})", value_fn=value_fn, meta=meta)


def symmetrize_gradient(M):
    """(M + M^T) / 2, dense or sparse."""
    if sp.issparse(M):
        return ((M + M.T) * 0.5).tocsr()
    M = np.asarray(M, dtype=np.float64)
    return 0.5 * (M + M.T)


# ---------------------------------------------------------------------------
# Selectors and curves
# ---------------------------------------------------------------------------


def baseline_edge_selector(graph: SparseGraph, kind: str, ratio: float, seed: int = 0) -> list:
    """Sample ceil(ratio*|E|) edges without replacement, uniformly or with weight (d_u d_v)^-1/2."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio {ratio} outside [0, 1]")
    E = graph.num_edges
    count = min(E, math.ceil(ratio * E - 1e-9))
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        return [int(i) for i in rng.permutation(E)[:count]]
    if kind != "degree_weighted":
        raise ValueError(f"unknown selector kind {kind!r}")
    deg = graph.degrees()
    weights = 1.0 / np.sqrt(deg[graph.edges[:, 0]] * deg[graph.edges[:, 1]])
    remaining = list(range(E))
    w = weights.copy()
    chosen = []
    for _ in range(count):
        p = w[remaining]
        j = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
        j = min(j, len(remaining) - 1)
        chosen.append(remaining.pop(j))
    return chosen


def edges_for_ratio(order: Sequence[int], num_edges: int, ratio: float) -> list:
    count = min(num_edges, math.ceil(ratio * num_edges - 1e-9))
    if count > len(order):
        raise ValueError(f"ordering covers {len(order)} edges, ratio {ratio} needs {count}")
    return list(order[:count])


@dataclass
class CompressionCurve:
    points: list
    reference: float

    def __iter__(self):
        return iter(self.points)

    def at(self, ratio: float) -> float:
        for r, acc in self.points:
            if r == ratio:
                return acc
        raise KeyError(ratio)


def compression_curve(gcn: TinyGCN, graph: SparseGraph, selector: Union[Sequence[int], Callable],
                      ratios: Sequence[float], nodes=None) -> CompressionCurve:
    """Accuracy of the GCN run on kept edges only (mask exactly 0/1) at each ratio.

    ``selector`` is an edge ordering (top edges are kept) or ``ratio -> edge indices``.
    """
    ratios = [float(r) for r in ratios]
    if ratios != sorted(ratios) or (ratios and (ratios[0] < 0 or ratios[-1] > 1)):
        raise ValueError("ratios must be sorted within [0, 1]")
    E = graph.num_edges
    points = []
    for r in ratios:
        keep = selector(r) if callable(selector) else edges_for_ratio(selector, E, r)
        s = np.zeros(E)
        s[list(keep)] = 1.0
        points.append((r, gcn_accuracy(gcn, graph, s, nodes)))
    return CompressionCurve(points, gcn_accuracy(gcn, graph, np.ones(E), nodes))


def attribute_edges(gcn: TinyGCN, graph: SparseGraph, algorithm: str = "greedy-pig", rounds: int = 10,
                    steps: int = 20, per_round=None, target="all", threads: int = 1) -> AttributionResult:
    """Edge ordering by one-shot IG (absolute) or Greedy PIG with z = ceil(|E| / R)."""
    obj = gnn_edge_objective(gcn, graph, target)
    if algorithm == "ig":
        return integrated_gradients(obj, steps, "absolute", threads)
    if algorithm != "greedy-pig":
        raise ValueError(f"unknown edge attribution algorithm {algorithm!r}")
    z = per_round or math.ceil(graph.num_edges / rounds)
    return greedy_pig(obj, AlgoConfig(rounds=rounds, per_round=z, steps=steps), threads)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def write_graph(graph: SparseGraph, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "edges.tsv"), "w") as fh:
        for u, v in graph.edges:
            fh.write(f"{u}\t{v}\n")
    with open(os.path.join(directory, "features.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id"] + [f"f{j}" for j in range(graph.node_features.shape[1])])
        for i, row in enumerate(graph.node_features):
            w.writerow([i] + [repr(float(x)) for x in row])
    with open(os.path.join(directory, "labels.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "label"])
        for i, y in enumerate(graph.labels):
            w.writerow([i, int(y)])
    with open(os.path.join(directory, "split.json"), "w") as fh:
        json.dump({"train": graph.train.tolist(), "test": graph.test.tolist()}, fh)
        fh.write("\n")


def read_graph(directory) -> SparseGraph:
    split_path = os.path.join(directory, "split.json")
    if not os.path.exists(split_path):
        raise FileNotFoundError(f"missing split file {split_path}")
    with open(split_path) as fh:
        split = json.load(fh)
    with open(os.path.join(directory, "features.csv"), newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    ids = np.array([int(r[0]) for r in rows])
    feats = np.array([[float(x) for x in r[1:]] for r in rows])
    X = np.empty_like(feats)
    X[ids] = feats
    with open(os.path.join(directory, "labels.csv"), newline="") as fh:
        lrows = list(csv.reader(fh))[1:]
    labels = np.empty(len(ids), dtype=np.int64)
    for r in lrows:
        labels[int(r[0])] = int(r[1])
    edges = []
    with open(os.path.join(directory, "edges.tsv")) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"edges.tsv:{lineno}: expected 'u<TAB>v'")
            edges.append((int(parts[0]), int(parts[1])))
    return SparseGraph(len(ids), np.array(edges, dtype=np.int64).reshape(-1, 2), X, labels,
                       split["train"], split["test"])
