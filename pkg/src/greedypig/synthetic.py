"""Planted-truth instances: feature replication, correlated regression, tabular and SBM data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DifferentiableObjective
from .models import LinRegProblem, SoftmaxNet, TabularDataset, linreg_solve
from .objectives import SetFunctionView, function_objective, modular_objective


# ---------------------------------------------------------------------------
# Feature replication
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplicationSpec:
    base: DifferentiableObjective
    counts: tuple
    mode: str = "smooth_max"
    beta: float = 32.0

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != self.base.n:
            raise ValueError(f"{len(counts)} counts for a base objective of dimension {self.base.n}")
        if any(c < 1 for c in counts):
            raise ValueError("replica counts must be positive")
        if self.mode not in ("smooth_max", "mean"):
            raise ValueError(f"unknown aggregation mode {self.mode!r}")
        if self.mode == "smooth_max" and not self.beta > 0:
            raise ValueError(f"smooth_max temperature must be positive, got {self.beta}")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def blocks(self) -> list:
        out, start = [], 0
        for c in self.counts:
            out.append(list(range(start, start + c)))
            start += c
        return out


def _aggregate(w, mode, beta):
    """Block aggregate and its gradient; equals 0 at w=0 and 1 at w=1."""
    k = w.shape[0]
    if k == 1:
        return float(w[0]), np.ones(1)
    if mode == "mean":
        return float(w.mean()), np.full(k, 1.0 / k)
    z = beta * w
    zmax = z.max()
    e = np.exp(z - zmax)
    total = e.sum()
    value = (zmax + np.log(total) - np.log(k)) / beta
    return min(1.0, max(0.0, float(value))), e / total


def replicate_features(spec: ReplicationSpec) -> DifferentiableObjective:
    """Expand each base coordinate into a block of interchangeable copies.

    A block is read through a smooth max ((1/beta) logsumexp(beta w) shifted so
    that the all-0 and all-1 blocks map to 0 and 1) or through its mean.
    """
    blocks = spec.blocks
    base = spec.base

    def fn(w):
        u = np.empty(len(blocks))
        dagg = []
        for j, blk in enumerate(blocks):
            u[j], d = _aggregate(w[blk], spec.mode, spec.beta)
            dagg.append(d)
        v, gu = base.value_and_gradient(u)
        g = np.empty(spec.n)
        for j, blk in enumerate(blocks):
            g[blk] = gu[j] * dagg[j]
        return v, g

    return DifferentiableObjective(
        spec.n, fn, f"replicated({spec.mode}, counts={list(spec.counts)})",
        meta={"blocks": blocks, "spec": spec})


class _BlockMaxExtension:
    """h(max over each block): agrees with the redundancy set function at every 0/1 mask."""

    def __init__(self, spec: ReplicationSpec):
        self.spec = spec
        self.n = spec.n
        self.blocks = spec.blocks

    def value(self, mask) -> float:
        mask = np.asarray(mask, dtype=np.float64)
        return self.spec.base.value(np.array([mask[b].max() for b in self.blocks]))


def exact_redundancy_view(spec: ReplicationSpec) -> SetFunctionView:
    """Set function G(S) = h(max of 1_S over each replica block), evaluated exactly."""
    return SetFunctionView(_BlockMaxExtension(spec))


def redundancy_demo_spec(counts=(3, 1), beta: float = 32.0, weights=(5.0, 1.0), mode="smooth_max"):
    """h(u, v) = 5u + v with u copied ``counts[0]`` times."""
    return ReplicationSpec(modular_objective(weights), tuple(counts), mode, beta)


def make_redundancy_instance(seed: int, beta: float = 32.0):
    """Random linear h whose heaviest coordinate is copied enough times to mislead one-shot IG."""
    rng = np.random.default_rng(seed)
    n0 = int(rng.integers(3, 6))
    w = rng.uniform(0.5, 1.5, size=n0)
    top = int(rng.integers(n0))
    w[top] = rng.uniform(3.0, 6.0)
    # w_top / k stays >= every other weight, so one-shot IG ranks all copies first
    k = int(np.floor(w[top] / np.delete(w, top).max()))
    counts = [1] * n0
    counts[top] = max(2, min(k, 5))
    return ReplicationSpec(modular_objective(w), tuple(counts), "smooth_max", beta)


# ---------------------------------------------------------------------------
# Linear regression
# ---------------------------------------------------------------------------


def make_correlated_linreg(n: int, pairs: Sequence = (), rho: float = 0.0, seed: int = 0, m: int = 200,
                           coef=None, noise_std: float = 0.1) -> LinRegProblem:
    """Gaussian design with correlation ``rho`` inside each listed pair, unit-norm columns,
    and response ``X @ coef + noise``."""
    if not abs(rho) < 1.0:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((m, n))
    X = Z.copy()
    for i, j in pairs:
        X[:, j] = rho * X[:, i] + np.sqrt(1.0 - rho * rho) * Z[:, j]
    X /= np.linalg.norm(X, axis=0)
    coef = rng.standard_normal(n) if coef is None else np.asarray(coef, dtype=np.float64)
    b = X @ coef + noise_std * rng.standard_normal(m) / np.sqrt(m)
    return linreg_solve(X, b)


def closed_form_pig_linreg(problem: LinRegProblem) -> np.ndarray:
    """Exact IG scores for g(w) = -||A(x*w) - b||^2: x* * (A^T b)."""
    return problem.x * (problem.A.T @ problem.b)


# ---------------------------------------------------------------------------
# Tabular
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlantedTabularSpec:
    n_features: int = 30
    k_informative: int = 5
    n_rows: int = 4096
    noise_std: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.k_informative <= self.n_features:
            raise ValueError("k_informative must lie in [0, n_features]")


def make_planted_tabular(spec: PlantedTabularSpec = PlantedTabularSpec(), batch_size: int = 64):
    """Binary labels from a random linear logit over the planted columns plus Gaussian noise.

    Returns ``(dataset, informative_indices)``.
    """
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n_rows, spec.n_features))
    informative = np.sort(rng.choice(spec.n_features, spec.k_informative, replace=False))
    w = rng.choice([-1.0, 1.0], size=spec.k_informative) * rng.uniform(1.0, 2.0, size=spec.k_informative)
    logit = X[:, informative] @ w + spec.noise_std * rng.standard_normal(spec.n_rows)
    if spec.k_informative == 0 and spec.noise_std == 0:
        y = rng.integers(0, 2, size=spec.n_rows)
    else:
        y = (logit > 0).astype(np.int64)
    return TabularDataset(X, y, batch_size), [int(i) for i in informative]


# ---------------------------------------------------------------------------
# Graphs
# ---------------------------------------------------------------------------


def make_sbm_graph(blocks: int = 2, sizes=60, p_in: float = 0.2, p_out: float = 0.02,
                   feature_dim: int = 8, seed: int = 0, feature_signal: float = 0.35,
                   train_fraction: float = 0.5):
    """Undirected stochastic block model with block-correlated Gaussian features."""
    from .graph import SparseGraph

    if not (0 <= p_in <= 1 and 0 <= p_out <= 1):
        raise ValueError("edge probabilities must lie in [0, 1]")
    sizes = [int(sizes)] * blocks if np.isscalar(sizes) else [int(s) for s in sizes]
    if blocks < 1 or len(sizes) != blocks or any(s < 1 for s in sizes):
        raise ValueError("every block needs at least one node")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(blocks), sizes)
    m = labels.shape[0]
    iu, ju = np.triu_indices(m, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.shape[0]) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    means = rng.standard_normal((blocks, feature_dim)) * feature_signal
    X = means[labels] + rng.standard_normal((m, feature_dim))
    perm = rng.permutation(m)
    cut = int(round(train_fraction * m))
    train = np.sort(perm[:cut])
    test = np.sort(perm[cut:])
    return SparseGraph(m, edges, X, labels, train, test)


# ---------------------------------------------------------------------------
# Small analytic instances
# ---------------------------------------------------------------------------


def weighted_coverage_objective(incidence, weights) -> DifferentiableObjective:
    """Multilinear extension of a weighted coverage function.

    ``incidence[i, u]`` is 1 when feature i covers item u; agrees with the coverage
    function at every 0/1 mask.
    """
    M = np.asarray(incidence, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    n = M.shape[0]

    def miss(s):
        return np.prod(1.0 - s[:, None] * M, axis=0)

    def value(s):
        return float(w @ (1.0 - miss(s)))

    def grad(s):
        g = np.empty(n)
        for i in range(n):
            t = s.copy()
            t[i] = 0.0
            g[i] = float((w * M[i]) @ miss(t))
        return g

    return function_objective(n, value, grad, "coverage")


def random_coverage_instance(n: int, seed: int, n_items: Optional[int] = None, density: float = 0.3):
    rng = np.random.default_rng(seed)
    n_items = n_items or 2 * n
    M = (rng.random((n, n_items)) < density).astype(np.float64)
    return weighted_coverage_objective(M, rng.uniform(0.1, 1.0, size=n_items))


def make_region_model(n_regions: int = 4, region_size: int = 4, weight: float = 2.0):
    """Single-layer softmax model whose class c reads only the features of region c.

    Returns ``(net, regions)``.
    """
    n = n_regions * region_size
    W = np.zeros((n, n_regions))
    regions = [list(range(c * region_size, (c + 1) * region_size)) for c in range(n_regions)]
    for c, reg in enumerate(regions):
        W[reg, c] = weight
    return SoftmaxNet([n, n_regions], [W], [np.zeros(n_regions)]), regions
