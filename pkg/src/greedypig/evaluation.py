"""Subset-selection evaluation: quality curves, subset oracles, the PIG/marginal-gain bound,
and the pointing game."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attribution import integrated_gradients
from .core import check_partition, rank_indices
from .objectives import SetFunctionView, eval_set

MAX_BRUTE_FORCE_N = 20


class CapacityError(ValueError):
    pass


@dataclass
class QualityScore:
    """G at a top-k prefix next to the best k-subset value.

    ``flagged`` is set when the optimum is not positive, in which case the
    ratio is undefined and reported as nan.
    """

    value: float
    optimum: float
    flagged: bool

    @property
    def ratio(self) -> float:
        return float("nan") if self.flagged else self.value / self.optimum


def attribution_quality(view: SetFunctionView, order: Sequence[int], k: int) -> QualityScore:
    if not 0 <= k <= view.n:
        raise ValueError(f"k={k} outside [0, {view.n}]")
    if len(order) < k:
        raise ValueError(f"order has {len(order)} entries, fewer than k={k}")
    value = eval_set(view, order[:k])
    _, best = brute_force_best_subset(view, k)
    return QualityScore(value, best, best <= 0.0)


def brute_force_best_subset(view: SetFunctionView, k: int):
    """Exhaustive max over |S| = k; ties go to the lexicographically smallest set."""
    n = view.n
    if n > MAX_BRUTE_FORCE_N:
        raise CapacityError(f"n={n} exceeds {MAX_BRUTE_FORCE_N}; use greedy_subset instead")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    best_set, best = None, -math.inf
    for S in itertools.combinations(range(n), k):
        v = eval_set(view, S)
        if v > best:
            best_set, best = S, v
    return set(best_set), best


def greedy_subset(view: SetFunctionView, k: int) -> list:
    """Classical greedy on the set function: k rounds of argmax marginal gain."""
    if not 0 <= k <= view.n:
        raise ValueError(f"k={k} outside [0, {view.n}]")
    chosen = []
    for _ in range(k):
        best_i, best = -1, -math.inf
        for i in range(view.n):
            if i in chosen:
                continue
            v = eval_set(view, chosen + [i])
            if v > best:
                best_i, best = i, v
        chosen.append(best_i)
    return chosen


def marginal_gains(view: SetFunctionView) -> np.ndarray:
    empty = eval_set(view, ())
    return np.array([eval_set(view, (i,)) - empty for i in range(view.n)])


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


@dataclass
class QualityCurve:
    ks: np.ndarray
    values: np.ndarray
    n: int
    metric: str = "raw"
    optima: Optional[np.ndarray] = None
    flagged: Optional[np.ndarray] = None

    @property
    def fractions(self) -> np.ndarray:
        return self.ks / self.n

    @property
    def points(self) -> list:
        return list(zip(self.ks.tolist(), self.values.tolist()))

    def auc(self) -> float:
        return trapezoid(self.fractions, self.values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["k", "fraction", "value"]
            if self.optima is not None:
                header += ["optimum", "flagged"]
            w.writerow(header)
            for j, k in enumerate(self.ks):
                row = [int(k), repr(float(k / self.n)), repr(float(self.values[j]))]
                if self.optima is not None:
                    row += [repr(float(self.optima[j])), int(bool(self.flagged[j]))]
                w.writerow(row)

    def summary(self) -> dict:
        return {"auc": self.auc(), "n": int(self.n), "metric": self.metric}


def trapezoid(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def default_k_grid(n: int) -> np.ndarray:
    if n <= 64:
        return np.arange(n + 1)
    return np.unique(np.round(np.linspace(0, n, 100)).astype(np.int64))


def curve_and_auc(view: SetFunctionView, order: Sequence[int], metric: str = "raw",
                  k_grid=None, normalize: bool = False):
    """Metric at each top-k prefix of ``order`` and the trapezoid area over k/n.

    ``metric`` is ``raw`` (G itself) or ``kl`` (KL divergence for a ``kl_objective``;
    lower is better).
    """
    n = view.n
    if metric not in ("raw", "kl"):
        raise ValueError(f"unknown metric {metric!r}")
    ks = default_k_grid(n) if k_grid is None else np.asarray(sorted(set(int(k) for k in k_grid)))
    if ks.size and (ks[0] < 0 or ks[-1] > n):
        raise ValueError("k grid must lie in [0, n]")
    if ks.size and ks[-1] > len(order):
        raise ValueError(f"order has {len(order)} entries but the k grid reaches {ks[-1]}")
    vals = np.array([eval_set(view, order[:k]) for k in ks])
    if metric == "kl":
        vals = view.objective.meta["kl_offset"] - vals
    optima = flagged = None
    if normalize:
        optima = np.array([brute_force_best_subset(view, int(k))[1] for k in ks])
        flagged = optima <= 0.0
    curve = QualityCurve(ks, vals, n, metric, optima, flagged)
    return curve, curve.auc()


def median_curve(curves: Sequence[QualityCurve]) -> QualityCurve:
    """Per-k median across examples that share a k grid and n."""
    if not curves:
        raise ValueError("no curves to aggregate")
    ks = curves[0].ks
    for c in curves[1:]:
        if not np.array_equal(c.ks, ks) or c.n != curves[0].n:
            raise ValueError("curves must share k grid and n")
    vals = np.median(np.stack([c.values for c in curves]), axis=0)
    return QualityCurve(ks.copy(), vals, curves[0].n, curves[0].metric)


def write_auc_summary(curve: QualityCurve, path) -> None:
    with open(path, "w") as fh:
        json.dump(curve.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# PIG versus marginal gains
# ---------------------------------------------------------------------------


@dataclass
class HessianEstimate:
    matrix: np.ndarray
    step: float

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)))

    def symmetric(self) -> np.ndarray:
        return 0.5 * (self.matrix + self.matrix.T)


def estimate_hessian(objective, w, step: float = 1e-4) -> HessianEstimate:
    """Central differences of the gradient, clipped to the cube (one-sided at faces)."""
    w = np.asarray(w, dtype=np.float64)
    n = objective.n
    H = np.empty((n, n))
    for j in range(n):
        wp = w.copy()
        wm = w.copy()
        wp[j] = min(1.0, w[j] + step)
        wm[j] = max(0.0, w[j] - step)
        H[:, j] = (objective.gradient(wp) - objective.gradient(wm)) / (wp[j] - wm[j])
    return HessianEstimate(H, step)


@dataclass
class BoundCheck:
    gaps: np.ndarray
    bound: float
    ig: np.ndarray
    marginal: np.ndarray
    tolerance: float
    sample_points: int = 0
    kink_points: int = 0
    worst_point: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def holds(self) -> bool:
        return bool(np.all(self.gaps <= self.bound + self.tolerance))


def bound_sample_points(n: int, n_random: int = 50, seed: int = 0) -> np.ndarray:
    """{0, 1/2, 1}^n grid (3^min(n,6) points) plus uniform interior points."""
    rng = np.random.default_rng(seed)
    if n <= 6:
        grid = np.array(list(itertools.product((0.0, 0.5, 1.0), repeat=n)))
    else:
        grid = rng.choice([0.0, 0.5, 1.0], size=(3 ** 6, n))
    return np.vstack([grid, rng.uniform(0.0, 1.0, size=(n_random, n))])


def _activation_boundaries(objective, pts, limit: int, iters: int = 50) -> list:
    """Points on ReLU activation boundaries, found by bisecting between consecutive
    sample points whose on/off patterns differ."""
    gates = objective.meta.get("gates")
    if gates is None:
        return []
    found = []
    patterns = [gates(w) for w in pts]
    for a, b, pa, pb in zip(pts[:-1], pts[1:], patterns[:-1], patterns[1:]):
        if len(found) >= limit:
            break
        if all(np.array_equal(x, y) for x, y in zip(pa, pb)):
            continue
        lo, hi = a.copy(), b.copy()
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if all(np.array_equal(x, y) for x, y in zip(gates(mid), pa)):
                lo = mid
            else:
                hi = mid
        found.append(0.5 * (lo + hi))
    return found


def pig_marginal_bound_check(objective, T: int = 1024, hessian_step: float = 1e-4,
                             n_random: int = 50, seed: int = 0, tolerance: float = 1e-4,
                             max_kinks: int = 64) -> BoundCheck:
    """Compare |IG_i - (g(1_i) - g(0))| with half the largest off-diagonal Hessian row sum.

    For ReLU objectives the sup also visits activation boundaries between sample
    points. The gradient jumps there, so the estimate grows like 1/hessian_step and the
    bound becomes vacuous, which is the honest answer for a non-smooth g.
    """
    n = objective.n
    ig = integrated_gradients(objective, T).scores
    view = SetFunctionView(objective)
    gains = marginal_gains(view)
    gaps = np.abs(ig - gains)
    best, worst = 0.0, None
    pts = bound_sample_points(n, n_random, seed)
    kinks = _activation_boundaries(objective, pts, max_kinks)
    if kinks:
        pts = np.vstack([pts, np.array(kinks)])
    for w in pts:
        H = estimate_hessian(objective, w, hessian_step).symmetric()
        off = np.abs(H.sum(axis=1) - np.diag(H))
        if off.max() > best:
            best, worst = float(off.max()), w
    return BoundCheck(gaps, 0.5 * best, ig, gains, tolerance, len(pts), len(kinks), worst)


# ---------------------------------------------------------------------------
# Pointing game
# ---------------------------------------------------------------------------


def pointing_accuracy(cases, top_k: int) -> float:
    """Fraction of cases whose top-k |score| features lie strictly more than half in the target region.

    Each case is ``(result, regions, target)`` where ``regions`` is a list of index lists
    partitioning the features and ``target`` indexes into it.
    """
    cases = list(cases)
    if not cases:
        raise ValueError("pointing accuracy is undefined for an empty case list")
    hits = 0
    for result, regions, target in cases:
        n = result.n
        if not 1 <= top_k <= n:
            raise ValueError(f"top_k={top_k} outside [1, {n}]")
        check_partition(regions, n)
        top = rank_indices(result.scores, "absolute")[:top_k]
        inside = len(set(top) & set(int(i) for i in regions[target]))
        if 2 * inside > top_k:
            hits += 1
    return hits / len(cases)
