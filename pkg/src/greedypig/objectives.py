"""Continuous set-function extensions g on [0,1]^n built from a model, plus G(S) = g(1_S).

All objectives are oriented for maximisation.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import DifferentiableObjective, PathSpec, interpolate, mask_from_selection
from .models import SoftmaxNet, TabularDataset, _backward, _forward, log_softmax, relu_gates, softmax

KL_CLAMP = 1e-12


def function_objective(n: int, value, grad, description: str = "") -> DifferentiableObjective:
    """Wrap plain ``value(s)`` and ``grad(s)`` callables."""
    return DifferentiableObjective(n, lambda s: (value(s), grad(s)), description, value_fn=value)


def modular_objective(weights) -> DifferentiableObjective:
    """g(s) = <weights, s>; its set function is modular."""
    w = np.asarray(weights, dtype=np.float64)
    return DifferentiableObjective(
        w.shape[0], lambda s: (float(w @ s), w.copy()), "modular", value_fn=lambda s: float(w @ s))


def _path(model: SoftmaxNet, x, baseline) -> PathSpec:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    x0 = np.zeros_like(x) if baseline is None else baseline
    path = PathSpec(x0, x)
    if path.n != model.n_inputs:
        from .core import DimensionError
        raise DimensionError("input vs model", model.n_inputs, path.n)
    return path


def _gate_hooks(model: SoftmaxNet, inputs, value_fn) -> dict:
    """ReLU-pattern hooks that let ``grad_check`` difference on a fixed linear piece."""

    def gates(s):
        return relu_gates(_forward(model, inputs(s))[2])

    return {"gates": gates, "gated_value": value_fn}


def topclass_objective(model: SoftmaxNet, x, baseline=None, target: Optional[int] = None):
    """g(s) = f_c(x0 + s*(x - x0)) for the class c predicted on the full input.

    ``target`` overrides the predicted class (used to explain a chosen class).
    """
    path = _path(model, x, baseline)
    full = softmax(_forward(model, interpolate(path, np.ones(path.n)))[0])
    c = int(np.argmax(full)) if target is None else int(target)
    if not 0 <= c < model.n_classes:
        raise IndexError(f"target class {c} out of range")
    delta = path.delta

    def fn(s):
        logits, acts, pres = _forward(model, interpolate(path, s))
        p = softmax(logits)
        dlogits = -p[c] * p
        dlogits[c] += p[c]
        dx = _backward(model, acts, pres, dlogits)[0]
        return float(p[c]), dx * delta

    def value_fn(s, gates=None):
        return float(softmax(_forward(model, interpolate(path, s), gates)[0])[c])

    return DifferentiableObjective(path.n, fn, f"topclass(c={c})", value_fn=value_fn,
                                   meta={"target_class": c, "path": path,
                                         **_gate_hooks(model, lambda s: interpolate(path, s), value_fn)})


def kl_objective(model: SoftmaxNet, x, baseline=None):
    """g(s) = sum_c f_c(x) log f_c(x_s); the KL curve metric is ``meta['kl_offset'] - g(s)``."""
    path = _path(model, x, baseline)
    delta = path.delta
    log_floor = np.log(KL_CLAMP)
    p = softmax(_forward(model, interpolate(path, np.ones(path.n)))[0])

    def fn(s):
        logits, acts, pres = _forward(model, interpolate(path, s))
        lq = log_softmax(logits)
        live = lq > log_floor
        value = float(p @ np.where(live, lq, log_floor))
        w = np.where(live, p, 0.0)
        dlogits = w - np.exp(lq) * w.sum()
        dx = _backward(model, acts, pres, dlogits)[0]
        return value, dx * delta

    def value_fn(s, gates=None):
        lq = log_softmax(_forward(model, interpolate(path, s), gates)[0])
        return float(p @ np.maximum(lq, log_floor))

    offset = value_fn(np.ones(path.n))
    return DifferentiableObjective(path.n, fn, "kl", value_fn=value_fn,
                                   meta={"kl_offset": offset, "path": path, "reference": p,
                                         **_gate_hooks(model, lambda s: interpolate(path, s), value_fn)})


def kl_divergence(objective: DifferentiableObjective, mask) -> float:
    """KL(f(x) || f(x_s)) for an objective built by ``kl_objective``."""
    return objective.meta["kl_offset"] - objective.value(mask)


def posthoc_objective(model: SoftmaxNet, dataset: TabularDataset, baseline_row=None, rows=None):
    """Mean log-likelihood of the true labels with every row moved along its own path.

    g(s) = mean_r log f_{y_r}(x0 + s*(x_r - x0)).
    """
    X = dataset.rows if rows is None else dataset.rows[np.asarray(rows)]
    y = np.asarray(dataset.labels if rows is None else dataset.labels[np.asarray(rows)], dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("posthoc objective needs at least one row")
    n = X.shape[1]
    if n != model.n_inputs:
        from .core import DimensionError
        raise DimensionError("dataset columns vs model", model.n_inputs, n)
    x0 = np.zeros(n) if baseline_row is None else np.asarray(baseline_row, dtype=np.float64)
    D = X - x0
    m = X.shape[0]
    idx = np.arange(m)

    def fn(s):
        logits, acts, pres = _forward(model, x0 + s * D)
        lp = log_softmax(logits)
        value = float(np.mean(lp[idx, y]))
        d = -np.exp(lp)
        d[idx, y] += 1.0
        d /= m
        dX = _backward(model, acts, pres, d)[0]
        return value, np.sum(dX * D, axis=0)

    def value_fn(s, gates=None):
        lp = log_softmax(_forward(model, x0 + s * D, gates)[0])
        return float(np.mean(lp[idx, y]))

    return DifferentiableObjective(n, fn, f"posthoc(rows={m})", value_fn=value_fn,
                                   meta=_gate_hooks(model, lambda s: x0 + s * D, value_fn))


class MinibatchObjective(DifferentiableObjective):
    """Full-data objective whose k-th gradient evaluation uses the k-th part.

    Values (for set-function evaluation) always come from the full objective.
    """

    def __init__(self, full: DifferentiableObjective, parts: list):
        super().__init__(full.n, full._fn, full.description + " [minibatch]", full._value_fn, full.meta)
        if not parts:
            raise ValueError("need at least one minibatch part")
        self.parts = list(parts)

    def for_evaluation(self, k: int) -> DifferentiableObjective:
        return self.parts[k % len(self.parts)]


def minibatch_posthoc_objective(model, dataset: TabularDataset, schedule, baseline_row=None):
    """Post-hoc objective whose gradient evaluations follow a minibatch schedule."""
    full = posthoc_objective(model, dataset, baseline_row)
    parts = [posthoc_objective(model, dataset, baseline_row, rows=dataset.batch_rows(group))
             for group in schedule.assignment]
    return MinibatchObjective(full, parts)


class SetFunctionView:
    """The set function G(S) = g(1_S) induced by an objective.

    Anything with ``n`` and ``value(mask)`` can back a view.
    """

    def __init__(self, objective, cache: bool = True):
        self.objective = objective
        self.n = objective.n
        self._cache = {} if cache else None

    def __call__(self, S) -> float:
        return eval_set(self, S)

    def __repr__(self):
        return f"SetFunctionView({self.objective!r})"


def eval_set(view: SetFunctionView, S) -> float:
    key = frozenset(int(i) for i in S)
    if view._cache is not None and key in view._cache:
        return view._cache[key]
    v = float(view.objective.value(mask_from_selection(sorted(key), view.n)))
    if view._cache is not None:
        view._cache[key] = v
    return v
