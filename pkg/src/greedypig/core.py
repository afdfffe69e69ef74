"""Masks, paths, selections and result containers shared by every algorithm."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

RANKING_MODES = ("signed", "absolute")


class DimensionError(ValueError):
    """Two arrays that must agree in length do not."""

    def __init__(self, what: str, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected length {expected}, got length {got}")


class DomainError(ValueError):
    """A value lies outside the set on which an operation is defined."""


def feature_mask(values, n: Optional[int] = None) -> np.ndarray:
    """Validate ``values`` as a point of the unit hypercube and return a read-only copy."""
    s = np.array(values, dtype=np.float64).reshape(-1)
    if n is not None and s.shape[0] != n:
        raise DimensionError("mask", n, s.shape[0])
    if not np.all(np.isfinite(s)) or np.any(s < 0.0) or np.any(s > 1.0):
        bad = np.flatnonzero(~((s >= 0.0) & (s <= 1.0)))
        raise DomainError(f"mask entries must lie in [0, 1]; offending indices {bad.tolist()[:10]}")
    s.setflags(write=False)
    return s


@dataclass(frozen=True)
class PathSpec:
    """Straight line from ``baseline`` to ``input``."""

    baseline: np.ndarray
    input: np.ndarray

    def __post_init__(self):
        x0 = np.array(self.baseline, dtype=np.float64).reshape(-1)
        x = np.array(self.input, dtype=np.float64).reshape(-1)
        if x0.shape != x.shape:
            raise DimensionError("baseline vs input", x.shape[0], x0.shape[0])
        x0.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "baseline", x0)
        object.__setattr__(self, "input", x)

    @classmethod
    def from_zero(cls, x) -> "PathSpec":
        x = np.asarray(x, dtype=np.float64)
        return cls(np.zeros_like(x), x)

    @property
    def n(self) -> int:
        return self.input.shape[0]

    @property
    def delta(self) -> np.ndarray:
        return self.input - self.baseline


def interpolate(path: PathSpec, mask) -> np.ndarray:
    """Return ``(1 - mask) * baseline + mask * input``.

    This form reproduces the baseline and the input bit-for-bit at the endpoints.
    """
    s = np.asarray(mask, dtype=np.float64).reshape(-1)
    if s.shape[0] != path.n:
        raise DimensionError("mask vs path", path.n, s.shape[0])
    return (1.0 - s) * path.baseline + s * path.input


def line_point(path: PathSpec, t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"path parameter t={t} outside [0, 1]")
    return interpolate(path, np.full(path.n, float(t)))


@dataclass(frozen=True)
class SelectionState:
    """Ordered set of selected features."""

    selected: tuple = ()

    def __post_init__(self):
        sel = tuple(int(i) for i in self.selected)
        if len(set(sel)) != len(sel):
            dup = sorted({i for i in sel if sel.count(i) > 1})
            raise ValueError(f"duplicate indices in selection: {dup}")
        if any(i < 0 for i in sel):
            raise IndexError(f"negative index in selection: {sel}")
        object.__setattr__(self, "selected", sel)

    def add(self, indices: Iterable[int]) -> "SelectionState":
        return SelectionState(self.selected + tuple(int(i) for i in indices))

    def __len__(self):
        return len(self.selected)

    def __contains__(self, i):
        return i in self.selected


def mask_from_selection(state, n: int) -> np.ndarray:
    """Indicator vector of the selected set."""
    if not isinstance(state, SelectionState):
        state = SelectionState(tuple(state))
    out = np.zeros(n)
    for i in state.selected:
        if i >= n:
            raise IndexError(f"feature index {i} out of range for n={n}")
        out[i] = 1.0
    return out


def rank_indices(scores, mode: str = "signed", candidates: Optional[Sequence[int]] = None) -> list:
    """Indices sorted by descending key; ties go to the lower index."""
    if mode not in RANKING_MODES:
        raise ValueError(f"ranking mode must be one of {RANKING_MODES}, got {mode!r}")
    scores = np.asarray(scores, dtype=np.float64)
    key = np.abs(scores) if mode == "absolute" else scores
    idx = np.arange(scores.shape[0]) if candidates is None else np.asarray(candidates, dtype=np.int64)
    if idx.size == 0:
        return []
    # lexsort: last key is primary
    order = np.lexsort((idx, -key[idx]))
    return idx[order].tolist()


@dataclass(frozen=True)
class AlgoConfig:
    rounds: int = 1
    per_round: int = 1
    steps: int = 32
    rng_seed: int = 0
    ranking_mode: str = "signed"
    group_spec: Optional[tuple] = None

    def __post_init__(self):
        if self.rounds < 1 or self.per_round < 1:
            raise ValueError("rounds and per_round must be positive")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.ranking_mode not in RANKING_MODES:
            raise ValueError(f"unknown ranking mode {self.ranking_mode!r}")
        if self.group_spec is not None:
            groups = tuple(tuple(int(i) for i in g) for g in self.group_spec)
            object.__setattr__(self, "group_spec", groups)

    def to_dict(self) -> dict:
        d = {
            "rounds": self.rounds,
            "per_round": self.per_round,
            "steps": self.steps,
            "rng_seed": self.rng_seed,
            "ranking_mode": self.ranking_mode,
        }
        if self.group_spec is not None:
            d["group_spec"] = [list(g) for g in self.group_spec]
        return d


def check_partition(groups, n: int) -> None:
    """Raise if ``groups`` is not an exact partition of range(n)."""
    seen = np.zeros(n, dtype=np.int64)
    out_of_range = []
    for g in groups:
        for i in g:
            if 0 <= i < n:
                seen[i] += 1
            else:
                out_of_range.append(i)
    uncovered = np.flatnonzero(seen == 0).tolist()
    duplicated = np.flatnonzero(seen > 1).tolist()
    if uncovered or duplicated or out_of_range:
        raise ValueError(
            f"groups do not partition [0, {n}): uncovered={uncovered}, "
            f"duplicated={duplicated}, out_of_range={out_of_range}"
        )


@dataclass
class RoundRecord:
    round: int
    candidate_scores: np.ndarray
    chosen: list
    selected_size: int

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "chosen": [int(i) for i in self.chosen],
            "candidate_scores": [float(v) for v in self.candidate_scores],
            "selected_size": self.selected_size,
        }


@dataclass
class AttributionResult:
    scores: np.ndarray
    order: list
    rounds: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.order = [int(i) for i in self.order]
        if len(set(self.order)) != len(self.order):
            raise ValueError("order contains duplicate indices")

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def top(self, k: int) -> list:
        return self.order[:k]

    def to_dict(self) -> dict:
        return {
            "scores": [float(v) for v in self.scores],
            "order": list(self.order),
            "rounds": [r.to_dict() for r in self.rounds],
            "config": dict(self.config),
            "diagnostics": dict(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "AttributionResult":
        rounds = [
            RoundRecord(
                r["round"],
                np.asarray(r["candidate_scores"], dtype=np.float64),
                list(r["chosen"]),
                r.get("selected_size", 0),
            )
            for r in d.get("rounds", [])
        ]
        return cls(d["scores"], d["order"], rounds, d.get("config", {}), d.get("diagnostics", {}))


class DifferentiableObjective:
    """Value-and-gradient oracle for a function on the unit hypercube.

    ``fn(mask) -> (value, gradient)`` must be pure. ``value_fn`` is an optional
    cheaper value-only path; it must agree exactly with ``fn``.
    """

    def __init__(self, n: int, fn, description: str = "", value_fn=None, meta: Optional[dict] = None):
        if n < 1:
            raise ValueError("objective dimension must be positive")
        self.n = int(n)
        self._fn = fn
        self._value_fn = value_fn
        self.description = description
        self.meta = dict(meta or {})

    def __repr__(self):
        return f"DifferentiableObjective(n={self.n}, {self.description!r})"

    def value_and_gradient(self, mask):
        s = feature_mask(mask, self.n)
        v, g = self._fn(s)
        g = np.asarray(g, dtype=np.float64).reshape(-1)
        if g.shape[0] != self.n:
            raise DimensionError("gradient", self.n, g.shape[0])
        return float(v), g

    def value(self, mask) -> float:
        s = feature_mask(mask, self.n)
        if self._value_fn is not None:
            return float(self._value_fn(s))
        return float(self._fn(s)[0])

    def gradient(self, mask) -> np.ndarray:
        return self.value_and_gradient(mask)[1]

    __call__ = value

    def for_evaluation(self, k: int) -> "DifferentiableObjective":
        """Oracle to use for the ``k``-th gradient evaluation of a run."""
        return self
