"""One-shot integrated gradients and the adaptive Greedy PIG family."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    AlgoConfig,
    AttributionResult,
    RoundRecord,
    check_partition,
    rank_indices,
)

logger = logging.getLogger(__name__)


class OracleError(RuntimeError):
    """A gradient evaluation failed; ``step`` is the path step index."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        super().__init__(f"gradient oracle failed at path step {step}: {cause}")


def midpoints(T: int) -> np.ndarray:
    if T < 1:
        raise ValueError("number of steps T must be at least 1")
    return (np.arange(T) + 0.5) / T


def _integrate(objective, base, free, ts, eval_start: int, threads: int = 1) -> np.ndarray:
    """Mean gradient over the points ``base + t * free`` for t in ``ts``.

    Gradients are summed in step order whatever the thread count.
    """

    def one(k):
        try:
            return objective.for_evaluation(eval_start + k).gradient(base + ts[k] * free)
        except Exception as exc:  # noqa: BLE001 - re-raised with the step attached
            raise OracleError(k, exc) from exc

    if threads > 1 and len(ts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            grads = list(pool.map(one, range(len(ts))))
    else:
        grads = [one(k) for k in range(len(ts))]
    total = np.zeros(objective.n)
    for g in grads:
        total = total + g
    return total / len(ts)


def integrated_gradients(objective, T: int = 32, ranking_mode: str = "absolute", threads: int = 1):
    """Midpoint-rule estimate of the integral of grad g along the diagonal of the cube."""
    ts = midpoints(T)
    scores = _integrate(objective, np.zeros(objective.n), np.ones(objective.n), ts, 0, threads)
    order = rank_indices(scores, ranking_mode)
    return AttributionResult(
        scores,
        order,
        [RoundRecord(0, scores.copy(), list(order), objective.n)],
        {"algorithm": "ig", "steps": T, "ranking_mode": ranking_mode},
        {"gradient_evaluations": T},
    )


def _greedy(objective, config: AlgoConfig, ts, name: str, groups=None, threads: int = 1):
    n = objective.n
    selected = np.zeros(n, dtype=bool)
    scores = np.zeros(n)
    order, rounds = [], []
    evals = 0
    negatives = 0
    group_order = []
    if groups is not None:
        check_partition(groups, n)
        groups = [list(g) for g in groups]
        group_taken = np.zeros(len(groups), dtype=bool)
    for r in range(config.rounds):
        free_idx = np.flatnonzero(~selected)
        if free_idx.size == 0:
            break
        base = selected.astype(np.float64)
        free = (~selected).astype(np.float64)
        grad = _integrate(objective, base, free, ts, evals, threads)
        evals += len(ts)
        cand = np.where(selected, 0.0, grad)
        if groups is None:
            chosen = rank_indices(cand, config.ranking_mode, free_idx)[: config.per_round]
        else:
            open_groups = np.flatnonzero(~group_taken)
            gscore = np.zeros(len(groups))
            for j in open_groups:
                gscore[j] = cand[groups[j]].sum()
            picked = rank_indices(gscore, config.ranking_mode, open_groups)[: config.per_round]
            group_taken[picked] = True
            group_order.extend(picked)
            chosen = []
            for j in picked:
                chosen.extend(rank_indices(cand, config.ranking_mode, sorted(groups[j])))
        chosen = [int(i) for i in chosen]
        scores[chosen] += cand[chosen]
        selected[chosen] = True
        negatives += int(np.sum(cand[chosen] < 0.0))
        order.extend(chosen)
        rounds.append(RoundRecord(r, cand, chosen, int(selected.sum())))
    if negatives:
        logger.warning("%s selected %d feature(s) with negative attribution", name, negatives)
    cfg = {"algorithm": name, **config.to_dict()}
    if name == "sg":
        cfg["steps"] = 1
    diag = {
        "gradient_evaluations": evals,
        "rounds_run": len(rounds),
        "negative_selected": negatives,
        "budget": config.rounds * len(ts),
    }
    if groups is not None:
        diag["group_order"] = [int(j) for j in group_order]
    return AttributionResult(scores, order, rounds, cfg, diag)


def greedy_pig(objective, config: AlgoConfig, threads: int = 1) -> AttributionResult:
    """Adaptive PIG: each round integrates the free coordinates with the selected ones held at 1,
    then freezes the top-z of the round's scores."""
    return _greedy(objective, config, midpoints(config.steps), "greedy-pig", threads=threads)


def sequential_gradient(objective, rounds: int, per_round: int, ranking_mode: str = "signed",
                        threads: int = 1) -> AttributionResult:
    """Greedy PIG with each round's integral replaced by the gradient at 1_S."""
    config = AlgoConfig(rounds=rounds, per_round=per_round, steps=1, ranking_mode=ranking_mode)
    return _greedy(objective, config, np.zeros(1), "sg", threads=threads)


def greedy_pig_groups(objective, config: AlgoConfig, threads: int = 1) -> AttributionResult:
    """Greedy PIG over blocks: each round selects the top-z groups by summed round score.

    Scores and order are reported per feature; ``diagnostics['group_order']`` lists groups.
    """
    if config.group_spec is None:
        raise ValueError("config.group_spec is required for group selection")
    return _greedy(objective, config, midpoints(config.steps), "greedy-pig-groups",
                   groups=config.group_spec, threads=threads)


@dataclass(frozen=True)
class MinibatchSchedule:
    n_batches: int
    g_evals: int
    assignment: tuple

    @property
    def sizes(self) -> list:
        return [len(g) for g in self.assignment]


def build_minibatch_schedule(n_batches: int, g_evals: int, seed: int = 0) -> MinibatchSchedule:
    """Shuffle batch indices and split them into ``g_evals`` balanced contiguous groups."""
    if g_evals < 1:
        raise ValueError("need at least one gradient evaluation")
    if g_evals > n_batches:
        raise ValueError(f"{g_evals} gradient evaluations but only {n_batches} batches")
    perm = np.random.default_rng(seed).permutation(n_batches)
    groups = tuple(tuple(int(b) for b in part) for part in np.array_split(perm, g_evals))
    return MinibatchSchedule(n_batches, g_evals, groups)
