"""Rank computation and the per-negative exponent bias schedule.

The bias for a negative document compares its reciprocal rank against the
mean reciprocal rank of the positives:

    beta_i = alpha * (1 / rank(i) - mean_{j in positives} 1 / rank(j))

so negatives ranked above the positives' harmonic-average position get
beta_i > 0 (their loss weight grows), the rest get beta_i <= 0. The bias is
recomputed only every ``period`` steps; between updates it is a constant of
the loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np


@dataclass(frozen=True)
class BetaAssignment:
    """Exponent biases for one query's negatives plus the ranks behind them."""

    betas: dict[str, float]
    ranks: dict[str, int]
    harmonic_mean_reciprocal: float

    def beta_vector(self, negative_ids: Iterable[str]) -> np.ndarray:
        return np.array([self.betas[d] for d in negative_ids], dtype=float)


def compute_ranks(scores: Mapping[str, float]) -> dict[str, int]:
    """Rank 1 = highest score. Ties break by ascending doc id so that rank
    maps are deterministic."""
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return {doc_id: rank for rank, (doc_id, _) in enumerate(ordered, start=1)}


def compute_beta(
    ranks: Mapping[str, int],
    positive_ids: Iterable[str],
    negative_ids: Iterable[str],
    alpha: float,
) -> BetaAssignment:
    positive_ids = list(positive_ids)
    negative_ids = list(negative_ids)
    if not positive_ids:
        raise ValueError("need at least one positive document")
    if alpha < 0.0:
        raise ValueError("alpha must be non-negative")
    hmr = float(np.mean([1.0 / ranks[d] for d in positive_ids]))
    betas = {d: alpha * (1.0 / ranks[d] - hmr) for d in negative_ids}
    return BetaAssignment(betas=betas, ranks=dict(ranks), harmonic_mean_reciprocal=hmr)


def schedule_update(
    step: int,
    period: int,
    current: BetaAssignment,
    scores: Mapping[str, float],
    positive_ids: Iterable[str],
    negative_ids: Iterable[str],
    alpha: float,
) -> BetaAssignment:
    """Return a fresh assignment every ``period`` steps, otherwise ``current``.

    ``period=1`` recomputes every step (the continuous variant used for
    ablations).
    """
    if period < 1:
        raise ValueError("period must be >= 1")
    if step % period != 0:
        return current
    return compute_beta(compute_ranks(scores), positive_ids, negative_ids, alpha)


def topk_rank_approximation(
    pool_scores: Mapping[str, float],
    k: int = 50,
    universe: Iterable[str] | None = None,
) -> dict[str, int]:
    """Ranks restricted to a stored candidate pool.

    Only the pool's top-k entries receive true ranks; every other document
    (the pool's tail and anything in ``universe`` outside the pool) is
    assigned rank k+1.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ordered = sorted(pool_scores.items(), key=lambda kv: (-kv[1], kv[0]))
    ranks = {doc_id: rank for rank, (doc_id, _) in enumerate(ordered[:k], start=1)}
    for doc_id, _ in ordered[k:]:
        ranks[doc_id] = k + 1
    if universe is not None:
        for doc_id in universe:
            ranks.setdefault(doc_id, k + 1)
    return ranks
