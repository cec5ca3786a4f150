"""Domain types for query-level distillation instances, the top-one
probability transform, and the ranking metrics shared by every other module.

Conventions used throughout the package:

* ``ln`` / ``np.log`` is the natural logarithm and is what every loss uses.
* Entropy is reported in bits (base-2 log); the base only rescales.
* ``0 * log 0`` is taken to be 0 wherever a probability can vanish.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

PROB_SUM_TOL = 1e-9

# Floor applied to softmax outputs so probabilities stay strictly positive
# even when score gaps underflow exp().
_PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class DocumentEntry:
    """One document of a training query with its two model scores."""

    doc_id: str
    teacher_score: float
    student_score: float

    def __post_init__(self):
        if not (math.isfinite(self.teacher_score) and math.isfinite(self.student_score)):
            raise ValueError(f"invalid score for doc {self.doc_id!r}")


@dataclass(frozen=True)
class DistillationInstance:
    """One query's positive/negative documents with teacher and student scores.

    Invariants: at least one positive and one negative, distinct doc ids,
    finite scores.
    """

    query_id: str
    positives: tuple[DocumentEntry, ...]
    negatives: tuple[DocumentEntry, ...]

    def __post_init__(self):
        if len(self.positives) < 1 or len(self.negatives) < 1:
            raise ValueError(f"instance {self.query_id!r} needs >=1 positive and >=1 negative")
        ids = [d.doc_id for d in self.positives] + [d.doc_id for d in self.negatives]
        if len(set(ids)) != len(ids):
            raise ValueError(f"instance {self.query_id!r} has duplicate doc ids")

    @property
    def num_positives(self) -> int:
        return len(self.positives)

    @property
    def num_negatives(self) -> int:
        return len(self.negatives)

    @property
    def documents(self) -> tuple[DocumentEntry, ...]:
        """All documents, positives first. Every aligned vector in the
        package (probabilities, gradients) follows this order."""
        return self.positives + self.negatives

    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.documents]

    def teacher_scores(self) -> np.ndarray:
        return np.array([d.teacher_score for d in self.documents], dtype=float)

    def student_scores(self) -> np.ndarray:
        return np.array([d.student_score for d in self.documents], dtype=float)

    def positive_mask(self) -> np.ndarray:
        return np.array(
            [True] * self.num_positives + [False] * self.num_negatives, dtype=bool
        )


@dataclass(frozen=True)
class TopOneDistribution:
    """Top-one probabilities aligned to an instance's documents
    (positives first), with the positive/negative label mask."""

    probs: np.ndarray
    is_positive: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        mask = np.asarray(self.is_positive, dtype=bool)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "is_positive", mask)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a non-empty 1-d vector")
        if mask.shape != probs.shape:
            raise ValueError("label mask misaligned with probs")
        if not np.all(np.isfinite(probs)):
            raise ValueError("invalid score")
        if np.any(probs <= 0.0):
            raise ValueError("probabilities must be strictly positive")
        # Entries live in (0, 1]: the top entry rounds to exactly 1.0 once the
        # others drop below one ulp, so a strict < 1 is unattainable in
        # float64 for wide score gaps.
        if np.any(probs > 1.0):
            raise ValueError("probabilities must not exceed 1")
        if abs(float(probs.sum()) - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")

    @property
    def positive_probs(self) -> np.ndarray:
        return self.probs[self.is_positive]

    @property
    def negative_probs(self) -> np.ndarray:
        return self.probs[~self.is_positive]


@dataclass(frozen=True)
class CklHyperparams:
    """Hyperparameters of the contrastively-weighted KL loss.

    ``alpha <= gamma - 1`` keeps every negative-document exponent
    ``gamma - beta_i`` at or above 1.
    """

    gamma: float = 5.0
    alpha: float = 1.0
    beta_update_period: int = 2000
    prob_clamp_epsilon: float = 1e-12

    def __post_init__(self):
        if not math.isfinite(self.gamma) or self.gamma < 1.0:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if not math.isfinite(self.alpha) or not 0.0 <= self.alpha <= self.gamma - 1.0:
            raise ValueError(f"alpha must lie in [0, gamma-1], got {self.alpha}")
        if self.beta_update_period < 1:
            raise ValueError("beta_update_period must be a positive integer")
        if not 0.0 < self.prob_clamp_epsilon < 0.5:
            raise ValueError("prob_clamp_epsilon must be a small positive real")


@dataclass(frozen=True)
class RankingMetrics:
    """Per-query (or averaged) retrieval quality snapshot."""

    mrr_at_10: float
    ndcg_at_10: float
    positive_entropy: float
    margin_separation: float

    def __post_init__(self):
        if not 0.0 <= self.mrr_at_10 <= 1.0:
            raise ValueError(f"mrr_at_10 out of [0,1]: {self.mrr_at_10}")
        if not 0.0 <= self.ndcg_at_10 <= 1.0:
            raise ValueError(f"ndcg_at_10 out of [0,1]: {self.ndcg_at_10}")
        if self.positive_entropy < 0.0:
            raise ValueError(f"positive_entropy negative: {self.positive_entropy}")
        if not -1.0 <= self.margin_separation <= 1.0:
            raise ValueError(f"margin_separation out of [-1,1]: {self.margin_separation}")


def top_one_probability(
    scores, is_positive=None
) -> TopOneDistribution:
    """Softmax over per-document scores, shifted by the max for overflow safety.

    ``probs[i] = exp(scores[i]) / sum_j exp(scores[j])``. Outputs are floored
    at a denormal-safe constant and renormalized so that entries remain
    strictly positive for any finite score vector.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("empty instance")
    if not np.all(np.isfinite(s)):
        raise ValueError("invalid score")
    with np.errstate(over="ignore"):
        shifted = s - np.max(s)
    # Finite scores can still produce -inf after the shift (magnitude overflow);
    # exp maps that to 0 and the floor brings it back above zero.
    expd = np.exp(shifted)
    expd = np.maximum(expd, _PROB_FLOOR)
    probs = expd / expd.sum()
    if is_positive is None:
        is_positive = np.zeros(s.shape, dtype=bool)
    return TopOneDistribution(probs=probs, is_positive=np.asarray(is_positive, dtype=bool))


def student_distribution(instance: DistillationInstance) -> TopOneDistribution:
    return top_one_probability(instance.student_scores(), instance.positive_mask())


def teacher_distribution(instance: DistillationInstance) -> TopOneDistribution:
    return top_one_probability(instance.teacher_scores(), instance.positive_mask())


def positive_entropy(dist: TopOneDistribution) -> float:
    """Shannon entropy (bits) of the student's probabilities restricted to
    positive documents: ``-sum_{j in D+} q_j log2 q_j`` with 0 log 0 = 0."""
    q = dist.positive_probs
    if q.size == 0:
        raise ValueError("distribution has no positive entries")
    nz = q[q > 0.0]
    return float(-np.sum(nz * np.log2(nz)))


def margin_separation(dist: TopOneDistribution, k: int = 10) -> float:
    """Lowest positive probability minus highest negative probability within
    the top-k documents by probability.

    Degenerate top-k slices stay defined so training curves have a value at
    every step: no positive in the top-k gives ``-(max negative prob)``, no
    negative gives ``+(min positive prob)``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.argsort(-dist.probs, kind="stable")[:k]
    top_probs = dist.probs[order]
    top_mask = dist.is_positive[order]
    pos = top_probs[top_mask]
    neg = top_probs[~top_mask]
    if pos.size and neg.size:
        return float(pos.min() - neg.max())
    if pos.size:
        return float(pos.min())
    return float(-neg.max())


def mrr_at_k(relevance, k: int = 10) -> float:
    """Reciprocal rank of the first relevant item, truncated at k.

    ``relevance`` is the ranked list of relevance labels (truthy = relevant).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    for idx, rel in enumerate(relevance[:k], start=1):
        if rel:
            return 1.0 / idx
    return 0.0


def ndcg_at_k(gains, k: int = 10) -> float:
    """Standard NDCG with a log2 position discount, truncated at k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    g = np.asarray(gains, dtype=float)
    if g.size == 0:
        return 0.0
    discounts = 1.0 / np.log2(np.arange(2, min(k, g.size) + 2))
    dcg = float(np.sum(g[:k] * discounts))
    ideal = np.sort(g)[::-1]
    idcg = float(np.sum(ideal[:k] * discounts[: min(k, ideal.size)]))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


# ---------------------------------------------------------------------------
# JSON-lines serialization: one instance per line with fields
# query_id, positives[], negatives[], each document carrying
# doc_id / teacher_score / student_score.
# ---------------------------------------------------------------------------


def instance_to_dict(instance: DistillationInstance) -> dict:
    def docs(entries):
        return [
            {"doc_id": d.doc_id, "teacher_score": d.teacher_score, "student_score": d.student_score}
            for d in entries
        ]

    return {
        "query_id": instance.query_id,
        "positives": docs(instance.positives),
        "negatives": docs(instance.negatives),
    }


def instance_from_dict(payload: dict) -> DistillationInstance:
    try:
        query_id = payload["query_id"]
        positives = tuple(
            DocumentEntry(d["doc_id"], float(d["teacher_score"]), float(d["student_score"]))
            for d in payload["positives"]
        )
        negatives = tuple(
            DocumentEntry(d["doc_id"], float(d["teacher_score"]), float(d["student_score"]))
            for d in payload["negatives"]
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed instance record: {exc}") from exc
    return DistillationInstance(query_id=query_id, positives=positives, negatives=negatives)


def write_instances(path, instances) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_dict(inst), sort_keys=True) + "\n")


def read_instances(path) -> list[DistillationInstance]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            out.append(instance_from_dict(payload))
    return out
