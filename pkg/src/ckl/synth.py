"""Synthetic ranking-distillation benchmark data.

Each query gets its own latent relevance direction (a jittered copy of one
dataset-wide direction, so a linear scorer can fit all queries at once).
Positive documents receive latent scores in [1, 2] and negatives in
[-1, 0.5], guaranteeing separation under a noise-free teacher. Teacher
scores are the latent scores plus Gaussian noise; on a controllable fraction
of queries the teacher is adversarially corrupted by reassigning its scores
so every negative outranks every positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DistillationInstance, DocumentEntry


@dataclass(frozen=True)
class SynthConfig:
    num_queries: int = 64
    num_eval_queries: int = 16
    num_positives: int = 2
    num_negatives: int = 8
    feature_dim: int = 16
    teacher_noise_sigma: float = 0.5
    teacher_corruption_rate: float = 0.2
    direction_jitter: float = 0.25
    feature_noise_sigma: float = 0.3
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_queries < 1 or self.num_eval_queries < 0:
            raise ValueError("need at least one training query")
        if self.num_positives < 1 or self.num_negatives < 1:
            raise ValueError("each query needs >=1 positive and >=1 negative")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.teacher_noise_sigma < 0.0:
            raise ValueError("teacher_noise_sigma must be >= 0")
        if not 0.0 <= self.teacher_corruption_rate <= 1.0:
            raise ValueError("teacher_corruption_rate must lie in [0, 1]")


@dataclass(frozen=True)
class SynthQuery:
    query_id: str
    features: np.ndarray  # (s+m, dim), positives first
    teacher_scores: np.ndarray  # (s+m,)
    num_positives: int
    corrupted: bool

    @property
    def num_docs(self) -> int:
        return self.features.shape[0]

    def doc_ids(self) -> list[str]:
        s = self.num_positives
        return [
            f"{self.query_id}:p{i}" if i < s else f"{self.query_id}:n{i - s}"
            for i in range(self.num_docs)
        ]

    def positive_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_docs, dtype=bool)
        mask[: self.num_positives] = True
        return mask


@dataclass(frozen=True)
class SynthDataset:
    config: SynthConfig
    train: tuple[SynthQuery, ...]
    eval: tuple[SynthQuery, ...]


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _corrupt_teacher(scores: np.ndarray, s: int) -> np.ndarray:
    """Reassign the query's teacher scores so negatives take the top ones.

    The score multiset is preserved; within each group the original order is
    kept. The resulting teacher ranks every negative above every positive.
    """
    ordered = np.sort(scores)[::-1]
    out = np.empty_like(scores)
    neg_order = np.argsort(-scores[s:], kind="stable")
    pos_order = np.argsort(-scores[:s], kind="stable")
    out[s + neg_order] = ordered[: scores.size - s]
    out[pos_order] = ordered[scores.size - s :]
    return out


def _make_queries(
    cfg: SynthConfig,
    rng: np.random.Generator,
    count: int,
    prefix: str,
    base_direction: np.ndarray,
):
    s, m, d = cfg.num_positives, cfg.num_negatives, cfg.feature_dim
    queries = []
    for qi in range(count):
        direction = _unit(base_direction + cfg.direction_jitter * rng.normal(size=d))
        latent = np.concatenate(
            [rng.uniform(1.0, 2.0, size=s), rng.uniform(-1.0, 0.5, size=m)]
        )
        noise = rng.normal(size=(s + m, d)) * cfg.feature_noise_sigma
        noise -= np.outer(noise @ direction, direction)  # keep latent scores exact
        features = latent[:, None] * direction[None, :] + noise
        teacher = latent + cfg.teacher_noise_sigma * rng.normal(size=s + m)
        queries.append(
            SynthQuery(
                query_id=f"{prefix}{qi:04d}",
                features=features,
                teacher_scores=teacher,
                num_positives=s,
                corrupted=False,
            )
        )
    n_corrupt = int(round(cfg.teacher_corruption_rate * count))
    for qi in rng.choice(count, size=n_corrupt, replace=False):
        q = queries[qi]
        queries[qi] = SynthQuery(
            query_id=q.query_id,
            features=q.features,
            teacher_scores=_corrupt_teacher(q.teacher_scores, s),
            num_positives=s,
            corrupted=True,
        )
    return tuple(queries)


def generate_dataset(cfg: SynthConfig) -> SynthDataset:
    """Deterministic under the config's seed: identical configs produce
    byte-identical datasets."""
    rng = np.random.default_rng(cfg.rng_seed)
    base_direction = _unit(rng.normal(size=cfg.feature_dim))
    train = _make_queries(cfg, rng, cfg.num_queries, "train", base_direction)
    eval_queries = _make_queries(cfg, rng, cfg.num_eval_queries, "eval", base_direction)
    return SynthDataset(config=cfg, train=train, eval=eval_queries)


@dataclass
class StudentModel:
    """Linear scorer: score = weights . features."""

    weights: np.ndarray
    learning_rate: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("student weights must be finite")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")

    def scores(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights


def init_weights(dim: int, seed: int, scale: float = 0.1) -> np.ndarray:
    return np.random.default_rng(seed).normal(0.0, scale, size=dim)


def to_instance(query: SynthQuery, weights: np.ndarray) -> DistillationInstance:
    student = query.features @ weights
    ids = query.doc_ids()
    s = query.num_positives
    docs = [
        DocumentEntry(ids[i], float(query.teacher_scores[i]), float(student[i]))
        for i in range(query.num_docs)
    ]
    return DistillationInstance(
        query_id=query.query_id, positives=tuple(docs[:s]), negatives=tuple(docs[s:])
    )
