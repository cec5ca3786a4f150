"""Mini-batch SGD on the linear student with periodic exponent-bias updates
and per-step behavior logging.

The training protocol mirrors the two-phase recipe used at full scale: an
optional warm-up phase under one loss (margin-MSE by default) followed by
refinement under the target loss. Exponent biases are recomputed from the
student's latest scores every ``beta_update_period`` steps and held constant
in between, so the loss stays differentiable step to step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .beta import compute_beta, compute_ranks
from .core import (
    CklHyperparams,
    RankingMetrics,
    margin_separation,
    mrr_at_k,
    ndcg_at_k,
    positive_entropy,
    student_distribution,
)
from .gradients import loss_grad_scores
from .losses import LOSS_KINDS, BklParams, instance_loss
from .synth import SynthDataset, SynthQuery, init_weights, to_instance


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "ckl"
    learning_rate: float = 1.0
    epochs: int = 30
    batch_size: int = 8
    warmup_steps: int = 0
    warmup_loss: str = "margin_mse"
    beta_update_period: int | None = None  # None: a tenth of an epoch
    init_seed: int = 0
    init_scale: float = 0.1
    shuffle_seed: int = 13
    metric_k: int = 10

    def __post_init__(self):
        if self.loss not in LOSS_KINDS or self.warmup_loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}")
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.beta_update_period is not None and self.beta_update_period < 1:
            raise ValueError("beta_update_period must be >= 1")


@dataclass(frozen=True)
class StepRecord:
    step: int
    loss: float
    margin_separation: float
    positive_entropy: float
    mrr_at_10: float
    ndcg_at_10: float


@dataclass(frozen=True)
class TrainRunLog:
    loss_kind: str
    records: tuple[StepRecord, ...]
    final_eval: RankingMetrics
    final_weights: np.ndarray
    beta_update_period: int

    def __post_init__(self):
        steps = [r.step for r in self.records]
        if steps != sorted(steps) or len(set(steps)) != len(steps):
            raise ValueError("step indices must be strictly increasing")


def _query_metrics(query: SynthQuery, weights: np.ndarray, k: int) -> tuple[float, float, float, float]:
    inst = to_instance(query, weights)
    dist = student_distribution(inst)
    order = np.argsort(-dist.probs, kind="stable")
    relevance = dist.is_positive[order]
    return (
        margin_separation(dist, k),
        positive_entropy(dist),
        mrr_at_k(relevance, k),
        ndcg_at_k(relevance.astype(float), k),
    )


def evaluate(queries, weights: np.ndarray, k: int = 10) -> RankingMetrics:
    """Metrics averaged over a query split."""
    rows = np.array([_query_metrics(q, weights, k) for q in queries])
    means = rows.mean(axis=0)
    return RankingMetrics(
        margin_separation=float(means[0]),
        positive_entropy=float(means[1]),
        mrr_at_10=float(means[2]),
        ndcg_at_10=float(means[3]),
    )


def _beta_vectors(queries, weights: np.ndarray, alpha: float) -> dict[str, np.ndarray]:
    out = {}
    for q in queries:
        inst = to_instance(q, weights)
        ranks = compute_ranks(dict(zip(inst.doc_ids(), inst.student_scores())))
        assignment = compute_beta(
            ranks,
            [d.doc_id for d in inst.positives],
            [d.doc_id for d in inst.negatives],
            alpha,
        )
        out[q.query_id] = assignment.beta_vector(d.doc_id for d in inst.negatives)
    return out


def train(
    dataset: SynthDataset,
    cfg: TrainConfig,
    hp: CklHyperparams = CklHyperparams(),
    bkl: BklParams = BklParams(),
) -> TrainRunLog:
    """SGD over the train split; logs train-split behavior every step and
    evaluates the held-out split at the end. Deterministic for a fixed
    dataset and config."""
    queries = list(dataset.train)
    dim = dataset.config.feature_dim
    weights = init_weights(dim, cfg.init_seed, cfg.init_scale)
    shuffle_rng = np.random.default_rng(cfg.shuffle_seed)
    steps_per_epoch = math.ceil(len(queries) / cfg.batch_size)
    period = cfg.beta_update_period or max(1, steps_per_epoch // 10)

    betas = _beta_vectors(queries, weights, hp.alpha)
    records = []
    step = 0
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(len(queries))
        for start in range(0, len(queries), cfg.batch_size):
            step += 1
            active = cfg.warmup_loss if step <= cfg.warmup_steps else cfg.loss
            batch = [queries[i] for i in order[start : start + cfg.batch_size]]
            grad = np.zeros(dim)
            for q in batch:
                inst = to_instance(q, weights)
                grad_scores = loss_grad_scores(inst, active, hp, betas[q.query_id], bkl)
                grad += q.features.T @ grad_scores
            grad /= len(batch)
            weights = weights - cfg.learning_rate * grad
            if not np.all(np.isfinite(weights)):
                raise TrainingDivergedError(
                    f"non-finite weights at step {step} under loss {active!r} "
                    f"(lr={cfg.learning_rate})"
                )
            if step % period == 0:
                betas = _beta_vectors(queries, weights, hp.alpha)

            losses = [
                instance_loss(to_instance(q, weights), active, hp, betas[q.query_id], bkl)
                for q in queries
            ]
            mean_loss = float(np.mean(losses))
            if not math.isfinite(mean_loss):
                raise TrainingDivergedError(f"non-finite loss at step {step} under {active!r}")
            m = evaluate(queries, weights, cfg.metric_k)
            records.append(
                StepRecord(
                    step=step,
                    loss=mean_loss,
                    margin_separation=m.margin_separation,
                    positive_entropy=m.positive_entropy,
                    mrr_at_10=m.mrr_at_10,
                    ndcg_at_10=m.ndcg_at_10,
                )
            )

    final_eval = evaluate(dataset.eval or dataset.train, weights, cfg.metric_k)
    return TrainRunLog(
        loss_kind=cfg.loss,
        records=tuple(records),
        final_eval=final_eval,
        final_weights=weights,
        beta_update_period=period,
    )


@dataclass(frozen=True)
class ComparisonRow:
    loss: str
    gamma: float
    alpha: float
    seeds: tuple[int, ...]
    margin_mean: float
    margin_std: float
    entropy_mean: float
    entropy_std: float
    mrr10_mean: float
    mrr10_std: float
    ndcg10_mean: float
    ndcg10_std: float
    per_seed: tuple[RankingMetrics, ...]


def compare_losses(
    dataset: SynthDataset,
    losses,
    hp_grid=None,
    seeds=(0, 1, 2, 3, 4),
    base_cfg: TrainConfig = TrainConfig(),
    bkl: BklParams = BklParams(),
) -> list[ComparisonRow]:
    """Train every loss (x hyperparameter combination) under identical data,
    initialization, and batch order per seed; aggregate final held-out
    metrics."""
    losses = list(losses)
    if len(losses) < 2:
        raise ValueError("need at least two losses to compare")
    if not seeds:
        raise ValueError("need at least one seed")
    if not hp_grid:
        hp_grid = [CklHyperparams(gamma=5.0, alpha=1.0)]
    rows = []
    for loss in losses:
        for hp in hp_grid:
            finals = []
            for seed in seeds:
                cfg = replace(base_cfg, loss=loss, init_seed=seed, shuffle_seed=seed)
                finals.append(train(dataset, cfg, hp, bkl).final_eval)
            margins = np.array([f.margin_separation for f in finals])
            entropies = np.array([f.positive_entropy for f in finals])
            mrrs = np.array([f.mrr_at_10 for f in finals])
            ndcgs = np.array([f.ndcg_at_10 for f in finals])
            rows.append(
                ComparisonRow(
                    loss=loss,
                    gamma=hp.gamma,
                    alpha=hp.alpha,
                    seeds=tuple(seeds),
                    margin_mean=float(margins.mean()),
                    margin_std=float(margins.std()),
                    entropy_mean=float(entropies.mean()),
                    entropy_std=float(entropies.std()),
                    mrr10_mean=float(mrrs.mean()),
                    mrr10_std=float(mrrs.std()),
                    ndcg10_mean=float(ndcgs.mean()),
                    ndcg10_std=float(ndcgs.std()),
                    per_seed=tuple(finals),
                )
            )
    return rows
