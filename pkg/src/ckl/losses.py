"""Distillation loss functions over top-one probability distributions.

All losses are per-instance; a batch loss is the unweighted mean over
instances. ``p`` is the teacher's distribution, ``q`` the student's.

* ``kl``:  sum_i p_i ln(p_i / q_i)
* ``ckl``: the contrastively-weighted variant; each positive term carries
  weight ``(1 - q_j)^gamma`` and each negative term ``q_i^(gamma - beta_i)``,
  with the exponent bias ``beta_i`` supplied by the beta module.
* ``bkl``: KL regularized with a positive-entropy plus negative-L1 term,
  ``kl + lam * (sum_pos q ln q + sum_neg q)``. The exact published form of
  this baseline is not available; this reconstruction is used only for
  qualitative gradient-shape comparisons.
* ``margin_mse``: squared error between teacher and student score margins
  over every positive/negative pair.
* ``nll``: ``-sum_pos ln q_j``; ``kl_nll`` adds it to ``kl`` with unit weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beta import BetaAssignment
from .core import CklHyperparams, DistillationInstance, TopOneDistribution, student_distribution, teacher_distribution

LOSS_KINDS = ("kl", "ckl", "bkl", "margin_mse", "nll", "kl_nll")


@dataclass(frozen=True)
class CklTermWeights:
    """Per-document weights of the contrastively-weighted KL terms."""

    positive_weights: np.ndarray
    negative_weights: np.ndarray


@dataclass(frozen=True)
class BklParams:
    lam: float = 0.1

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0.0:
            raise ValueError(f"lam must be finite and non-negative, got {self.lam}")


def _check_aligned(teacher: TopOneDistribution, student: TopOneDistribution) -> None:
    if teacher.probs.shape != student.probs.shape:
        raise ValueError("teacher/student distributions misaligned")
    if not np.array_equal(teacher.is_positive, student.is_positive):
        raise ValueError("teacher/student label masks disagree")


def _p_ln_p_over_q(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Per-document ``p ln(p/q)`` with p = 0 contributing 0."""
    out = np.zeros_like(p)
    nz = p > 0.0
    out[nz] = p[nz] * (np.log(p[nz]) - np.log(q[nz]))
    return out


def _as_beta_vector(betas, student: TopOneDistribution) -> np.ndarray:
    m = int(np.count_nonzero(~student.is_positive))
    if betas is None:
        return np.zeros(m)
    if isinstance(betas, BetaAssignment):
        raise TypeError(
            "pass an aligned beta vector (BetaAssignment.beta_vector(negative_ids)); "
            "distributions carry no doc ids"
        )
    b = np.broadcast_to(np.asarray(betas, dtype=float), (m,)).copy()
    return b


def kl_loss(
    teacher: TopOneDistribution,
    student: TopOneDistribution,
    clamp_epsilon: float = 1e-12,
) -> float:
    _check_aligned(teacher, student)
    q = np.maximum(student.probs, clamp_epsilon)
    return float(np.sum(_p_ln_p_over_q(teacher.probs, q)))


def ckl_weights(
    student: TopOneDistribution,
    betas=None,
    hp: CklHyperparams = CklHyperparams(),
) -> CklTermWeights:
    """Weights ``(1-q_j)^gamma`` (positives) and ``q_i^(gamma-beta_i)``
    (negatives). Exact zeros are allowed at the q boundaries."""
    b = _as_beta_vector(betas, student)
    exponents = hp.gamma - b
    if np.any(exponents < 1.0):
        raise ValueError("exponent below one")
    q_pos = student.positive_probs
    q_neg = student.negative_probs
    return CklTermWeights(
        positive_weights=(1.0 - q_pos) ** hp.gamma,
        negative_weights=q_neg**exponents,
    )


def ckl_loss(
    teacher: TopOneDistribution,
    student: TopOneDistribution,
    betas=None,
    hp: CklHyperparams = CklHyperparams(),
) -> float:
    """Contrastively-weighted KL divergence.

    Weights come from the raw student probabilities (exact zeros allowed);
    logarithms see probabilities clamped to ``[eps, 1-eps]``, which realizes
    the ``q^a ln q -> 0`` limit at q = 0.
    """
    _check_aligned(teacher, student)
    w = ckl_weights(student, betas, hp)
    eps = hp.prob_clamp_epsilon
    q = np.clip(student.probs, eps, 1.0 - eps)
    terms = _p_ln_p_over_q(teacher.probs, q)
    pos = student.is_positive
    return float(np.sum(w.positive_weights * terms[pos]) + np.sum(w.negative_weights * terms[~pos]))


def bkl_loss(
    teacher: TopOneDistribution,
    student: TopOneDistribution,
    params: BklParams = BklParams(),
    clamp_epsilon: float = 1e-12,
) -> float:
    _check_aligned(teacher, student)
    q = np.maximum(student.probs, clamp_epsilon)
    q_pos = q[student.is_positive]
    q_neg = q[~student.is_positive]
    reg = float(np.sum(q_pos * np.log(q_pos)) + np.sum(q_neg))
    return kl_loss(teacher, student, clamp_epsilon) + params.lam * reg


def margin_mse_loss(
    teacher_scores,
    student_scores,
    is_positive,
) -> float:
    """Mean squared margin error over every (positive, negative) pair of
    raw scores."""
    t = np.asarray(teacher_scores, dtype=float)
    s = np.asarray(student_scores, dtype=float)
    mask = np.asarray(is_positive, dtype=bool)
    if t.shape != s.shape or t.shape != mask.shape:
        raise ValueError("score vectors and mask misaligned")
    t_pos, t_neg = t[mask], t[~mask]
    s_pos, s_neg = s[mask], s[~mask]
    if t_pos.size == 0 or t_neg.size == 0:
        raise ValueError("margin-MSE needs at least one positive/negative pair")
    t_margin = t_pos[:, None] - t_neg[None, :]
    s_margin = s_pos[:, None] - s_neg[None, :]
    return float(np.mean((t_margin - s_margin) ** 2))


def nll_loss(student: TopOneDistribution, clamp_epsilon: float = 1e-12) -> float:
    q_pos = np.maximum(student.positive_probs, clamp_epsilon)
    if q_pos.size == 0:
        raise ValueError("distribution has no positive entries")
    return float(-np.sum(np.log(q_pos)))


def kl_plus_nll(
    teacher: TopOneDistribution,
    student: TopOneDistribution,
    clamp_epsilon: float = 1e-12,
) -> float:
    return kl_loss(teacher, student, clamp_epsilon) + nll_loss(student, clamp_epsilon)


def instance_loss(
    instance: DistillationInstance,
    kind: str,
    hp: CklHyperparams = CklHyperparams(),
    betas=None,
    bkl: BklParams = BklParams(),
) -> float:
    """Evaluate one of the LOSS_KINDS on an instance's current scores.

    ``betas`` may be a BetaAssignment (resolved against the instance's
    negative ids), an aligned vector, or None for all-zero biases.
    """
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
    if kind == "margin_mse":
        return margin_mse_loss(
            instance.teacher_scores(), instance.student_scores(), instance.positive_mask()
        )
    teacher = teacher_distribution(instance)
    student = student_distribution(instance)
    if kind == "kl":
        return kl_loss(teacher, student, hp.prob_clamp_epsilon)
    if kind == "bkl":
        return bkl_loss(teacher, student, bkl, hp.prob_clamp_epsilon)
    if kind == "nll":
        return nll_loss(student, hp.prob_clamp_epsilon)
    if kind == "kl_nll":
        return kl_plus_nll(teacher, student, hp.prob_clamp_epsilon)
    if isinstance(betas, BetaAssignment):
        betas = betas.beta_vector(d.doc_id for d in instance.negatives)
    return ckl_loss(teacher, student, betas, hp)
