"""Closed-form per-document gradients, their ratios against plain KL, the
softmax chain rule to score space, and a central finite-difference oracle.

The per-document gradient of KL w.r.t. the student probability is
``-p/q``; each alternative loss is characterized by the ratio of its own
per-document derivative to that baseline (``g`` below). Exponent biases are
held constant during differentiation: they change only at scheduled updates,
between which they are constants of the loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .beta import compute_beta, compute_ranks
from .core import CklHyperparams, DistillationInstance, top_one_probability
from .losses import BklParams, instance_loss

_REL_FLOOR = 1e-12


def _maybe_scalar(x):
    arr = np.asarray(x, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def _p_over_q(p, q):
    return np.where(p > 0.0, p / q, 0.0)


def _p_ln_ratio(p, q):
    return np.where(p > 0.0, p * (np.log(np.where(p > 0.0, p, 1.0)) - np.log(q)), 0.0)


def kl_grad_q(p, q):
    """d/dq of ``p ln(p/q)``: exactly ``-p/q`` (0 when p = 0)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return _maybe_scalar(-_p_over_q(p, q))


def ckl_grad_q(p, q, is_positive, gamma, beta=0.0):
    """d/dq of the weighted term.

    Positive documents: ``-gamma (1-q)^(gamma-1) p ln(p/q) - (1-q)^gamma p/q``.
    Negative documents: ``(gamma-beta) q^(gamma-beta-1) p ln(p/q)
    - q^(gamma-beta) p/q``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pos = np.asarray(is_positive, dtype=bool)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), q.shape)
    expo = gamma - beta
    neg_expo = np.atleast_1d(expo)[~np.atleast_1d(pos)]
    if np.any(neg_expo < 1.0):
        raise ValueError("exponent below one")
    pln = _p_ln_ratio(p, q)
    pq = _p_over_q(p, q)
    pos_grad = -gamma * (1.0 - q) ** (gamma - 1.0) * pln - (1.0 - q) ** gamma * pq
    neg_grad = expo * q ** (expo - 1.0) * pln - q**expo * pq
    return _maybe_scalar(np.where(pos, pos_grad, neg_grad))


def grad_ratio(p, q, is_positive, gamma, beta=0.0):
    """Ratio of the weighted term's derivative to KL's ``-p/q``.

    Positive documents: ``(1-q)^(gamma-1) (gamma q ln(p/q) + 1 - q)``.
    Negative documents: ``q^(gamma-beta) (1 - (gamma-beta) ln(p/q))``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(p <= 0.0):
        raise ValueError("ratio undefined")
    pos = np.asarray(is_positive, dtype=bool)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), q.shape)
    expo = gamma - beta
    ln_ratio = np.log(p / q)
    pos_ratio = (1.0 - q) ** (gamma - 1.0) * (gamma * q * ln_ratio + 1.0 - q)
    neg_ratio = q**expo * (1.0 - expo * ln_ratio)
    return _maybe_scalar(np.where(pos, pos_ratio, neg_ratio))


def bkl_grad_q(p, q, is_positive, lam):
    """Per-document derivative of the reconstructed regularized KL:
    ``-p/q + lam (ln q + 1)`` on positives, ``-p/q + lam`` on negatives."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pos = np.asarray(is_positive, dtype=bool)
    reg = np.where(pos, lam * (np.log(q) + 1.0), lam)
    return _maybe_scalar(-_p_over_q(p, q) + reg)


def bkl_grad_ratio(p, q, is_positive, lam):
    """``bkl_grad_q / kl_grad_q``: ``1 - lam (ln q + 1) q/p`` on positives,
    ``1 - lam q/p`` on negatives."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(p <= 0.0):
        raise ValueError("ratio undefined")
    pos = np.asarray(is_positive, dtype=bool)
    ratio = np.where(pos, 1.0 - lam * (np.log(q) + 1.0) * q / p, 1.0 - lam * q / p)
    return _maybe_scalar(ratio)


def _margin_mse_grad_scores(instance: DistillationInstance) -> np.ndarray:
    t = instance.teacher_scores()
    s = instance.student_scores()
    mask = instance.positive_mask()
    t_margin = t[mask][:, None] - t[~mask][None, :]
    s_margin = s[mask][:, None] - s[~mask][None, :]
    delta = t_margin - s_margin
    n_pairs = delta.size
    grad = np.zeros_like(s)
    grad[mask] = -2.0 / n_pairs * delta.sum(axis=1)
    grad[~mask] = 2.0 / n_pairs * delta.sum(axis=0)
    return grad


def loss_grad_scores(
    instance: DistillationInstance,
    kind: str,
    hp: CklHyperparams = CklHyperparams(),
    betas=None,
    bkl: BklParams = BklParams(),
) -> np.ndarray:
    """Gradient of the instance loss with respect to raw student scores.

    Probability-based losses chain the per-document dL/dq through the
    softmax Jacobian ``dq_i/ds_k = q_i (delta_ik - q_k)``; margin-MSE is
    differentiated directly in score space.
    """
    if kind == "margin_mse":
        return _margin_mse_grad_scores(instance)
    mask = instance.positive_mask()
    dist = top_one_probability(instance.student_scores(), mask)
    p = top_one_probability(instance.teacher_scores(), mask).probs
    eps = hp.prob_clamp_epsilon
    q = np.clip(dist.probs, eps, 1.0 - eps)
    if kind == "kl":
        grad_q = kl_grad_q(p, q)
    elif kind == "ckl":
        from .beta import BetaAssignment

        if isinstance(betas, BetaAssignment):
            betas = betas.beta_vector(d.doc_id for d in instance.negatives)
        full_beta = np.zeros_like(q)
        if betas is not None:
            full_beta[~mask] = np.asarray(betas, dtype=float)
        grad_q = ckl_grad_q(p, q, mask, hp.gamma, full_beta)
    elif kind == "bkl":
        grad_q = bkl_grad_q(p, q, mask, bkl.lam)
    elif kind == "nll":
        grad_q = np.where(mask, -1.0 / q, 0.0)
    elif kind == "kl_nll":
        grad_q = kl_grad_q(p, q) + np.where(mask, -1.0 / q, 0.0)
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    # J^T grad_q with J the softmax Jacobian: a - q * sum(a), a = grad_q * q.
    a = grad_q * dist.probs
    return a - dist.probs * a.sum()


# ---------------------------------------------------------------------------
# Gradient-ratio curves (fixed-q sweeps over the teacher/student ratio).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    branch: str  # "positive" | "negative"
    pq_ratio: float
    q: float
    g_ckl: float
    g_bkl: float


DEFAULT_Q_GRID = (0.1, 0.3, 0.5)
DEFAULT_RATIO_GRID = tuple(np.geomspace(0.05, 1.95, 121))


def curve_sweep(
    gamma: float = 5.0,
    beta: float = 0.0,
    lam: float = 0.1,
    q_grid=DEFAULT_Q_GRID,
    ratio_grid=DEFAULT_RATIO_GRID,
) -> list[CurvePoint]:
    """Tabulate the gradient-contribution ratios g over a grid of
    teacher/student probability ratios, for both document branches.

    Grid points whose implied teacher probability ``p = ratio * q`` falls
    outside (0, 1) are skipped.
    """
    q_grid = list(q_grid)
    ratio_grid = list(ratio_grid)
    if not q_grid or not ratio_grid:
        raise ValueError("grids must be non-empty")
    rows: list[CurvePoint] = []
    for branch, is_pos in (("positive", True), ("negative", False)):
        for q in q_grid:
            for r in ratio_grid:
                p = r * q
                if not 0.0 < p < 1.0:
                    continue
                rows.append(
                    CurvePoint(
                        branch=branch,
                        pq_ratio=float(r),
                        q=float(q),
                        g_ckl=float(grad_ratio(p, q, is_pos, gamma, beta)),
                        g_bkl=float(bkl_grad_ratio(p, q, is_pos, lam)),
                    )
                )
    return rows


# ---------------------------------------------------------------------------
# Finite-difference oracle.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradientReport:
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_error: float
    max_abs_error: float

    def __post_init__(self):
        if np.asarray(self.analytic).shape != np.asarray(self.numeric).shape:
            raise ValueError("analytic/numeric misaligned")


def central_difference(f: Callable[[float], float], x: float, h: float = 1e-6) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


def _make_report(analytic: np.ndarray, numeric: np.ndarray) -> GradientReport:
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    abs_err = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), _REL_FLOOR)
    return GradientReport(
        analytic=analytic,
        numeric=numeric,
        max_rel_error=float(np.max(abs_err / denom)) if abs_err.size else 0.0,
        max_abs_error=float(np.max(abs_err)) if abs_err.size else 0.0,
    )


def _term_value(kind: str, p: float, q: float, is_pos: bool, gamma: float, beta: float, lam: float) -> float:
    pln = p * (np.log(p) - np.log(q)) if p > 0.0 else 0.0
    if kind == "kl":
        return pln
    if kind == "ckl":
        w = (1.0 - q) ** gamma if is_pos else q ** (gamma - beta)
        return w * pln
    if kind == "bkl":
        return pln + (lam * q * np.log(q) if is_pos else lam * q)
    if kind == "nll":
        return -np.log(q)
    raise ValueError(kind)


def check_term_gradients(
    draws: int = 1000, seed: int = 20240817, h: float = 1e-6
) -> dict[str, GradientReport]:
    """Compare every closed-form per-document dL/dq against central
    differences of the corresponding loss term on random draws.

    Draw ranges keep q away from the clamp boundaries so the finite
    differences probe the smooth region the formulas describe.
    """
    rng = np.random.default_rng(seed)
    q = rng.uniform(1e-3, 1.0 - 1e-3, size=draws)
    p = rng.uniform(1e-3, 1.0, size=draws)
    gamma = rng.uniform(1.0, 7.0, size=draws)
    beta = rng.uniform(-1.0, 1.0, size=draws) * (gamma - 1.0)
    lam = rng.uniform(0.0, 0.5, size=draws)
    is_pos = rng.uniform(size=draws) < 0.5

    def analytic_for(kind):
        if kind == "kl":
            return kl_grad_q(p, q)
        if kind == "ckl":
            return ckl_grad_q(p, q, is_pos, gamma, beta)
        if kind == "bkl":
            return bkl_grad_q(p, q, is_pos, lam)
        if kind == "nll":
            return -1.0 / q
        raise ValueError(kind)

    reports = {}
    for kind in ("kl", "ckl", "bkl", "nll"):
        analytic = analytic_for(kind)
        numeric = np.array(
            [
                central_difference(
                    lambda x, i=i: _term_value(kind, p[i], x, bool(is_pos[i]), gamma[i], beta[i], lam[i]),
                    q[i],
                    h,
                )
                for i in range(draws)
            ]
        )
        reports[kind] = _make_report(analytic, numeric)
    return reports


def random_instance(rng: np.random.Generator, max_pos: int = 3, max_neg: int = 8) -> DistillationInstance:
    from .core import DocumentEntry

    s = int(rng.integers(1, max_pos + 1))
    m = int(rng.integers(2, max_neg + 1))
    teacher = rng.normal(0.0, 1.5, size=s + m)
    student = rng.normal(0.0, 1.5, size=s + m)
    docs = [
        DocumentEntry(f"d{i:02d}", float(teacher[i]), float(student[i])) for i in range(s + m)
    ]
    return DistillationInstance(
        query_id=f"q{rng.integers(1_000_000)}", positives=tuple(docs[:s]), negatives=tuple(docs[s:])
    )


def check_score_gradients(
    instances: int = 60,
    seed: int = 20240817,
    h: float = 1e-6,
    kinds=("kl", "ckl", "bkl", "margin_mse", "nll", "kl_nll"),
) -> dict[str, GradientReport]:
    """Full score-space gradients (softmax chain rule / direct margin-MSE)
    against central differences of the instance loss, with exponent biases
    frozen at their values for the unperturbed scores.

    Relative error is measured per instance between gradient vectors,
    ``|a - n| / max(|a|, |n|)`` in the 2-norm; individual components near the
    gradient's zero crossings carry no signal of their own.
    """
    rng = np.random.default_rng(seed)
    collected = {kind: ([], []) for kind in kinds}
    for _ in range(instances):
        inst = random_instance(rng)
        gamma = float(rng.uniform(1.5, 7.0))
        alpha = float(rng.uniform(0.0, min(gamma - 1.0, 2.0)))
        hp = CklHyperparams(gamma=gamma, alpha=alpha)
        bkl = BklParams(lam=float(rng.uniform(0.0, 0.5)))
        ranks = compute_ranks(dict(zip(inst.doc_ids(), inst.student_scores())))
        assignment = compute_beta(
            ranks, [d.doc_id for d in inst.positives], [d.doc_id for d in inst.negatives], alpha
        )
        betas = assignment.beta_vector(d.doc_id for d in inst.negatives)
        base_scores = inst.student_scores()
        for kind in kinds:
            analytic = loss_grad_scores(inst, kind, hp, betas, bkl)

            def loss_at(scores):
                shifted = _with_scores(inst, scores)
                return instance_loss(shifted, kind, hp, betas, bkl)

            numeric = np.empty_like(base_scores)
            for k in range(base_scores.size):
                delta = np.zeros_like(base_scores)
                delta[k] = h
                numeric[k] = (loss_at(base_scores + delta) - loss_at(base_scores - delta)) / (2 * h)
            collected[kind][0].append(analytic)
            collected[kind][1].append(numeric)
    reports = {}
    for kind, (a_list, n_list) in collected.items():
        rel = max(
            float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), _REL_FLOOR))
            for a, n in zip(a_list, n_list)
        )
        analytic = np.concatenate(a_list)
        numeric = np.concatenate(n_list)
        reports[kind] = GradientReport(
            analytic=analytic,
            numeric=numeric,
            max_rel_error=rel,
            max_abs_error=float(np.max(np.abs(analytic - numeric))),
        )
    return reports


def _with_scores(instance: DistillationInstance, scores: np.ndarray) -> DistillationInstance:
    from .core import DocumentEntry

    docs = [
        DocumentEntry(d.doc_id, d.teacher_score, float(scores[i]))
        for i, d in enumerate(instance.documents)
    ]
    s = instance.num_positives
    return DistillationInstance(
        query_id=instance.query_id, positives=tuple(docs[:s]), negatives=tuple(docs[s:])
    )


def run_gradcheck(draws: int = 1000, seed: int = 20240817, h: float = 1e-6) -> dict:
    """Aggregate report for the CLI: per-term and score-space checks."""
    term = check_term_gradients(draws=draws, seed=seed, h=h)
    score = check_score_gradients(instances=max(20, draws // 20), seed=seed, h=h)
    worst = max(
        [r.max_rel_error for r in term.values()] + [r.max_rel_error for r in score.values()]
    )
    return {
        "draws": draws,
        "seed": seed,
        "step": h,
        "max_rel_error": worst,
        "term_checks": {
            k: {
                "max_rel_error": r.max_rel_error,
                "max_abs_error": r.max_abs_error,
                "analytic": r.analytic.tolist(),
                "numeric": r.numeric.tolist(),
            }
            for k, r in term.items()
        },
        "score_checks": {
            k: {
                "max_rel_error": r.max_rel_error,
                "max_abs_error": r.max_abs_error,
                "analytic": r.analytic.tolist(),
                "numeric": r.numeric.tolist(),
            }
            for k, r in score.items()
        },
    }
