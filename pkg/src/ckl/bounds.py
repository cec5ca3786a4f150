"""Monte-Carlo verification of the weighted loss's lower-bound chain.

The chain bounds the contrastively-weighted loss from below in three moves:
drop the weights on the (negative) ``p ln p`` terms, apply Bernoulli's
inequality ``(1-q)^g >= 1 - g q`` to the positive log terms, and drop the
teacher factor from ``g q p ln q``. That yields the intermediate bound

    L >= KL + sum_neg p (1 - q^(g-b)) ln q + (g / log e) sum_pos q log q

whose trailing components are in turn bounded via ``ln x <= x - 1``, Jensen's
inequality on the convex ``x log x``, and the sign of ``-p q^(g-b) ln q``,
giving the constant floor ``sum_neg p (-1 + ln p) - 2 g / e``.

The Jensen endpoint ``-2 log e / e`` is the minimum of ``u log(u / s)`` on
[0, 1] only while ``s <= e``; for three or more positives the true minimum is
``-log s``, which is lower. ``jensen_min`` quantifies this, and the chain
verifier asserts the constant floor only for s <= 2, recording (without
asserting) how the floor behaves for larger s.

All logs are natural internally; base-2 logs appear exactly where the
``log e`` conversion factor does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CklHyperparams, TopOneDistribution

CHECK_NAMES = (
    "bernoulli",
    "weighted_vs_rhs",
    "positive_kl_floor",
    "jensen",
    "third_component_sign",
    "constant_floor",
)

_LOG2_E = math.log2(math.e)


@dataclass(frozen=True)
class CheckRecord:
    name: str
    lhs: float
    rhs: float
    holds: bool


@dataclass(frozen=True)
class BoundReport:
    """Aggregate of a chain-verification run.

    ``ckl_value`` / ``rhs_eq_cklbound`` / ``constant_bound`` and the
    ``intermediate_checks`` snapshot come from the tightest sample (smallest
    slack between the weighted loss and its intermediate bound); ``violations``
    counts samples where any asserted inequality fails by more than the
    tolerance.
    """

    ckl_value: float
    rhs_eq_cklbound: float
    constant_bound: float
    intermediate_checks: list[CheckRecord]
    samples_tested: int
    violations: int
    per_check_violations: dict[str, int]
    tolerance: float
    seed: int
    s_max: int
    constant_floor_samples: int
    large_s_samples: int
    large_s_floor_failures: int

    def to_json_dict(self) -> dict:
        return {
            "ckl_value": self.ckl_value,
            "rhs_eq_cklbound": self.rhs_eq_cklbound,
            "constant_bound": self.constant_bound,
            "intermediate_checks": [
                {"name": c.name, "lhs": c.lhs, "rhs": c.rhs, "holds": c.holds}
                for c in self.intermediate_checks
            ],
            "samples_tested": self.samples_tested,
            "violations": self.violations,
            "per_check_violations": dict(self.per_check_violations),
            "tolerance": self.tolerance,
            "seed": self.seed,
            "s_max": self.s_max,
            "constant_floor_samples": self.constant_floor_samples,
            "large_s_samples": self.large_s_samples,
            "large_s_floor_failures": self.large_s_floor_failures,
        }


def eq_cklbound_rhs(
    teacher: TopOneDistribution,
    student: TopOneDistribution,
    betas=None,
    hp: CklHyperparams = CklHyperparams(),
) -> float:
    """Intermediate lower bound on the weighted loss:
    KL + sum_neg p (1 - q^(gamma-beta)) ln q + (gamma/log e) sum_pos q log q.
    """
    if teacher.probs.shape != student.probs.shape:
        raise ValueError("teacher/student distributions misaligned")
    pos = student.is_positive
    eps = hp.prob_clamp_epsilon
    p = teacher.probs
    q = np.clip(student.probs, eps, 1.0 - eps)
    m = int(np.count_nonzero(~pos))
    beta = np.zeros(m) if betas is None else np.asarray(betas, dtype=float)
    expo = hp.gamma - beta
    if np.any(expo < 1.0):
        raise ValueError("exponent below one")
    kl = float(np.sum(np.where(p > 0.0, p * (np.log(np.where(p > 0.0, p, 1.0)) - np.log(q)), 0.0)))
    p_neg, q_neg = p[~pos], q[~pos]
    second = float(np.sum(p_neg * (1.0 - q_neg**expo) * np.log(q_neg)))
    q_pos = q[pos]
    third = (hp.gamma / _LOG2_E) * float(np.sum(q_pos * np.log2(q_pos)))
    return kl + second + third


def constant_lower_bound(teacher_negative_probs, gamma: float) -> float:
    """Constant floor ``sum_neg p (-1 + ln p) - 2 gamma / e``. Depends only on
    the (fixed) teacher probabilities of the negatives."""
    p = np.asarray(teacher_negative_probs, dtype=float)
    terms = np.where(p > 0.0, p * (-1.0 + np.log(np.where(p > 0.0, p, 1.0))), 0.0)
    return float(np.sum(terms)) - 2.0 * gamma / math.e


def jensen_min(s: int) -> float:
    """Exact minimum of ``u log2(u/s)`` over u in [0, 1].

    The stationary point u = s/e is admissible only while s <= e, where the
    minimum is ``-(s/e) log2 e``; beyond that the minimum sits at u = 1 with
    value ``-log2 s``. At s = 2 this reproduces the ``-2 log e / e`` endpoint;
    for s >= 3 the true minimum is strictly lower, which is why the constant
    floor is only asserted for one or two positives.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    if s <= math.e:
        return -(s / math.e) * _LOG2_E
    return -math.log2(s)


def verify_bound_chain(
    samples: int = 100_000,
    s_max: int = 2,
    seed: int = 7,
    m_max: int = 8,
    tolerance: float = 1e-9,
    eps: float = 1e-12,
) -> BoundReport:
    """Draw random instances (simplex p and q, random shape and
    hyperparameters, biases from the student's own ranking) and check every
    inequality of the bound chain.

    Checks, per sample:
      (a) bernoulli            (1-q)^g >= 1 - g q for every document prob
      (b) weighted_vs_rhs      weighted loss >= intermediate bound
      (c) positive_kl_floor    sum_pos p ln(p/q) >= -sum_neg p
      (d) jensen               mean_pos q log2 q >= (P/s) log2(P/s)
      (e) third_component_sign -sum_neg p q^(g-b) ln q >= 0
      (f) constant_floor       weighted loss >= constant bound (s <= 2 only)

    Violations are data, not errors: the report counts them.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    if s_max < 1 or m_max < 1:
        raise ValueError("s_max and m_max must be >= 1")
    rng = np.random.default_rng(seed)
    s_arr = rng.integers(1, s_max + 1, size=samples)
    m_arr = rng.integers(1, m_max + 1, size=samples)
    gamma_arr = rng.uniform(1.0, 7.0, size=samples)
    alpha_arr = rng.uniform(0.0, 1.0, size=samples) * (gamma_arr - 1.0)

    per_check = {name: 0 for name in CHECK_NAMES}
    violating_samples = 0
    floor_checked = 0
    large_s = 0
    large_s_floor_failures = 0

    tightest_slack = math.inf
    tightest: dict | None = None

    shapes = sorted({(int(s), int(m)) for s, m in zip(s_arr, m_arr)})
    for s, m in shapes:
        idx = np.flatnonzero((s_arr == s) & (m_arr == m))
        k = idx.size
        n = s + m
        gamma = gamma_arr[idx][:, None]
        alpha = alpha_arr[idx][:, None]
        p = rng.dirichlet(np.ones(n), size=k)
        q = rng.dirichlet(np.ones(n), size=k)

        # Ranks over the instance's own candidates, 1 = highest student prob.
        order = np.argsort(-q, axis=1, kind="stable")
        ranks = np.empty_like(order)
        rows = np.arange(k)[:, None]
        ranks[rows, order] = np.arange(1, n + 1)[None, :]
        hmr = np.mean(1.0 / ranks[:, :s], axis=1, keepdims=True)
        beta = alpha * (1.0 / ranks[:, s:] - hmr)
        expo = gamma - beta

        qc = np.clip(q, eps, 1.0 - eps)
        ln_qc = np.log(qc)
        p_ln_ratio = np.where(p > 0.0, p * (np.log(np.where(p > 0.0, p, 1.0)) - ln_qc), 0.0)

        w_pos = (1.0 - q[:, :s]) ** gamma
        w_neg = q[:, s:] ** expo
        l_ckl = np.sum(w_pos * p_ln_ratio[:, :s], axis=1) + np.sum(
            w_neg * p_ln_ratio[:, s:], axis=1
        )

        kl = np.sum(p_ln_ratio, axis=1)
        second = np.sum(p[:, s:] * (1.0 - qc[:, s:] ** expo) * ln_qc[:, s:], axis=1)
        third = (gamma[:, 0] / _LOG2_E) * np.sum(qc[:, :s] * np.log2(qc[:, :s]), axis=1)
        rhs = kl + second + third

        bernoulli_gap = np.min((1.0 - q) ** gamma - (1.0 - gamma * q), axis=1)
        pos_kl = np.sum(p_ln_ratio[:, :s], axis=1)
        neg_p_sum = np.sum(p[:, s:], axis=1)
        p_sum_pos = np.sum(qc[:, :s], axis=1)
        jensen_lhs = np.mean(qc[:, :s] * np.log2(qc[:, :s]), axis=1)
        jensen_rhs = (p_sum_pos / s) * np.log2(p_sum_pos / s)
        third_comp = -np.sum(p[:, s:] * qc[:, s:] ** expo * ln_qc[:, s:], axis=1)
        const = np.where(
            p[:, s:] > 0.0, p[:, s:] * (-1.0 + np.log(np.where(p[:, s:] > 0.0, p[:, s:], 1.0))), 0.0
        ).sum(axis=1) - 2.0 * gamma[:, 0] / math.e

        fails = {
            "bernoulli": bernoulli_gap < -tolerance,
            "weighted_vs_rhs": l_ckl - rhs < -tolerance,
            "positive_kl_floor": pos_kl - (-neg_p_sum) < -tolerance,
            "jensen": jensen_lhs - jensen_rhs < -tolerance,
            "third_component_sign": third_comp < -tolerance,
        }
        floor_fail = l_ckl - const < -tolerance
        if s <= 2:
            fails["constant_floor"] = floor_fail
            floor_checked += k
        else:
            fails["constant_floor"] = np.zeros(k, dtype=bool)
            large_s += k
            large_s_floor_failures += int(np.count_nonzero(floor_fail))

        any_fail = np.zeros(k, dtype=bool)
        for name in CHECK_NAMES:
            per_check[name] += int(np.count_nonzero(fails[name]))
            any_fail |= fails[name]
        violating_samples += int(np.count_nonzero(any_fail))

        slack = l_ckl - rhs
        j = int(np.argmin(slack))
        if slack[j] < tightest_slack:
            tightest_slack = float(slack[j])
            tightest = {
                "ckl_value": float(l_ckl[j]),
                "rhs": float(rhs[j]),
                "constant": float(const[j]),
                "checks": [
                    CheckRecord("bernoulli", float(bernoulli_gap[j]), 0.0, bool(bernoulli_gap[j] >= -tolerance)),
                    CheckRecord("weighted_vs_rhs", float(l_ckl[j]), float(rhs[j]), bool(l_ckl[j] - rhs[j] >= -tolerance)),
                    CheckRecord("positive_kl_floor", float(pos_kl[j]), float(-neg_p_sum[j]), bool(pos_kl[j] + neg_p_sum[j] >= -tolerance)),
                    CheckRecord("jensen", float(jensen_lhs[j]), float(jensen_rhs[j]), bool(jensen_lhs[j] - jensen_rhs[j] >= -tolerance)),
                    CheckRecord("third_component_sign", float(third_comp[j]), 0.0, bool(third_comp[j] >= -tolerance)),
                    CheckRecord("constant_floor", float(l_ckl[j]), float(const[j]), bool(s > 2 or l_ckl[j] - const[j] >= -tolerance)),
                ],
            }

    assert tightest is not None
    return BoundReport(
        ckl_value=tightest["ckl_value"],
        rhs_eq_cklbound=tightest["rhs"],
        constant_bound=tightest["constant"],
        intermediate_checks=tightest["checks"],
        samples_tested=samples,
        violations=violating_samples,
        per_check_violations=per_check,
        tolerance=tolerance,
        seed=seed,
        s_max=s_max,
        constant_floor_samples=floor_checked,
        large_s_samples=large_s,
        large_s_floor_failures=large_s_floor_failures,
    )
