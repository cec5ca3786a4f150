import math

import numpy as np
import pytest

from ckl.beta import compute_beta, compute_ranks
from ckl.bounds import (
    constant_lower_bound,
    eq_cklbound_rhs,
    jensen_min,
    verify_bound_chain,
)
from ckl.core import CklHyperparams, TopOneDistribution
from ckl.losses import ckl_loss, kl_loss


def dist(probs, mask):
    return TopOneDistribution(np.asarray(probs, dtype=float), np.asarray(mask, dtype=bool))


class TestJensenMin:
    def test_single_positive(self):
        assert jensen_min(1) == pytest.approx(-(1.0 / math.e) * math.log2(math.e), rel=1e-15)
        assert jensen_min(1) == pytest.approx(-0.53074, abs=1e-5)

    def test_two_positives_matches_endpoint_exactly(self):
        assert abs(jensen_min(2) - (-2.0 * math.log2(math.e) / math.e)) < 1e-12

    def test_four_positives_boundary_minimum(self):
        # For s > e the minimum moves to u = 1 and drops below the endpoint.
        assert jensen_min(4) == pytest.approx(-2.0, rel=1e-15)
        assert jensen_min(4) < -2.0 * math.log2(math.e) / math.e

    def test_direct_numeric_minimum(self):
        # Grid-search oracle over u in (0, 1].
        u = np.linspace(1e-9, 1.0, 2_000_001)
        for s in (1, 2, 3, 5):
            brute = float(np.min(u * np.log2(u / s)))
            assert jensen_min(s) == pytest.approx(brute, abs=1e-7)

    def test_invalid_s(self):
        with pytest.raises(ValueError):
            jensen_min(0)


class TestConstantLowerBound:
    def test_hand_value(self):
        got = constant_lower_bound([0.3], gamma=5.0)
        assert got == pytest.approx(0.3 * (-1.0 + math.log(0.3)) - 10.0 / math.e, rel=1e-12)
        assert got == pytest.approx(-4.33998, abs=1e-5)

    def test_no_negatives(self):
        assert constant_lower_bound([], gamma=5.0) == pytest.approx(-10.0 / math.e, rel=1e-15)

    def test_vanishing_teacher_mass(self):
        assert constant_lower_bound([0.0], gamma=1.0) == pytest.approx(
            -2.0 / math.e, rel=1e-15
        )
        assert constant_lower_bound([0.0], gamma=1.0) == pytest.approx(-0.73576, abs=1e-5)

    def test_independent_of_student(self, rng):
        # The floor depends only on the fixed teacher probabilities.
        p_neg = rng.dirichlet(np.ones(4))[:3]
        reference = constant_lower_bound(p_neg, gamma=3.0)
        for _ in range(100):
            _ = rng.dirichlet(np.ones(4))  # a fresh student draw changes nothing
            assert constant_lower_bound(p_neg, gamma=3.0) == pytest.approx(
                reference, abs=1e-12
            )


class TestEqCklboundRhs:
    def test_matched_distributions_nonpositive(self, rng):
        # KL term vanishes at p = q; the remaining components are <= 0.
        for _ in range(200):
            n = int(rng.integers(2, 8))
            s = int(rng.integers(1, n))
            q = rng.dirichlet(np.ones(n))
            mask = [True] * s + [False] * (n - s)
            d = dist(q, mask)
            rhs = eq_cklbound_rhs(d, d, hp=CklHyperparams(gamma=rng.uniform(1, 7), alpha=0.0))
            assert rhs <= 1e-12

    def test_golden_single_pair(self):
        # One positive, one negative, gamma=1, beta=0:
        # KL + p_neg (1 - q_neg) ln q_neg + gamma q_pos ln q_pos.
        teacher = dist([0.7, 0.3], [True, False])
        student = dist([0.5, 0.5], [True, False])
        kl = 0.7 * math.log(1.4) + 0.3 * math.log(0.6)
        expected = kl + 0.3 * 0.5 * math.log(0.5) + 1.0 * 0.5 * math.log(0.5)
        got = eq_cklbound_rhs(teacher, student, hp=CklHyperparams(gamma=1.0, alpha=0.0))
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(-0.3682627889, abs=1e-9)

    def test_clamp_neutralizes_vanishing_negative(self):
        # gamma = 1 and q_neg at the clamp floor: second component ~ 0.
        teacher = dist([0.7, 0.3], [True, False])
        student = dist([1.0 - 1e-12, 1e-12], [True, False])
        hp = CklHyperparams(gamma=1.0, alpha=0.0)
        rhs = eq_cklbound_rhs(teacher, student, hp=hp)
        kl = kl_loss(teacher, student, hp.prob_clamp_epsilon)
        second = 0.3 * (1.0 - 1e-12) * math.log(1e-12)
        # The remaining pieces are the near-zero positive-entropy term.
        assert rhs == pytest.approx(kl + second, abs=1e-9)

    def test_exponent_below_one_rejected(self):
        teacher = dist([0.7, 0.3], [True, False])
        student = dist([0.5, 0.5], [True, False])
        with pytest.raises(ValueError, match="exponent below one"):
            eq_cklbound_rhs(teacher, student, betas=[4.5], hp=CklHyperparams(gamma=5.0))


class TestBoundChainScalarRoute:
    """The same inequalities the Monte-Carlo engine checks, exercised through
    the scalar loss/bound operations on independently drawn instances."""

    def test_weighted_loss_dominates_rhs_and_floor(self, rng):
        for _ in range(300):
            n = int(rng.integers(2, 9))
            s = int(rng.integers(1, min(n, 3)))
            p = rng.dirichlet(np.ones(n))
            q = rng.dirichlet(np.ones(n))
            gamma = float(rng.uniform(1.0, 7.0))
            alpha = float(rng.uniform(0.0, gamma - 1.0))
            mask = [True] * s + [False] * (n - s)
            ids = [f"d{i}" for i in range(n)]
            ranks = compute_ranks(dict(zip(ids, q)))
            beta = compute_beta(ranks, ids[:s], ids[s:], alpha).beta_vector(ids[s:])
            hp = CklHyperparams(gamma=gamma, alpha=alpha)
            teacher, student = dist(p, mask), dist(q, mask)
            lhs = ckl_loss(teacher, student, beta, hp)
            rhs = eq_cklbound_rhs(teacher, student, beta, hp)
            assert lhs >= rhs - 1e-9
            if s <= 2:
                assert lhs >= constant_lower_bound(p[s:], gamma) - 1e-9

    def test_matched_distributions_sit_above_every_bound(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 6))
            s = int(rng.integers(1, min(n, 3)))
            q = rng.dirichlet(np.ones(n))
            mask = [True] * s + [False] * (n - s)
            d = dist(q, mask)
            hp = CklHyperparams(gamma=2.0, alpha=1.0)
            assert ckl_loss(d, d, hp=hp) == pytest.approx(0.0, abs=1e-12)
            assert 0.0 >= eq_cklbound_rhs(d, d, hp=hp) - 1e-12
            assert 0.0 >= constant_lower_bound(q[s:], 2.0) - 1e-12

    def test_positive_kl_floor_tightens_as_mass_concentrates(self):
        # With q = p, the gap of sum_pos p ln(p/q) >= -sum_neg p is exactly
        # the negative teacher mass.
        for delta in (0.2, 0.05, 0.01, 1e-4):
            p = np.array([1.0 - delta, delta])
            lhs = 0.0  # q = p makes the positive KL component vanish
            gap = lhs - (-p[1])
            assert gap == pytest.approx(delta, rel=1e-12)

    def test_jensen_equality_for_equal_positives(self):
        # Both q_pos equal: Jensen's step holds with equality.
        q = np.array([0.3, 0.3, 0.4])
        lhs = np.mean(q[:2] * np.log2(q[:2]))
        total = q[:2].sum()
        rhs = (total / 2) * np.log2(total / 2)
        assert lhs == pytest.approx(rhs, abs=1e-15)


class TestVerifyBoundChain:
    def test_no_violations_at_reference_scale(self):
        report = verify_bound_chain(samples=20_000, s_max=2, seed=7)
        assert report.violations == 0
        assert report.samples_tested == 20_000
        assert set(report.per_check_violations.values()) == {0}
        assert report.constant_floor_samples == 20_000
        assert report.large_s_samples == 0

    def test_intermediate_checks_all_hold(self):
        report = verify_bound_chain(samples=5_000, s_max=2, seed=3)
        assert all(c.holds for c in report.intermediate_checks)
        assert report.ckl_value >= report.rhs_eq_cklbound - 1e-9
        assert report.ckl_value >= report.constant_bound - 1e-9

    def test_inequalities_a_through_e_hold_without_s_restriction(self):
        report = verify_bound_chain(samples=20_000, s_max=6, seed=11)
        for name in ("bernoulli", "weighted_vs_rhs", "positive_kl_floor", "jensen", "third_component_sign"):
            assert report.per_check_violations[name] == 0, name
        # The constant floor is only asserted for s <= 2; larger instances
        # are recorded, not counted.
        assert report.per_check_violations["constant_floor"] == 0
        assert report.large_s_samples > 0
        assert report.violations == 0

    def test_deterministic_under_seed(self):
        a = verify_bound_chain(samples=2_000, s_max=2, seed=42)
        b = verify_bound_chain(samples=2_000, s_max=2, seed=42)
        assert a == b

    def test_bad_arguments_rejected(self):
        with pytest.raises(ValueError):
            verify_bound_chain(samples=0)
        with pytest.raises(ValueError):
            verify_bound_chain(samples=10, s_max=0)

    def test_report_serializes(self):
        report = verify_bound_chain(samples=500, s_max=2, seed=5)
        payload = report.to_json_dict()
        assert payload["samples_tested"] == 500
        assert len(payload["intermediate_checks"]) == 6
