import math

import numpy as np
import pytest
from scipy.optimize import brentq

from ckl.core import CklHyperparams
from ckl.gradients import (
    bkl_grad_q,
    bkl_grad_ratio,
    central_difference,
    check_score_gradients,
    check_term_gradients,
    ckl_grad_q,
    curve_sweep,
    grad_ratio,
    kl_grad_q,
    loss_grad_scores,
    random_instance,
)
from ckl.losses import BklParams

from conftest import make_instance


class TestKlGrad:
    def test_matched_pair(self):
        assert kl_grad_q(0.5, 0.5) == pytest.approx(-1.0)

    def test_teacher_dominates(self):
        assert kl_grad_q(0.5, 0.25) == pytest.approx(-2.0)

    def test_vacuous_term(self):
        assert kl_grad_q(0.0, 0.3) == 0.0


class TestCklGrad:
    def test_positive_at_matched_pair(self):
        # Log term vanishes, leaving -(1-q)^gamma p/q.
        assert ckl_grad_q(0.5, 0.5, True, 5.0) == pytest.approx(-0.03125, rel=1e-12)

    def test_negative_at_matched_pair(self):
        assert ckl_grad_q(0.5, 0.5, False, 5.0, 0.0) == pytest.approx(-0.03125, rel=1e-12)

    def test_positive_vanishes_at_upper_boundary(self):
        assert abs(ckl_grad_q(0.3, 1.0 - 1e-12, True, 5.0)) < 1e-9

    def test_exponent_below_one_rejected(self):
        with pytest.raises(ValueError, match="exponent below one"):
            ckl_grad_q(0.5, 0.5, False, 5.0, 4.5)


class TestGradRatio:
    def test_positive_matched_pair(self):
        assert grad_ratio(0.5, 0.5, True, 5.0) == pytest.approx(0.5**5, rel=1e-12)

    def test_negative_matched_pair(self):
        assert grad_ratio(0.5, 0.5, False, 5.0, 0.0) == pytest.approx(0.5**5, rel=1e-12)

    def test_positive_hand_value(self):
        # q = 0.5, p/q = e: (0.5)^4 (5*0.5*1 + 0.5) = 0.1875.
        p = 0.5 * math.e
        assert grad_ratio(p, 0.5, True, 5.0) == pytest.approx(0.1875, rel=1e-12)

    def test_zero_teacher_rejected(self):
        with pytest.raises(ValueError, match="ratio undefined"):
            grad_ratio(0.0, 0.5, True, 5.0)

    def test_identity_with_ckl_grad(self, rng):
        # ckl_grad_q == grad_ratio * kl_grad_q wherever p > 0.
        draws = 10_000
        p = rng.uniform(1e-3, 1.0, size=draws)
        q = rng.uniform(1e-3, 1.0 - 1e-3, size=draws)
        gamma = rng.uniform(1.0, 7.0, size=draws)
        beta = rng.uniform(-1.0, 1.0, size=draws) * (gamma - 1.0)
        is_pos = rng.uniform(size=draws) < 0.5
        direct = ckl_grad_q(p, q, is_pos, gamma, beta)
        via_ratio = grad_ratio(p, q, is_pos, gamma, beta) * kl_grad_q(p, q)
        assert np.max(np.abs(direct - via_ratio)) < 1e-10

    def test_sign_structure(self, rng):
        # Positive docs: g > 0 whenever p >= q; g < 0 exactly when
        # ln(p/q) < -(1-q)/(gamma q). Negative docs: g > 0 whenever p <= q.
        for _ in range(5000):
            p = rng.uniform(1e-3, 1.0)
            q = rng.uniform(1e-3, 1.0 - 1e-3)
            gamma = rng.uniform(1.0, 7.0)
            g_pos = grad_ratio(p, q, True, gamma)
            if p >= q:
                assert g_pos > 0.0
            assert (g_pos < 0.0) == (math.log(p / q) < -(1.0 - q) / (gamma * q))
            g_neg = grad_ratio(p, q, False, gamma, 0.0)
            if p <= q:
                assert g_neg > 0.0


class TestBklGradRatio:
    def test_zero_lambda_is_unity(self, rng):
        p = rng.uniform(0.05, 0.95, size=100)
        q = rng.uniform(0.05, 0.95, size=100)
        is_pos = rng.uniform(size=100) < 0.5
        np.testing.assert_allclose(bkl_grad_ratio(p, q, is_pos, 0.0), 1.0, rtol=1e-15)

    def test_matches_finite_difference_ratio(self, rng):
        # The analytic ratio equals FD(bkl term)/FD(kl term).
        for _ in range(300):
            p = rng.uniform(0.05, 0.95)
            q = rng.uniform(0.05, 0.95)
            lam = rng.uniform(0.0, 0.5)
            is_pos = bool(rng.uniform() < 0.5)
            kl_term = lambda x: p * (math.log(p) - math.log(x))
            if is_pos:
                bkl_term = lambda x: kl_term(x) + lam * x * math.log(x)
            else:
                bkl_term = lambda x: kl_term(x) + lam * x
            numeric = central_difference(bkl_term, q) / central_difference(kl_term, q)
            assert bkl_grad_ratio(p, q, is_pos, lam) == pytest.approx(numeric, rel=1e-6, abs=1e-6)

    def test_golden_matched_pair(self):
        # p = q = 0.5, positive, lam = 0.1; frozen from the FD oracle.
        kl_term = lambda x: 0.5 * (math.log(0.5) - math.log(x))
        bkl_term = lambda x: kl_term(x) + 0.1 * x * math.log(x)
        golden = central_difference(bkl_term, 0.5) / central_difference(kl_term, 0.5)
        assert golden == pytest.approx(0.9693147180, abs=1e-8)
        assert bkl_grad_ratio(0.5, 0.5, True, 0.1) == pytest.approx(golden, rel=1e-8)

    def test_zero_teacher_rejected(self):
        with pytest.raises(ValueError, match="ratio undefined"):
            bkl_grad_ratio(0.0, 0.5, True, 0.1)


class TestLossGradScores:
    def test_kl_stationary_at_matched_scores(self):
        inst = make_instance([1.0, 0.2, -0.7], [1.0, 0.2, -0.7], 1)
        grad = loss_grad_scores(inst, "kl")
        np.testing.assert_allclose(grad, 0.0, atol=1e-9)

    def test_probability_losses_sum_to_zero(self, rng):
        # Softmax Jacobian rows sum to zero, so score gradients do too.
        for _ in range(50):
            inst = random_instance(rng)
            for kind in ("kl", "ckl", "bkl", "nll", "kl_nll"):
                grad = loss_grad_scores(inst, kind)
                assert abs(grad.sum()) < 1e-9

    def test_margin_mse_gradient_descends(self):
        inst = make_instance([2.0, 0.0], [0.5, 0.0], 1)
        grad = loss_grad_scores(inst, "margin_mse")
        # Student margin is too small: the positive's score must grow.
        assert grad[0] < 0.0 and grad[1] > 0.0

    def test_finite_difference_agreement(self):
        reports = check_score_gradients(instances=25, seed=99)
        for kind, report in reports.items():
            assert report.max_rel_error < 1e-6, kind


class TestTermGradientOracle:
    def test_thousand_draws_under_tolerance(self):
        reports = check_term_gradients(draws=1000)
        for kind, report in reports.items():
            assert report.max_rel_error < 1e-6, kind
            assert report.analytic.shape == report.numeric.shape


class TestCurveSweep:
    def setup_method(self):
        self.rows = curve_sweep(gamma=5.0, beta=0.0, lam=0.1)

    def _branch(self, name, q):
        pts = [r for r in self.rows if r.branch == name and r.q == q]
        return sorted(pts, key=lambda r: r.pq_ratio)

    def test_all_implied_teacher_probs_valid(self):
        for r in self.rows:
            assert 0.0 < r.pq_ratio * r.q < 1.0

    def test_positive_branch_increasing(self):
        for q in (0.1, 0.3, 0.5):
            g = [r.g_ckl for r in self._branch("positive", q)]
            assert all(a < b for a, b in zip(g, g[1:]))

    def test_negative_branch_decreasing(self):
        for q in (0.1, 0.3, 0.5):
            g = [r.g_ckl for r in self._branch("negative", q)]
            assert all(a > b for a, b in zip(g, g[1:]))

    def test_positive_root_matches_closed_form(self):
        # g = 0 exactly where gamma q ln(p/q) + 1 - q = 0.
        gamma = 5.0
        for q in (0.1, 0.3, 0.5):
            root = brentq(
                lambda r: grad_ratio(r * q, q, True, gamma), 0.05, 1.95, xtol=1e-12
            )
            closed = math.exp(-(1.0 - q) / (gamma * q))
            assert abs(root - closed) < 1e-8

    def test_negative_root_matches_closed_form(self):
        # g = 0 exactly where (gamma - beta) ln(p/q) = 1.
        gamma, beta = 5.0, 0.0
        for q in (0.1, 0.3, 0.5):
            root = brentq(
                lambda r: grad_ratio(r * q, q, False, gamma, beta), 0.05, 1.95, xtol=1e-12
            )
            assert abs(root - math.exp(1.0 / (gamma - beta))) < 1e-8

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            curve_sweep(q_grid=())


class TestBetaHeldConstant:
    def test_score_gradient_ignores_rank_crossings(self):
        # FD across a rank crossing must still match because the bias is
        # frozen at its pre-step value.
        inst = make_instance([1.0, 0.5, 0.4], [1.0, 0.5001, 0.5], 1)
        hp = CklHyperparams(gamma=5.0, alpha=1.0)
        betas = np.array([0.25, -0.25])
        grad = loss_grad_scores(inst, "ckl", hp, betas)
        from ckl.losses import instance_loss

        h = 1e-6
        scores = inst.student_scores()
        for k in range(3):
            delta = np.zeros(3)
            delta[k] = h

            def at(s):
                shifted = make_instance(inst.teacher_scores(), s, 1)
                return instance_loss(shifted, "ckl", hp, betas)

            numeric = (at(scores + delta) - at(scores - delta)) / (2 * h)
            assert grad[k] == pytest.approx(numeric, rel=1e-6, abs=1e-9)
