import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxrec import losses as L
from ctxrec import tensor as T
from ctxrec.tensor import Tensor


def _pair(target, negatives):
    t = np.asarray(target, dtype=float).reshape(-1, 1)
    n = np.atleast_2d(np.asarray(negatives, dtype=float))
    return Tensor(t, name="target"), Tensor(n, name="negatives")


class TestUnitValues:
    def test_bpr_all_equal_scores_is_ln2(self):
        t, n = _pair([0.5], [0.5, 0.5, 0.5])
        assert L.loss_bpr(t, n).values == pytest.approx(math.log(2.0), abs=1e-12)

    def test_top1_all_zero_scores_is_one(self):
        t, n = _pair([0.0], [0.0, 0.0])
        assert L.loss_top1(t, n).values == pytest.approx(1.0, abs=1e-12)

    def test_nll_zero_scores_is_log_of_candidate_count(self):
        t, n = _pair([0.0], np.zeros(100))
        assert L.loss_nll(t, n).values == pytest.approx(math.log(101.0), abs=1e-10)

    def test_bpr_hand_computed(self):
        # target 1, negatives [0, 2]: mean(softplus(-1), softplus(1))
        t, n = _pair([1.0], [0.0, 2.0])
        expected = 0.5 * (math.log1p(math.exp(-1.0)) + math.log1p(math.exp(1.0)))
        assert expected == pytest.approx(0.8132616875182228, abs=1e-12)
        assert L.loss_bpr(t, n).values == pytest.approx(expected, abs=1e-12)

    def test_top1_hand_computed(self):
        # target 1, negatives [0, 2]:
        # mean(sigma(-1) + sigma(0), sigma(1) + sigma(4))
        t, n = _pair([1.0], [0.0, 2.0])
        sig = lambda x: 1.0 / (1.0 + math.exp(-x))
        expected = 0.5 * ((sig(-1) + sig(0)) + (sig(1) + sig(4)))
        assert expected == pytest.approx(1.2410068950189543, abs=1e-12)
        assert L.loss_top1(t, n).values == pytest.approx(expected, abs=1e-12)

    def test_nll_hand_computed(self):
        t, n = _pair([1.0], [0.0, 2.0])
        expected = math.log(math.e**1 + 1.0 + math.e**2) - 1.0
        assert L.loss_nll(t, n).values == pytest.approx(expected, abs=1e-12)

    def test_batch_is_mean_of_rows(self):
        rows = [([1.0], [0.0, 2.0]), ([0.0], [0.0, 0.0]), ([-1.0], [3.0, 0.5])]
        for loss in L.LOSSES.values():
            singles = [loss(*_pair(t, n)).values for t, n in rows]
            t, n = _pair([r[0][0] for r in rows], [r[1] for r in rows])
            assert loss(t, n).values == pytest.approx(np.mean(singles), abs=1e-12)


class TestLimits:
    def test_all_losses_vanish_when_target_dominates(self):
        t, n = _pair([60.0], [-60.0, -60.0])
        assert L.loss_nll(t, n).values == pytest.approx(0.0, abs=1e-12)
        assert L.loss_bpr(t, n).values == pytest.approx(0.0, abs=1e-12)
        # TOP1 keeps the regularizer floor sigma(r_neg^2) -> 1.
        assert L.loss_top1(t, n).values == pytest.approx(1.0, abs=1e-12)

    def test_losses_grow_when_negatives_dominate(self):
        t, n = _pair([-10.0], [10.0, 10.0])
        assert L.loss_nll(t, n).values > 19.0
        assert L.loss_bpr(t, n).values > 19.0
        assert L.loss_top1(t, n).values == pytest.approx(2.0, abs=1e-6)

    @given(
        st.floats(-20, 20),
        st.lists(st.floats(-20, 20), min_size=1, max_size=8),
    )
    @settings(max_examples=100, deadline=None)
    def test_top1_bounded_between_zero_and_two(self, target, negs):
        t, n = _pair([target], negs)
        v = float(L.loss_top1(t, n).values)
        assert 0.0 < v < 2.0


class TestGradientDirections:
    @pytest.mark.parametrize("name", sorted(L.LOSSES))
    def test_raising_target_score_lowers_loss(self, name, rng):
        loss = L.LOSSES[name]
        for _ in range(20):
            t, n = _pair(rng.normal(size=3), rng.normal(size=(3, 5)))
            out = loss(t, n)
            out.backward()
            assert (t.grad < 0).all()

    @pytest.mark.parametrize("name", ["nll", "bpr"])
    def test_raising_negative_scores_raises_loss(self, name, rng):
        # TOP1 is excluded: its score regularizer pulls negative scores
        # toward zero, so its negative-score gradient can change sign.
        loss = L.LOSSES[name]
        for _ in range(20):
            t, n = _pair(rng.normal(size=3), rng.normal(size=(3, 5)))
            loss(t, n).backward()
            assert (n.grad >= 0).all()

    def test_top1_rank_gradient_sign_at_zero_negatives(self):
        # With negatives at 0 the regularizer gradient vanishes, leaving
        # only the rank push, which must be nonnegative.
        t, n = _pair([0.3, -0.7], np.zeros((2, 4)))
        L.loss_top1(t, n).backward()
        assert (n.grad >= 0).all()

    @pytest.mark.parametrize("name", sorted(L.LOSSES))
    def test_finite_difference(self, name, rng):
        loss = L.LOSSES[name]
        t, n = _pair(rng.normal(size=2), rng.normal(size=(2, 4)))
        assert T.grad_check(lambda: loss(t, n), [t, n]) < 1e-7


class TestShapes:
    def test_rejects_bad_target_shape(self):
        with pytest.raises(T.ShapeError):
            L.loss_nll(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 3))))

    def test_rejects_mismatched_batch(self):
        with pytest.raises(T.ShapeError):
            L.loss_bpr(Tensor(np.zeros((2, 1))), Tensor(np.zeros((3, 3))))

    def test_rejects_empty_negatives(self):
        with pytest.raises(T.ShapeError):
            L.loss_top1(Tensor(np.zeros((2, 1))), Tensor(np.zeros((2, 0))))
