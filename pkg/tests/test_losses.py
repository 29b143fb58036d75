"""Loss tests: closed-form reward values, hand-computed DFT examples,
compositional oracle for the total, and the metric-like properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitdecode.autodiff import Tensor, backward, finite_difference_check, ops
from gaitdecode.errors import ConfigurationError, ContractError, ShapeError
from gaitdecode.losses import (
    LossConfig,
    dft_l1_loss,
    htsr_total,
    mse_loss,
    reward_transform,
)


class TestMse:
    def test_perfect_prediction(self):
        p = Tensor(np.ones((3, 2)))
        assert mse_loss(p, Tensor(np.ones((3, 2)))).item() == 0.0

    def test_hand_value(self):
        pred = Tensor(np.array([[2.0, 0.0]]))
        target = Tensor(np.zeros((1, 2)))
        assert mse_loss(pred, target).item() == pytest.approx(2.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse_loss(Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 2))))

    def test_gradient_matches_closed_form_and_fd(self):
        rng = np.random.default_rng(0)
        pred = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        target = Tensor(rng.standard_normal((4, 3)))
        backward(mse_loss(pred, target))
        closed = 2.0 * (pred.data - target.data) / pred.size
        assert np.allclose(pred.grad, closed, atol=1e-12)
        pred.zero_grad()
        assert finite_difference_check(lambda: mse_loss(pred, target), [pred]) < 1e-4


class TestRewardTransform:
    def test_closed_form_triples(self):
        beta, eps = 0.1, 1e-6
        assert reward_transform(Tensor(np.array(0.0)), beta, eps).item() == pytest.approx(
            0.1 * np.log(1e-6), abs=1e-5
        )
        ln2 = np.log(2.0)
        assert reward_transform(Tensor(np.array(ln2)), beta, eps).item() == pytest.approx(
            ln2 + 0.1 * np.log(0.5 + 1e-6), abs=1e-5
        )
        big = reward_transform(Tensor(np.array(20.0)), beta, eps).item()
        assert big == pytest.approx(20.0, abs=1e-6)
        assert big > 20.0  # the vanished reward is a tiny positive log term

    def test_negative_loss_rejected(self):
        with pytest.raises(ContractError):
            reward_transform(Tensor(np.array(-0.1)), 0.1, 1e-6)

    def test_non_scalar_rejected(self):
        with pytest.raises(ContractError):
            reward_transform(Tensor(np.zeros(2)), 0.1, 1e-6)

    @given(st.floats(0.0, 30.0), st.floats(0.0, 30.0))
    @settings(max_examples=60, deadline=None)
    def test_strictly_increasing_and_bounded_below_identity(self, l1, l2):
        beta, eps = 0.1, 1e-6
        r1 = reward_transform(Tensor(np.array(l1)), beta, eps).item()
        r2 = reward_transform(Tensor(np.array(l2)), beta, eps).item()
        if l1 < l2:
            assert r1 < r2
        # log(1 - e^-L + eps) < 0 for every finite L at this epsilon
        assert r1 < l1 + beta * eps

    def test_gradient(self):
        loss = Tensor(np.array(0.8), requires_grad=True)
        err = finite_difference_check(
            lambda: reward_transform(loss, 0.1, 1e-6), [loss]
        )
        assert err < 1e-4


class TestDftL1:
    def test_perfect_prediction(self):
        x = Tensor(np.random.default_rng(1).standard_normal((5, 2)))
        assert dft_l1_loss(x, x).item() == 0.0

    def test_two_point_constant_hand_value(self):
        c = 1.3
        target = Tensor(np.array([[c], [c]]))
        pred = Tensor(np.zeros((2, 1)))
        # bins differ by (2c, 0) and (0, 0): mean modulus = c
        assert abs(dft_l1_loss(pred, target).item() - c) < 1e-10

    def test_impulse_hand_value(self):
        target = Tensor(np.array([[1.0], [0.0], [0.0], [0.0]]))
        pred = Tensor(np.zeros((4, 1)))
        assert abs(dft_l1_loss(pred, target).item() - 1.0) < 1e-10

    def test_triangle_inequality(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = Tensor(rng.standard_normal((6, 3)))
            y = Tensor(rng.standard_normal((6, 3)))
            z = Tensor(rng.standard_normal((6, 3)))
            assert (
                dft_l1_loss(x, z).item()
                <= dft_l1_loss(x, y).item() + dft_l1_loss(y, z).item() + 1e-12
            )

    def test_gradient_via_adjoint(self):
        rng = np.random.default_rng(3)
        pred = Tensor(rng.standard_normal((5, 2)), requires_grad=True)
        target = Tensor(rng.standard_normal((5, 2)))
        assert finite_difference_check(lambda: dft_l1_loss(pred, target), [pred]) < 1e-4


class TestHtsrTotal:
    def test_perfect_prediction_value(self):
        x = Tensor(np.random.default_rng(4).standard_normal((4, 3)))
        bd = htsr_total(x, Tensor(x.data.copy()), LossConfig())
        # 0.5*reward(0) + 0.5*reward(0) = 0.1*ln(1e-6)
        assert bd.total.item() == pytest.approx(0.1 * np.log(1e-6), abs=1e-5)

    def test_ablation_identity_with_zero_weights(self):
        rng = np.random.default_rng(5)
        pred = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        target = Tensor(rng.standard_normal((4, 3)))
        cfg = LossConfig(alpha=0.0, beta=0.0)
        bd = htsr_total(pred, target, cfg)
        assert bd.total.item() == pytest.approx(mse_loss(pred, target).item(), abs=1e-15)

    def test_mse_mode_gradients_equal_plain_mse(self):
        rng = np.random.default_rng(6)
        pv = rng.standard_normal((5, 3))
        tv = rng.standard_normal((5, 3))
        pred = Tensor(pv, requires_grad=True)
        backward(htsr_total(pred, Tensor(tv), LossConfig.for_mode("mse")).total)
        g_mode = pred.grad.copy()
        pred = Tensor(pv, requires_grad=True)
        backward(mse_loss(pred, Tensor(tv)))
        assert np.array_equal(g_mode, pred.grad)

    def test_matches_hand_composition(self):
        rng = np.random.default_rng(7)
        pred = Tensor(rng.standard_normal((6, 4)))
        target = Tensor(rng.standard_normal((6, 4)))
        cfg = LossConfig()
        bd = htsr_total(pred, target, cfg)
        t = mse_loss(pred, target)
        f = dft_l1_loss(pred, target)
        expected = 0.5 * reward_transform(f, cfg.beta, cfg.epsilon).item() + 0.5 * (
            reward_transform(t, cfg.beta, cfg.epsilon).item()
        )
        assert bd.total.item() == pytest.approx(expected, abs=1e-12)
        assert bd.time == pytest.approx(t.item(), abs=1e-15)
        assert bd.freq == pytest.approx(f.item(), abs=1e-15)

    def test_all_modes_reachable_from_config(self):
        assert LossConfig.for_mode("htsr").mode == "htsr"
        assert LossConfig.for_mode("mse").mode == "mse"
        assert LossConfig.for_mode("time_reward").mode == "time_reward"
        assert LossConfig.for_mode("time_freq").mode == "time_freq"
        with pytest.raises(ConfigurationError):
            LossConfig.for_mode("nope")

    def test_breakdown_log_record_schema(self):
        rng = np.random.default_rng(8)
        bd = htsr_total(
            Tensor(rng.standard_normal((3, 2))),
            Tensor(rng.standard_normal((3, 2))),
            LossConfig.for_mode("mse"),
        )
        rec = bd.log_record(step=7)
        assert set(rec) == {"step", "L_time", "L_time_reward", "L_freq", "L_freq_reward", "L_total"}
        assert rec["step"] == 7

    def test_invalid_config_values(self):
        with pytest.raises(ConfigurationError):
            LossConfig(alpha=1.5)
        with pytest.raises(ConfigurationError):
            LossConfig(beta=-0.1)
        with pytest.raises(ConfigurationError):
            LossConfig(epsilon=0.0)

    def test_full_gradient(self):
        rng = np.random.default_rng(9)
        pred = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
        target = Tensor(rng.standard_normal((5, 3)))
        err = finite_difference_check(
            lambda: htsr_total(pred, target, LossConfig()).total, [pred]
        )
        assert err < 1e-4
