import math

import numpy as np
import pytest
import torch

from echo_vlsm.errors import TrainingError
from echo_vlsm.training.losses import (
    DICE_EPSILON,
    bce_loss,
    combined_loss,
    soft_dice_loss,
)


class TestSoftDice:
    def test_perfect_prediction_is_zero(self):
        target = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        assert float(soft_dice_loss(target, target)) <= 1e-6

    def test_worked_2x2_example(self):
        # p = all 0.5, t = all 1 on a 2x2 grid: 1 - (2*2+eps)/(2+4+eps)
        p = torch.full((2, 2), 0.5, dtype=torch.float64)
        t = torch.ones((2, 2), dtype=torch.float64)
        eps = DICE_EPSILON
        expected = 1.0 - (2.0 * 2.0 + eps) / (2.0 + 4.0 + eps)
        assert abs(float(soft_dice_loss(p, t)) - expected) <= 1e-12
        assert abs(float(soft_dice_loss(p, t)) - 1.0 / 3.0) < 1e-6

    def test_batch_averages_per_sample(self):
        # two samples with different individual losses; batch = their mean
        a_p = torch.tensor([[1.0, 1.0], [1.0, 1.0]], dtype=torch.float64)
        a_t = torch.ones((2, 2), dtype=torch.float64)
        b_p = torch.full((2, 2), 0.5, dtype=torch.float64)
        b_t = torch.ones((2, 2), dtype=torch.float64)
        batch_p = torch.stack([a_p, b_p])
        batch_t = torch.stack([a_t, b_t])
        individual = (
            float(soft_dice_loss(a_p, a_t)) + float(soft_dice_loss(b_p, b_t))
        ) / 2.0
        assert abs(float(soft_dice_loss(batch_p, batch_t)) - individual) <= 1e-12

    def test_empty_both_is_zero_loss(self):
        zero = torch.zeros((3, 3), dtype=torch.float64)
        assert float(soft_dice_loss(zero, zero)) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(TrainingError):
            soft_dice_loss(torch.zeros(2, 2), torch.zeros(2, 3))

    def test_numpy_inputs_accepted(self):
        loss = soft_dice_loss(np.full((2, 2), 0.5), np.ones((2, 2)))
        assert 0.3 < float(loss) < 0.34


class TestBce:
    def test_uniform_half_gives_ln2_for_any_target(self):
        p = torch.full((4, 4), 0.5, dtype=torch.float64)
        for t in (torch.zeros((4, 4), dtype=torch.float64),
                  torch.ones((4, 4), dtype=torch.float64)):
            assert abs(float(bce_loss(p, t)) - math.log(2.0)) <= 1e-15

    def test_clamping_keeps_extreme_probabilities_finite(self):
        p = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
        t = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
        loss = float(bce_loss(p, t))
        assert math.isfinite(loss)
        assert abs(loss - (-math.log(1e-7))) < 1e-6


class TestCombined:
    def test_zero_bce_weight_reproduces_soft_dice_exactly(self):
        rng = np.random.default_rng(3)
        p = torch.tensor(rng.random((2, 5, 5)), dtype=torch.float64)
        t = torch.tensor((rng.random((2, 5, 5)) > 0.5).astype(np.float64))
        assert torch.equal(
            combined_loss(p, t, dice_weight=1.0, bce_weight=0.0),
            soft_dice_loss(p, t),
        )

    def test_default_weights_linear_combination(self):
        rng = np.random.default_rng(4)
        p = torch.tensor(rng.uniform(0.01, 0.99, (3, 4, 4)), dtype=torch.float64)
        t = torch.tensor((rng.random((3, 4, 4)) > 0.5).astype(np.float64))
        expected = soft_dice_loss(p, t) + 0.2 * bce_loss(p, t)
        assert abs(float(combined_loss(p, t)) - float(expected)) <= 1e-15

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(5)
        values = rng.uniform(0.05, 0.95, (3, 3))
        targets = torch.tensor(
            (rng.random((3, 3)) > 0.5).astype(np.float64), dtype=torch.float64
        )
        p = torch.tensor(values, dtype=torch.float64, requires_grad=True)
        combined_loss(p, targets).backward()
        analytic = p.grad.detach().numpy()

        h = 1e-6
        for i in range(3):
            for j in range(3):
                plus = values.copy()
                plus[i, j] += h
                minus = values.copy()
                minus[i, j] -= h
                numeric = (
                    float(combined_loss(torch.tensor(plus), targets))
                    - float(combined_loss(torch.tensor(minus), targets))
                ) / (2 * h)
                assert analytic[i, j] == pytest.approx(numeric, rel=1e-4, abs=1e-8)
