import unittest
import os
import sys
import math

import numpy as np

sys.path.append(os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'src'))

from kge.losses import loss_and_grad, batch_loss, LOSS_FAMILIES
from kge.optimizers import SGD, Adam, make_optimizer
from errors import TrainingError


class TestLossValues(unittest.TestCase):
    def test_satisfied_margin(self):
        self.assertEqual(batch_loss('pairwise_margin', [5.0], [[1.0]], margin=1.0), 0.0)

    def test_violated_margin(self):
        self.assertEqual(batch_loss('pairwise_margin', [0.0], [[0.0]], margin=1.0), 1.0)

    def test_logistic_limit(self):
        self.assertLess(batch_loss('pointwise_logistic', [50.0], [[-50.0]]), 1e-20)

    def test_logistic_at_zero(self):
        self.assertAlmostEqual(batch_loss('pointwise_logistic', [0.0], [[0.0]]), 2 * math.log(2))

    def test_multiclass_uniform(self):
        self.assertAlmostEqual(batch_loss('multiclass', [0.0], [[0.0, 0.0, 0.0]]), math.log(4))

    def test_losses_are_nonnegative(self):
        rng = np.random.default_rng(0)
        pos, neg = rng.normal(size=8), rng.normal(size=(8, 3))
        for family in LOSS_FAMILIES:
            self.assertGreaterEqual(batch_loss(family, pos, neg), 0.0)

    def test_empty_batch(self):
        with self.assertRaises(TrainingError):
            loss_and_grad('pairwise_margin', [], [])

    def test_unknown_family(self):
        with self.assertRaises(ValueError):
            loss_and_grad('hinge2', [1.0], [[0.0]])


class TestLossGradients(unittest.TestCase):
    def test_gradients_match_central_differences(self):
        rng = np.random.default_rng(2)
        pos, neg = rng.normal(size=5), rng.normal(size=(5, 3))
        eps = 1e-6
        for family in LOSS_FAMILIES:
            with self.subTest(family=family):
                _, d_pos, d_neg = loss_and_grad(family, pos, neg, margin=0.7, temperature=0.5)
                for i in range(len(pos)):
                    up, down = pos.copy(), pos.copy()
                    up[i] += eps
                    down[i] -= eps
                    numeric = (batch_loss(family, up, neg, 0.7, 0.5) - batch_loss(family, down, neg, 0.7, 0.5)) / (2 * eps)
                    self.assertAlmostEqual(d_pos[i], numeric, places=5)
                if family == 'self_adversarial':
                    # weights are held constant in the gradient
                    continue
                for idx in np.ndindex(neg.shape):
                    up, down = neg.copy(), neg.copy()
                    up[idx] += eps
                    down[idx] -= eps
                    numeric = (batch_loss(family, pos, up, 0.7, 0.5) - batch_loss(family, pos, down, 0.7, 0.5)) / (2 * eps)
                    self.assertAlmostEqual(d_neg[idx], numeric, places=5)


class TestOptimizers(unittest.TestCase):
    def test_sgd_step(self):
        params = {'w': np.array([1.0, 2.0])}
        SGD(lr=0.5).step(params, {'w': np.array([2.0, -2.0])})
        np.testing.assert_allclose(params['w'], [0.0, 3.0])

    def test_adam_first_step_moves_by_lr(self):
        params = {'w': np.array([1.0, -1.0])}
        Adam(lr=0.1).step(params, {'w': np.array([3.0, -0.2])})
        np.testing.assert_allclose(params['w'], [0.9, -0.9], atol=1e-6)

    def test_zero_lr_leaves_params(self):
        params = {'w': np.array([1.0, -1.0])}
        make_optimizer('adam', 0.0).step(params, {'w': np.array([3.0, -0.2])})
        np.testing.assert_array_equal(params['w'], [1.0, -1.0])

    def test_unknown_optimizer(self):
        with self.assertRaises(ValueError):
            make_optimizer('rmsprop', 0.1)


if __name__ == '__main__':
    unittest.main()
