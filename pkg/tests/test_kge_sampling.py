import unittest
import os
import sys

import numpy as np

sys.path.append(os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'src'))

from kgbuild import KnowledgeGraph
from kge.sampling import corrupt_triple, corrupt_among, corrupt_batch
from errors import CorruptionExhaustedError


def _kg():
    return KnowledgeGraph(['a', 'b', 'c'], ['ADSIMILAR'], [(0, 0, 1), (1, 0, 2)])


class TestCorruptTriple(unittest.TestCase):
    def test_one_slot_replaced(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            h, r, t = corrupt_triple((0, 0, 1), _kg(), rng)
            self.assertEqual(r, 0)
            self.assertTrue((h != 0) != (t != 1))

    def test_same_seed_same_corruption(self):
        a = corrupt_triple((0, 0, 1), _kg(), np.random.default_rng(9))
        b = corrupt_triple((0, 0, 1), _kg(), np.random.default_rng(9))
        self.assertEqual(a, b)

    def test_filter_finds_the_only_false_corruption(self):
        known = {(0, 0, 1), (0, 0, 0), (1, 0, 1), (2, 0, 1)}
        for seed in range(10):
            out = corrupt_among((0, 0, 1), 3, np.random.default_rng(seed), filter_true=True, known=known)
            self.assertEqual(out, (0, 0, 2))

    def test_filter_uses_graph_triples_by_default(self):
        out = corrupt_triple((0, 0, 1), _kg(), np.random.default_rng(1), filter_true=True)
        self.assertNotIn(out, _kg().triple_set())

    def test_exhaustion(self):
        known = {(h, 0, t) for h in range(3) for t in range(3)}
        with self.assertRaises(CorruptionExhaustedError):
            corrupt_among((0, 0, 1), 3, np.random.default_rng(0), filter_true=True, known=known)

    def test_single_entity(self):
        with self.assertRaises(CorruptionExhaustedError):
            corrupt_among((0, 0, 0), 1, np.random.default_rng(0))


class TestCorruptBatch(unittest.TestCase):
    def test_shape_and_single_slot_change(self):
        batch = np.array([[0, 0, 1], [2, 1, 3], [4, 0, 0]])
        out = corrupt_batch(batch, 5, np.random.default_rng(3), negatives_per_positive=4)
        self.assertEqual(out.shape, (3, 4, 3))
        changed = (out != batch[:, None, :])
        np.testing.assert_array_equal(changed.sum(axis=2), 1)
        self.assertFalse(changed[:, :, 1].any())


if __name__ == '__main__':
    unittest.main()
