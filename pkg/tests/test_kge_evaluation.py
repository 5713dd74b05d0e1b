import unittest
import os
import sys
from unittest import mock

import numpy as np

sys.path.append(os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'src'))

from app_config import KGE_KINDS
from kge.models import KgeModel, init_model, score_triples
from kge.evaluation import (
    tie_rank, rank_candidates, metrics_from_ranks, build_filter, evaluate_link_prediction,
    recommend_tails, report_frame, TAIL, HEAD,
)


def _line_model():
    # DistMult in one dimension: score(h, r, t) = h_val * t_val
    return KgeModel(kind='DistMult', params={'ent': np.array([[1.0], [2.0], [3.0], [4.0]]),
                                             'rel': np.array([[1.0]])},
                    entity_count=4, relation_count=1, dim=1, relation_dim=1, seed=0)


class TestTieRank(unittest.TestCase):
    def test_unique_maximum(self):
        self.assertEqual(tie_rank(np.array([0.1, 0.9, 0.3]), 1), 1)

    def test_all_equal_rounds_half_up(self):
        self.assertEqual(tie_rank(np.zeros(10), 4), 6)

    def test_partial_tie(self):
        # 1 better, 2 tied others -> 1 + 1 + 1 = 3
        self.assertEqual(tie_rank(np.array([5.0, 2.0, 2.0, 2.0, 1.0]), 1), 3)


class TestRankCandidates(unittest.TestCase):
    def test_filtered_rank_drops_known_candidates(self):
        result = rank_candidates(_line_model(), (0, 0, None), 1, [(0, 0, 1), (0, 0, 2), (0, 0, 3)])
        self.assertEqual(result.direction, TAIL)
        self.assertEqual(result.raw_rank, 3)
        self.assertEqual(result.filtered_rank, 1)

    def test_filter_is_mirror_closed(self):
        result = rank_candidates(_line_model(), (0, 0, None), 1, [(3, 0, 0)])
        self.assertEqual(result.filtered_rank, result.raw_rank - 1)

    def test_head_query(self):
        result = rank_candidates(_line_model(), (None, 0, 1), 0, [])
        self.assertEqual(result.direction, HEAD)
        self.assertEqual(result.raw_rank, 4)
        self.assertEqual(result.filtered_rank, 4)

    def test_build_filter(self):
        partners = build_filter([(0, 0, 1)], np.array([[2, 0, 0]]))
        self.assertEqual(partners[(0, 0)], {1, 2})
        self.assertEqual(partners[(1, 0)], {0})


class TestMetrics(unittest.TestCase):
    def test_hand_ranks(self):
        mr, mrr, hits = metrics_from_ranks([1, 3, 12], hits_at=(1, 3, 10))
        self.assertAlmostEqual(mr, 16 / 3)
        self.assertAlmostEqual(mrr, 17 / 36)
        self.assertAlmostEqual(hits[1], 1 / 3)
        self.assertAlmostEqual(hits[3], 2 / 3)
        self.assertAlmostEqual(hits[10], 2 / 3)

    def test_perfect_model(self):
        mr, mrr, hits = metrics_from_ranks([1, 1, 1, 1])
        self.assertEqual((mr, mrr, hits[1]), (1.0, 1.0, 1.0))


class TestEvaluateLinkPrediction(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(5)
        self.model = init_model('TransE', 4, 12, 3, seed=2)
        heads = rng.integers(12, size=40)
        tails = (heads + rng.integers(1, 12, size=40)) % 12
        self.triples = np.stack([heads, rng.integers(3, size=40), tails], axis=1)
        self.test = self.triples[:10]

    def _brute_force(self):
        known = set(map(tuple, self.triples.tolist()))
        known |= {(t, r, h) for h, r, t in known}
        raw, filtered = [], []
        for h, r, t in self.test.tolist():
            for direction in (TAIL, HEAD):
                cand = np.arange(12)
                if direction == TAIL:
                    scores = score_triples(self.model, h, r, cand)
                    truth, others = t, [c for c in range(12) if c != t and (h, r, c) in known]
                else:
                    scores = score_triples(self.model, cand, r, t)
                    truth, others = h, [c for c in range(12) if c != h and (c, r, t) in known]
                raw.append(tie_rank(scores, truth))
                scores = scores.copy()
                scores[others] = -np.inf
                filtered.append(tie_rank(scores, truth))
        return raw, filtered

    def test_matches_brute_force(self):
        raw, filtered = self._brute_force()
        report = evaluate_link_prediction(self.model, self.test, self.triples, hits_at=(1, 3, 10))
        mr, mrr, hits = metrics_from_ranks(raw, (1, 3, 10))
        fmr, fmrr, fhits = metrics_from_ranks(filtered, (1, 3, 10))
        self.assertEqual(report.queries, 20)
        self.assertAlmostEqual(report.mr, mr)
        self.assertAlmostEqual(report.mrr_filtered, fmrr)
        self.assertAlmostEqual(report.mr_filtered, fmr)
        self.assertEqual(report.hits_filtered, fhits)
        self.assertLessEqual(report.mr_filtered, report.mr)

    def test_parallel_matches_serial(self):
        serial = evaluate_link_prediction(self.model, self.test, self.triples, n_jobs=1)
        parallel = evaluate_link_prediction(self.model, self.test, self.triples, n_jobs=2)
        self.assertEqual(serial.row(), parallel.row())

    def test_empty_test_set(self):
        with self.assertRaises(ValueError):
            evaluate_link_prediction(self.model, np.zeros((0, 3)), self.triples)

    def test_report_frame_columns(self):
        report = evaluate_link_prediction(self.model, self.test, self.triples, hits_at=(1, 10))
        df = report_frame({'TransE': report})
        self.assertEqual(list(df.columns), ['model', 'MR', 'Filtered MR', 'MRR', 'Filtered MRR',
                                            'Hits@1', 'Hits@10', 'Filtered Hits@1',
                                            'Filtered Hits@10', 'queries'])


def _sorted_mid_rank(scores, truth):
    """Rank from an explicit descending sort: midpoint of the truth's tie block, rounded half up."""
    order = np.sort(scores)[::-1]
    block = np.flatnonzero(order == scores[truth])
    return int(np.floor(1 + (block[0] + block[-1]) / 2.0 + 0.5))


class TestRandomOracle(unittest.TestCase):
    """Link prediction metrics on random models and graphs against an explicit ranking."""
    CASES = 200

    def _oracle(self, model, triples, test, hits_at):
        known = {tuple(x) for x in triples.tolist()}
        known |= {(t, r, h) for h, r, t in known}
        E = model.entity_count
        raw, filtered = [], []
        for h, r, t in test.tolist():
            for anchor, truth, tail in ((h, t, True), (t, h, False)):
                cand = np.arange(E)
                scores = score_triples(model, anchor, r, cand) if tail else score_triples(model, cand, r, anchor)
                raw.append(_sorted_mid_rank(scores, truth))
                kept = np.array([c == truth or (anchor, r, c) not in known for c in range(E)])
                filtered.append(_sorted_mid_rank(np.where(kept, scores, -np.inf), truth))
        return metrics_from_ranks(raw, hits_at), metrics_from_ranks(filtered, hits_at)

    def test_reports_match_explicit_ranking(self):
        hits_at = (1, 3, 10)
        for seed in range(self.CASES):
            rng = np.random.default_rng(seed)
            kind = KGE_KINDS[int(rng.integers(len(KGE_KINDS)))]
            E = int(rng.integers(2, 51))
            R = int(rng.integers(1, 4))
            n = int(rng.integers(1, 3 * E))
            triples = np.stack([rng.integers(E, size=n), rng.integers(R, size=n),
                                rng.integers(E, size=n)], axis=1)
            test = triples[:int(rng.integers(1, min(n, 15) + 1))]
            model = init_model(kind, int(rng.integers(1, 5)), E, R, seed=seed)
            if rng.random() < 0.3 and kind not in ('RotatE', 'NTN'):
                # integer parameters give exact polynomial scores with real ties
                for v in model.params.values():
                    v[:] = np.round(v)

            report = evaluate_link_prediction(model, test, triples, hits_at=hits_at)
            (mr, mrr, hits), (fmr, fmrr, fhits) = self._oracle(model, triples, test, hits_at)
            with self.subTest(seed=seed, kind=kind):
                self.assertEqual(report.queries, 2 * len(test))
                self.assertAlmostEqual(report.mr, mr)
                self.assertAlmostEqual(report.mrr, mrr)
                self.assertEqual(report.hits, hits)
                self.assertAlmostEqual(report.mr_filtered, fmr)
                self.assertAlmostEqual(report.mrr_filtered, fmrr)
                self.assertEqual(report.hits_filtered, fhits)
                self.assertLessEqual(report.mr_filtered, report.mr)


class TestShiftInvariance(unittest.TestCase):
    def test_tie_rank_ignores_constant_shift(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            scores = rng.integers(-5, 6, size=int(rng.integers(1, 40))).astype(float)
            truth = int(rng.integers(len(scores)))
            shift = float(rng.integers(-1000, 1001))
            self.assertEqual(tie_rank(scores + shift, truth), tie_rank(scores, truth))

    def test_report_ignores_constant_score_shift(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            E = int(rng.integers(3, 30))
            # integer embeddings keep every score, shifted or not, exact
            model = KgeModel(kind='DistMult', params={'ent': rng.integers(-2, 3, size=(E, 3)).astype(float),
                                                      'rel': rng.integers(-2, 3, size=(2, 3)).astype(float)},
                             entity_count=E, relation_count=2, dim=3, relation_dim=3, seed=0)
            triples = np.stack([rng.integers(E, size=40), rng.integers(2, size=40),
                                rng.integers(E, size=40)], axis=1)
            base = evaluate_link_prediction(model, triples[:12], triples)
            shift = float(rng.integers(-50, 51))
            with mock.patch('kge.evaluation.score_triples',
                            side_effect=lambda m, h, r, t: score_triples(m, h, r, t) + shift):
                shifted = evaluate_link_prediction(model, triples[:12], triples)
            self.assertEqual(shifted.row(), base.row(), f"seed {seed}")


class TestRecommendTails(unittest.TestCase):
    def test_top_k_excludes_anchor(self):
        recs = recommend_tails(_line_model(), 3, k=2)
        self.assertEqual([e for e, _ in recs], [2, 1])
        self.assertEqual(recs[0][1], 12.0)

    def test_exclusions(self):
        recs = recommend_tails(_line_model(), 0, k=3, exclusions=[3])
        self.assertEqual([e for e, _ in recs], [2, 1])


if __name__ == '__main__':
    unittest.main()
