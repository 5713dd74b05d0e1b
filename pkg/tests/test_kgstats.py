import unittest
import os
import sys
import math
import itertools

import numpy as np

sys.path.append(os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'src'))

from kgbuild import KnowledgeGraph
from kgstats import (
    incident_nodes, support, relatedness, relatedness_matrix, relatedness_table,
    graph_statistics, size_statistics, stats_frame,
)
from errors import UndefinedSupportError

RELATIONS = ['ADSIMILAR', 'VSIMILAR', 'CRSIMILAR']


def _path_graph():
    # 1 - 0 - 2 - 3 once projected; CRSIMILAR has no triples
    return KnowledgeGraph(['a', 'b', 'c', 'd'], RELATIONS,
                          [(0, 0, 1), (1, 0, 0), (0, 1, 2), (2, 1, 3)])


class TestRelatedness(unittest.TestCase):
    def test_support_and_harmonic_mean(self):
        kg = _path_graph()
        self.assertEqual(incident_nodes(kg, 'ADSIMILAR'), {0, 1})
        self.assertAlmostEqual(support('ADSIMILAR', 'VSIMILAR', kg), 0.5)
        self.assertAlmostEqual(support('VSIMILAR', 'ADSIMILAR', kg), 1 / 3)
        self.assertAlmostEqual(relatedness('ADSIMILAR', 'VSIMILAR', kg), 0.4)
        self.assertAlmostEqual(relatedness('ADSIMILAR', 'ADSIMILAR', kg), 1.0)

    def test_disjoint_relations_score_zero(self):
        kg = KnowledgeGraph(['a', 'b', 'c', 'd'], RELATIONS[:2], [(0, 0, 1), (2, 1, 3)])
        self.assertEqual(relatedness(0, 1, kg), 0.0)

    def test_empty_relation_is_undefined(self):
        kg = _path_graph()
        with self.assertRaises(UndefinedSupportError):
            support('CRSIMILAR', 'ADSIMILAR', kg)
        matrix = relatedness_matrix(kg)
        self.assertTrue(np.isnan(matrix.relatedness[2, 0]))
        self.assertTrue(np.isnan(matrix.support[2, 1]))

    def test_matrix_is_symmetric_with_unit_diagonal(self):
        matrix = relatedness_matrix(_path_graph())
        block = matrix.relatedness[:2, :2]
        np.testing.assert_allclose(block, block.T)
        np.testing.assert_allclose(np.diag(block), [1.0, 1.0])
        self.assertEqual(list(matrix.frame().columns), RELATIONS)

    def test_table_groups_pairs_by_score(self):
        table = relatedness_table(relatedness_matrix(_path_graph()))
        self.assertEqual(table.shape[0], 1)
        self.assertAlmostEqual(table.loc[0, 'relatedness'], 0.4)
        self.assertEqual(table.loc[0, 'pairs'], '0-1')


class TestGraphStatistics(unittest.TestCase):
    def test_path_graph(self):
        stats = graph_statistics(_path_graph())
        self.assertEqual(stats.nodes, 4)
        self.assertEqual(stats.edges, 4)
        self.assertAlmostEqual(stats.density, 4 / 12)
        self.assertAlmostEqual(stats.average_degree, 1.0)
        self.assertEqual(stats.triads_possible, math.comb(4, 3))
        self.assertEqual(stats.triads_closed, 0)
        self.assertEqual(stats.open_triads, 2)
        self.assertEqual(stats.multiplex_dyads, 1)
        self.assertEqual(stats.multiplex_pairs, 0)
        self.assertAlmostEqual(stats.degree_variance, 0.25)
        self.assertEqual(stats.edge_connectivity, 1)
        self.assertEqual(stats.diameter, 3)
        self.assertAlmostEqual(stats.average_shortest_path, 10 / 6)

    def test_triangle_is_closed(self):
        kg = KnowledgeGraph(['a', 'b', 'c'], RELATIONS[:2], [(0, 0, 1), (1, 0, 2), (2, 1, 0), (0, 1, 1)])
        stats = graph_statistics(kg)
        self.assertEqual(stats.triads_closed, 1)
        self.assertEqual(stats.open_triads, 0)
        self.assertEqual(stats.multiplex_pairs, 1)
        self.assertEqual(stats.diameter, 1)

    def test_disconnected_graph_uses_largest_component(self):
        kg = KnowledgeGraph(['a', 'b', 'c', 'd', 'e'], RELATIONS[:1], [(0, 0, 1), (1, 0, 2), (3, 0, 4)])
        stats = graph_statistics(kg)
        self.assertEqual(stats.edge_connectivity, 0)
        self.assertEqual(stats.diameter, 2)

    def test_graph_without_edges(self):
        stats = graph_statistics(KnowledgeGraph(['a', 'b'], RELATIONS[:1], []))
        self.assertEqual(stats.diameter, 0)
        self.assertEqual(stats.average_shortest_path, 0.0)

    def test_closed_form_sizes(self):
        sizes = size_statistics(1793, 21433)
        self.assertAlmostEqual(sizes['density'], 0.00667, delta=1e-5)
        self.assertAlmostEqual(sizes['average_degree'], 11.95, delta=0.01)
        self.assertEqual(sizes['triads_possible'], 959097216)

    def test_stats_frame(self):
        df = stats_frame(graph_statistics(_path_graph()))
        self.assertEqual(list(df.columns), ['statistic', 'value'])
        self.assertIn('diameter', df['statistic'].tolist())


def _random_graph(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, 9))
    R = int(rng.integers(1, len(RELATIONS) + 1))
    triples = []
    for _ in range(int(rng.integers(0, 21))):
        h, t = rng.choice(N, size=2, replace=False)
        triples.append((int(h), int(rng.integers(R)), int(t)))
    return KnowledgeGraph([f"app{i}" for i in range(N)], RELATIONS[:R], triples)


def _exhaustive_statistics(kg):
    """Every statistic recomputed by enumeration over the adjacency matrix."""
    N = kg.num_entities
    triples = sorted(set(map(tuple, kg.triples.tolist())))
    A = np.zeros((N, N), dtype=bool)
    for h, _, t in triples:
        A[h, t] = A[t, h] = True
    out = {'nodes': N, 'edges': len(triples),
           'density': len(triples) / (N * (N - 1)), 'average_degree': len(triples) / N,
           'triads_possible': math.comb(N, 3)}

    out['triads_closed'] = sum(1 for a, b, c in itertools.combinations(range(N), 3)
                               if A[a, b] and A[b, c] and A[a, c])
    out['open_triads'] = sum(1 for v in range(N)
                             for a, b in itertools.combinations(np.flatnonzero(A[v]).tolist(), 2)
                             if not A[a, b])
    out['degree_variance'] = float(np.var(A.sum(axis=1)))

    node_rels = {v: {r for h, r, t in triples if v in (h, t)} for v in range(N)}
    pair_rels = {}
    for h, r, t in triples:
        pair_rels.setdefault(frozenset((h, t)), set()).add(r)
    out['multiplex_dyads'] = sum(1 for rels in node_rels.values() if len(rels) >= 2)
    out['multiplex_pairs'] = sum(1 for rels in pair_rels.values() if len(rels) >= 2)

    # Floyd-Warshall
    dist = np.where(A, 1.0, np.inf)
    np.fill_diagonal(dist, 0.0)
    for k in range(N):
        dist = np.minimum(dist, dist[:, [k]] + dist[[k], :])
    components = {frozenset(np.flatnonzero(np.isfinite(dist[v])).tolist()) for v in range(N)}
    largest = max(len(c) for c in components)
    out['lcc_candidates'] = set()
    for comp in components:
        if len(comp) != largest:
            continue
        if largest == 1:
            out['lcc_candidates'].add((0, 0.0))
            continue
        idx = sorted(comp)
        sub = dist[np.ix_(idx, idx)]
        out['lcc_candidates'].add((int(sub.max()), round(sub.sum() / (largest * (largest - 1)), 9)))

    cut = len(triples)
    for size in range(1, N):
        for side in itertools.combinations(range(N), size):
            inside = np.zeros(N, dtype=bool)
            inside[list(side)] = True
            cut = min(cut, int(np.sum(A[np.ix_(inside, ~inside)])))
    out['edge_connectivity'] = cut
    return out


class TestStatisticsByEnumeration(unittest.TestCase):
    """graph_statistics on small random graphs against exhaustive enumeration."""

    def test_random_small_graphs(self):
        for seed in range(80):
            kg = _random_graph(seed)
            stats = graph_statistics(kg)
            expected = _exhaustive_statistics(kg)
            with self.subTest(seed=seed, nodes=kg.num_entities, edges=len(kg)):
                for name in ('nodes', 'edges', 'triads_possible', 'triads_closed', 'open_triads',
                             'multiplex_dyads', 'multiplex_pairs', 'edge_connectivity'):
                    self.assertEqual(getattr(stats, name), expected[name], name)
                for name in ('density', 'average_degree', 'degree_variance'):
                    self.assertAlmostEqual(getattr(stats, name), expected[name], msg=name)
                self.assertIn((stats.diameter, round(stats.average_shortest_path, 9)),
                              expected['lcc_candidates'])


if __name__ == '__main__':
    unittest.main()
