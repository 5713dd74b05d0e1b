"""
Relation support / relatedness scores and structural statistics of an app graph.
"""
import math
import logging
from dataclasses import dataclass, asdict

import numpy as np
import pandas as pd
import networkx as nx

from errors import UndefinedSupportError

logger = logging.getLogger(__name__)


@dataclass
class RelatednessMatrix:
    relations: tuple
    support: np.ndarray       # support[i, j] = supp(r_i -> r_j); nan where undefined
    relatedness: np.ndarray   # symmetric; nan where undefined

    def frame(self):
        return pd.DataFrame(self.relatedness, index=list(self.relations), columns=list(self.relations))


@dataclass
class GraphStats:
    nodes: int
    edges: int
    density: float
    average_degree: float
    multiplex_dyads: int
    multiplex_pairs: int
    triads_possible: int
    triads_closed: int
    open_triads: int
    degree_variance: float
    edge_connectivity: int
    diameter: int
    average_shortest_path: float

    def as_dict(self):
        return asdict(self)


def _relation_index(kg, relation):
    if isinstance(relation, str):
        return kg.relation_index[relation]
    return int(relation)


def incident_nodes(kg, relation):
    """Entities appearing as head or tail of any triple of the relation."""
    block = kg.relation_triples(_relation_index(kg, relation))
    return set(block[:, 0].tolist()) | set(block[:, 2].tolist())


def support(r_i, r_j, kg):
    nodes_i = incident_nodes(kg, r_i)
    if not nodes_i:
        raise UndefinedSupportError(f"relation {r_i!r} has no incident nodes")
    return len(nodes_i & incident_nodes(kg, r_j)) / len(nodes_i)


def _harmonic(s_ij, s_ji):
    if s_ij + s_ji == 0:
        return 0.0
    return 2.0 * s_ij * s_ji / (s_ij + s_ji)


def relatedness(r_i, r_j, kg):
    return _harmonic(support(r_i, r_j, kg), support(r_j, r_i, kg))


def relatedness_matrix(kg) -> RelatednessMatrix:
    n = kg.num_relations
    nodes = [incident_nodes(kg, r) for r in range(n)]
    supp = np.full((n, n), np.nan)
    for i in range(n):
        if not nodes[i]:
            continue
        for j in range(n):
            supp[i, j] = len(nodes[i] & nodes[j]) / len(nodes[i])

    rel = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(i, n):
            if np.isnan(supp[i, j]) or np.isnan(supp[j, i]):
                continue
            rel[i, j] = rel[j, i] = _harmonic(supp[i, j], supp[j, i])
    return RelatednessMatrix(relations=tuple(kg.relations), support=supp, relatedness=rel)


def relatedness_table(matrix: RelatednessMatrix, decimals=4):
    """
    Off-diagonal relation pairs grouped by rounded relatedness score,
    highest score first. Pairs are listed as 'i-j' over relation positions.
    """
    groups = {}
    n = len(matrix.relations)
    for i in range(n):
        for j in range(i + 1, n):
            value = matrix.relatedness[i, j]
            if np.isnan(value):
                continue
            groups.setdefault(round(float(value), decimals), []).append(f"{i}-{j}")
    rows = [(score, len(pairs), ', '.join(pairs))
            for score, pairs in sorted(groups.items(), reverse=True)]
    return pd.DataFrame(rows, columns=['relatedness', 'pair_count', 'pairs'])


def undirected_projection(kg):
    G = nx.Graph()
    G.add_nodes_from(range(kg.num_entities))
    G.add_edges_from(kg.triples[:, [0, 2]].tolist())
    return G


def _largest_component(G):
    if G.number_of_nodes() == 0:
        return G
    nodes = max(nx.connected_components(G), key=len)
    return G.subgraph(nodes)


def _multiplex_counts(kg):
    """(nodes incident to >= 2 relations, unordered pairs linked by >= 2 relations)."""
    node_rels = {}
    pair_rels = {}
    for h, r, t in kg.triples.tolist():
        node_rels.setdefault(h, set()).add(r)
        node_rels.setdefault(t, set()).add(r)
        pair_rels.setdefault((min(h, t), max(h, t)), set()).add(r)
    nodes = sum(1 for rels in node_rels.values() if len(rels) >= 2)
    pairs = sum(1 for rels in pair_rels.values() if len(rels) >= 2)
    return nodes, pairs


def size_statistics(N, E):
    """Density, average degree and possible triads from the node and edge counts alone."""
    return {
        'density': E / (N * (N - 1)) if N > 1 else 0.0,
        'average_degree': E / N if N else 0.0,
        'triads_possible': math.comb(N, 3),
    }


def graph_statistics(kg) -> GraphStats:
    N = kg.num_entities
    E = len(kg)
    sizes = size_statistics(N, E)
    G = undirected_projection(kg)

    degrees = np.array([d for _, d in G.degree()], dtype=float)
    triangles = sum(nx.triangles(G).values()) // 3
    wedges = int(sum(d * (d - 1) // 2 for d in degrees.astype(int)))
    multiplex_nodes, multiplex_pairs = _multiplex_counts(kg)

    lcc = _largest_component(G)
    if lcc.number_of_edges() > 0:
        diameter = nx.diameter(lcc)
        aspl = nx.average_shortest_path_length(lcc)
    else:
        diameter, aspl = 0, 0.0
    connectivity = nx.edge_connectivity(G) if N > 1 else 0

    stats = GraphStats(
        nodes=N,
        edges=E,
        density=sizes['density'],
        average_degree=sizes['average_degree'],
        multiplex_dyads=multiplex_nodes,
        multiplex_pairs=multiplex_pairs,
        triads_possible=sizes['triads_possible'],
        triads_closed=triangles,
        open_triads=wedges - 3 * triangles,
        degree_variance=float(degrees.var()) if N else 0.0,
        edge_connectivity=int(connectivity),
        diameter=int(diameter),
        average_shortest_path=float(aspl),
    )
    logger.info(f"[STATS] nodes={N} edges={E} density={stats.density:.5f} diameter={stats.diameter}")
    return stats


def stats_frame(stats: GraphStats):
    return pd.DataFrame(list(stats.as_dict().items()), columns=['statistic', 'value'])
