"""
Raw and filtered link-prediction ranking.

Each test triple yields a tail query (h, r, ?) and a head query (?, r, t).
Ranks are tie-averaged. The filter removes candidates that form a known
triple with the query (in either direction, since similarity links are
symmetric), but never the true answer.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from app_config import HITS_AT
from .models import score_triples

logger = logging.getLogger(__name__)

SCORE_BLOCK = 16384   # candidate scores per chunk
TAIL, HEAD = 'tail_corrupted', 'head_corrupted'


@dataclass
class RankResult:
    query: tuple
    direction: str
    raw_rank: int
    filtered_rank: int


@dataclass
class EvalReport:
    mr: float
    mr_filtered: float
    mrr: float
    mrr_filtered: float
    hits: dict = field(default_factory=dict)
    hits_filtered: dict = field(default_factory=dict)
    queries: int = 0

    def row(self, name=None):
        out = {} if name is None else {'model': name}
        out.update({'MR': self.mr, 'Filtered MR': self.mr_filtered,
                    'MRR': self.mrr, 'Filtered MRR': self.mrr_filtered})
        for k in sorted(self.hits):
            out[f'Hits@{k}'] = self.hits[k]
        for k in sorted(self.hits_filtered):
            out[f'Filtered Hits@{k}'] = self.hits_filtered[k]
        out['queries'] = self.queries
        return out


def report_frame(reports):
    """{name: EvalReport} -> one row per model."""
    return pd.DataFrame([rep.row(name) for name, rep in reports.items()])


def build_filter(*triple_sets):
    """(entity, relation) -> partner entities, closed under mirroring."""
    partners = {}
    for triples in triple_sets:
        for h, r, t in np.asarray(list(triples) if not isinstance(triples, np.ndarray) else triples,
                                  dtype=np.int64).reshape(-1, 3).tolist():
            partners.setdefault((h, r), set()).add(t)
            partners.setdefault((t, r), set()).add(h)
    return partners


def tie_rank(scores, truth):
    """1 + strictly better + ties/2, rounded half up."""
    s = scores[truth]
    better = int(np.sum(scores > s))
    ties = int(np.sum(scores == s)) - 1
    return int(np.floor(1 + better + ties / 2.0 + 0.5))


def _tie_ranks(block, truths):
    s = block[np.arange(len(truths)), truths][:, None]
    better = np.sum(block > s, axis=1)
    ties = np.sum(block == s, axis=1) - 1
    return np.floor(1 + better + ties / 2.0 + 0.5).astype(np.int64)


def _score_open_slot(model, queries, direction):
    """(q, E) scores with the open slot swept over every entity."""
    E = model.entity_count
    q = len(queries)
    cand = np.tile(np.arange(E), q)
    rep = np.repeat(queries, E, axis=0)
    if direction == TAIL:
        scores = score_triples(model, rep[:, 0], rep[:, 1], cand)
    else:
        scores = score_triples(model, cand, rep[:, 1], rep[:, 2])
    return scores.reshape(q, E)


def _rank_block(model, queries, direction, partners):
    block = _score_open_slot(model, queries, direction)
    truths = queries[:, 2] if direction == TAIL else queries[:, 0]
    anchors = queries[:, 0] if direction == TAIL else queries[:, 2]
    raw = _tie_ranks(block, truths)

    filtered_block = block.copy()
    for i, (anchor, rel, truth) in enumerate(zip(anchors.tolist(), queries[:, 1].tolist(), truths.tolist())):
        known = partners.get((anchor, rel))
        if known:
            drop = [e for e in known if e != truth]
            filtered_block[i, drop] = -np.inf
    filtered = _tie_ranks(filtered_block, truths)
    return raw, filtered


def rank_candidates(model, query, truth, filter_set) -> RankResult:
    """query is (h, r, None) for a tail query or (None, r, t) for a head query."""
    h, r, t = query
    direction = TAIL if t is None else HEAD
    full = np.array([[h if h is not None else truth, r, t if t is not None else truth]], dtype=np.int64)
    partners = filter_set if isinstance(filter_set, dict) else build_filter(filter_set)
    raw, filtered = _rank_block(model, full, direction, partners)
    return RankResult(query=tuple(query), direction=direction,
                      raw_rank=int(raw[0]), filtered_rank=int(filtered[0]))


def metrics_from_ranks(ranks, hits_at=HITS_AT):
    ranks = np.asarray(ranks, dtype=float)
    mr = float(ranks.mean())
    mrr = float(np.mean(1.0 / ranks))
    hits = {k: float(np.mean(ranks <= k)) for k in hits_at}
    return mr, mrr, hits


def _chunks(n, size):
    return [(i, min(i + size, n)) for i in range(0, n, size)]


def _rank_all(model, test, partners, n_jobs):
    step = max(1, SCORE_BLOCK // max(model.entity_count, 1))
    jobs = []
    for lo, hi in _chunks(len(test), step):
        jobs.append((test[lo:hi], TAIL))
        jobs.append((test[lo:hi], HEAD))
    results = Parallel(n_jobs=n_jobs)(
        delayed(_rank_block)(model, q, d, partners) for q, d in jobs)
    raw = np.concatenate([r for r, _ in results])
    filtered = np.concatenate([f for _, f in results])
    return raw, filtered


def evaluate_link_prediction(model, test, filter_set, hits_at=HITS_AT, n_jobs=1) -> EvalReport:
    test = np.asarray(list(test) if not isinstance(test, np.ndarray) else test,
                      dtype=np.int64).reshape(-1, 3)
    if len(test) == 0:
        raise ValueError("evaluation needs a nonempty test set")
    partners = filter_set if isinstance(filter_set, dict) else build_filter(filter_set)
    raw, filtered = _rank_all(model, test, partners, n_jobs)

    mr, mrr, hits = metrics_from_ranks(raw, hits_at)
    fmr, fmrr, fhits = metrics_from_ranks(filtered, hits_at)
    report = EvalReport(mr=mr, mr_filtered=fmr, mrr=mrr, mrr_filtered=fmrr,
                        hits=hits, hits_filtered=fhits, queries=len(raw))
    logger.debug(f"[EVAL] {model.kind}: filtered MRR {fmrr:.4f}, filtered MR {fmr:.2f} over {len(raw)} queries")
    return report


def recommend_tails(model, anchor, k, exclusions=()):
    """
    Top-k partners of an anchor app, each candidate scored by its best relation.
    Ties break by entity index.
    """
    E, R = model.entity_count, model.relation_count
    cand = np.tile(np.arange(E), R)
    rels = np.repeat(np.arange(R), E)
    scores = score_triples(model, anchor, rels, cand).reshape(R, E).max(axis=0)
    keep = np.ones(E, dtype=bool)
    keep[anchor] = False
    keep[list(exclusions)] = False
    idx = np.flatnonzero(keep)
    order = np.lexsort((idx, -scores[idx]))[:k]
    return [(int(idx[i]), float(scores[idx[i]])) for i in order]
