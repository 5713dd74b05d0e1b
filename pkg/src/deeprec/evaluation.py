"""
Top-K recommendation and relation prediction evaluation.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from app_config import REC_K_LIST, REL_K_LIST
from kge.models import KgeModel, score_triples
from kge.evaluation import recommend_tails
from .model import DeepModel, score_app_pairs
from .training import positive_pairs

logger = logging.getLogger(__name__)


# --- Per-list metrics ---

def precision_at_k(recommended, relevant, k):
    top = list(recommended)[:k]
    if not top:
        return 0.0
    return sum(1 for x in top if x in relevant) / len(top)


def recall_at_k(recommended, relevant, k):
    if not relevant:
        return 0.0
    return sum(1 for x in list(recommended)[:k] if x in relevant) / len(relevant)


def ap_at_k(recommended, relevant, k):
    """Precision at every relevant position, averaged over min(|relevant|, k)."""
    if not relevant:
        return 0.0
    hits, total = 0, 0.0
    for pos, x in enumerate(list(recommended)[:k], start=1):
        if x in relevant:
            hits += 1
            total += hits / pos
    return total / min(len(relevant), k)


def map_n_at_k(recommended, relevant, k):
    """(1/|relevant|) * sum over relevant positions of P@pos / pos."""
    if not relevant:
        return 0.0
    hits, total = 0, 0.0
    for pos, x in enumerate(list(recommended)[:k], start=1):
        if x in relevant:
            hits += 1
            total += (hits / pos) / pos
    return total / len(relevant)


@dataclass
class RecReport:
    rows: list = field(default_factory=list)   # one dict per K

    def frame(self):
        return pd.DataFrame(self.rows, columns=['K', 'precision', 'recall', 'map', 'map_n',
                                                'tp', 'fp', 'fn', 'anchors'])

    def at(self, k):
        return next(r for r in self.rows if r['K'] == k)


def summarize(rankings, relevants, k_list):
    """Macro-averaged metrics per K; TP/FP/FN summed over anchors."""
    rows = []
    for k in k_list:
        prec, rec, ap, mapn = [], [], [], []
        tp = fp = fn = 0
        for ranked, relevant in zip(rankings, relevants):
            top = list(ranked)[:k]
            hits = sum(1 for x in top if x in relevant)
            tp += hits
            fp += len(top) - hits
            fn += len(relevant) - hits
            prec.append(precision_at_k(ranked, relevant, k))
            rec.append(recall_at_k(ranked, relevant, k))
            ap.append(ap_at_k(ranked, relevant, k))
            mapn.append(map_n_at_k(ranked, relevant, k))
        n = len(rankings)
        rows.append({'K': k,
                     'precision': float(np.mean(prec)) if n else 0.0,
                     'recall': float(np.mean(rec)) if n else 0.0,
                     'map': float(np.mean(ap)) if n else 0.0,
                     'map_n': float(np.mean(mapn)) if n else 0.0,
                     'tp': tp, 'fp': fp, 'fn': fn, 'anchors': n})
    return RecReport(rows)


# --- Recommendation ---

def partners(kg, entity):
    """Entities linked to the given one in either direction."""
    t = kg.triples
    return set(t[t[:, 0] == entity, 2].tolist()) | set(t[t[:, 2] == entity, 0].tolist())


def recommend_top_k(model, anchor, K, kg, exclusions=None):
    """
    Top K partners by score, ties broken by entity index. Exclusions default
    to the anchor and its partners in kg (the train graph).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if exclusions is None:
        exclusions = partners(kg, anchor)
    exclusions = set(exclusions) | {anchor}
    if isinstance(model, KgeModel):
        return [e for e, _ in recommend_tails(model, anchor, K, exclusions - {anchor})]

    candidates = np.array([e for e in range(model.entity_count) if e not in exclusions], dtype=np.int64)
    if len(candidates) == 0:
        return []
    pairs = np.stack([np.full(len(candidates), anchor), candidates], axis=1)
    scores = score_app_pairs(model, kg, pairs)
    order = np.lexsort((candidates, -scores))[:K]
    return candidates[order].tolist()


def _recommend_for(model, anchor, K, kg, relevant):
    exclusions = partners(kg, anchor) - relevant
    return recommend_top_k(model, anchor, K, kg, exclusions)


def evaluate_recommendations(model, test_triples, kg, k_list=REC_K_LIST, n_jobs=1):
    """
    Anchors are the heads of test pairs; an anchor's relevant set is its test
    partners, which are never excluded from its candidates.
    """
    pairs = positive_pairs(test_triples)
    if len(pairs) == 0:
        raise ValueError("evaluation needs nonempty test pairs")
    relevant = {}
    for a, b in pairs.tolist():
        relevant.setdefault(a, set()).add(b)
    anchors = sorted(relevant)
    top = max(k_list)
    rankings = Parallel(n_jobs=n_jobs)(
        delayed(_recommend_for)(model, a, top, kg, relevant[a]) for a in anchors)
    report = summarize(rankings, [relevant[a] for a in anchors], k_list)
    for row in report.rows:
        logger.info(f"[EVAL] K={row['K']}: precision {row['precision']:.4f}, recall {row['recall']:.4f}, "
                    f"MAP {row['map']:.4f}, MAP-N {row['map_n']:.4f}")
    return report


def recommendation_frame(model, anchors, K, kg, entities):
    """(anchor, rank, app, score) rows for a set of anchors."""
    rows = []
    for anchor in anchors:
        ranked = recommend_top_k(model, anchor, K, kg)
        if isinstance(model, DeepModel):
            pairs = np.array([[anchor, e] for e in ranked], dtype=np.int64).reshape(-1, 2)
            scores = score_app_pairs(model, kg, pairs) if len(ranked) else []
        else:
            scores = [s for _, s in recommend_tails(model, anchor, K, partners(kg, anchor))]
        for rank, (e, s) in enumerate(zip(ranked, scores), start=1):
            rows.append({'anchor': entities[anchor], 'rank': rank, 'app': entities[e], 'score': float(s)})
    return pd.DataFrame(rows, columns=['anchor', 'rank', 'app', 'score'])


# --- Relation prediction ---

def _shallow(model):
    return model.shallow if isinstance(model, DeepModel) else model


def predict_relations(model, pair, K):
    """Relations ordered by shallow plausibility of (h, r, t); ties by index."""
    shallow = _shallow(model)
    R = shallow.relation_count
    if K > R:
        raise ValueError(f"K={K} exceeds the relation count {R}")
    h, t = pair
    scores = score_triples(shallow, h, np.arange(R), t)
    order = np.lexsort((np.arange(R), -scores))
    return order[:K].tolist()


def evaluate_relation_prediction(model, test_triples, k_list=REL_K_LIST):
    """Per ordered test pair, the truth is every relation linking it in either direction."""
    truth = {}
    for h, r, t in np.asarray(test_triples).reshape(-1, 3).tolist():
        truth.setdefault((h, t), set()).add(r)
    for (h, t) in list(truth):
        if (t, h) in truth:
            truth[(h, t)] = truth[(h, t)] | truth[(t, h)]
    pairs = list(truth)
    if not pairs:
        raise ValueError("evaluation needs nonempty test pairs")
    R = _shallow(model).relation_count
    k_list = [k for k in k_list if k <= R]
    rankings = [predict_relations(model, p, max(k_list)) for p in pairs]
    return summarize(rankings, [truth[p] for p in pairs], k_list)
