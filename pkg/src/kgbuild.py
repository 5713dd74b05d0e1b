"""
Knowledge graph construction for app-app similarity.

Attributes are discretized (category, interval or quantile mapping), each app
gets one bin per relation, and apps sharing a bin are linked by that
attribute's similarity relation.
"""
import os
import json
import logging
import datetime
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from app_config import (
    RELATION_NAMES, RELATION_IDS, CONTENT_RATINGS, GENRE_GROUPS, QUANTILE_LABELS,
    INSTALL_EDGES, SIZE_EDGES_KB, RELEASED_EDGES_DAYS, VARIES_WITH_DEVICE,
    MIN_SPLIT_TRIPLES,
)
from errors import BinningError, KGFormatError, SplitError, ConfigError
from kg_utils import AtomicFileSaver, calculate_sha256, read_tsv

logger = logging.getLogger(__name__)

# relation id -> AppRecord attribute
RELATION_ATTRIBUTE = {
    0: 'ad_supported', 1: 'content_rating', 2: 'editors_choice', 3: 'genre_id',
    4: 'installs', 5: 'offers_iap', 6: 'ratings', 7: 'released',
    8: 'reviews', 9: 'score_text', 10: 'size', 11: 'video',
}
ATTRIBUTE_RELATION = {a: r for r, a in RELATION_ATTRIBUTE.items()}
TRIPLE_COLUMNS = ['head_app_id', 'relation_name', 'tail_app_id']


# --- Normalization helpers ---

def size_to_kb(size):
    """
    Store size string ('29M', '512k', '1.1G', 'Varies with device') to KB.
    A bare number is already in KB.
    """
    if size is None:
        return None
    text = str(size).strip().replace(',', '')
    if text == VARIES_WITH_DEVICE or not text:
        return 0.0
    unit = text[-1].upper()
    scale = {'K': 1.0, 'M': 1024.0, 'G': 1024.0 * 1024.0}
    try:
        if unit in scale:
            return float(text[:-1]) * scale[unit]
        return float(text)
    except ValueError:
        raise BinningError(f"cannot normalize size value {size!r} for attribute size")


def installs_to_int(installs):
    if installs is None:
        return None
    text = str(installs).replace(',', '').replace('+', '').strip()
    if not text.isdigit():
        raise BinningError(f"cannot parse installs value {installs!r} for attribute installs")
    return int(text)


def collapse_genre(genre_id):
    """All game subcategories collapse to a single GAMES group."""
    g = str(genre_id).strip().upper()
    if g.startswith('GAME'):
        return 'GAMES'
    return g


def released_days(released, snapshot_date):
    return max((snapshot_date - released).days, 0)


# --- Binning ---

@dataclass
class BinningSpec:
    snapshot_date: datetime.date
    schemes: dict = field(default_factory=dict)        # attribute -> scheme dict
    group_counts: dict = field(default_factory=dict)   # relation id -> count

    def to_dict(self):
        return {
            'snapshot_date': self.snapshot_date.isoformat(),
            'schemes': self.schemes,
            'group_counts': {str(k): v for k, v in self.group_counts.items()},
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            snapshot_date=datetime.date.fromisoformat(data['snapshot_date']),
            schemes=data['schemes'],
            group_counts={int(k): v for k, v in data['group_counts'].items()},
        )


@dataclass(frozen=True)
class EntityFeatures:
    app_id: str
    bins: dict   # relation id -> bin label; relations without a source value are absent


def _category_scheme(values):
    return {'type': 'category', 'map': {str(v): i for i, v in enumerate(values)}}


def _interval_scheme(edges, right_closed):
    return {'type': 'interval', 'edges': [float(e) for e in edges], 'right_closed': right_closed}


def _quantile_scheme(attribute, values, n_labels):
    present = pd.Series([v for v in values if v is not None], dtype=float)
    if present.empty:
        raise BinningError(f"cannot fit quantiles: attribute '{attribute}' is missing from every record")
    edges = present.quantile(np.linspace(0.0, 1.0, n_labels + 1)).to_numpy()
    # Tied quantile edges are merged and the label count reduced
    edges = np.unique(edges)
    labels = max(len(edges) - 1, 1)
    if labels < n_labels:
        logger.info(f"[BUILD] {attribute}: {n_labels} quantile labels reduced to {labels} by ties")
    return {'type': 'quantile', 'edges': edges.tolist(), 'labels': labels}


def _group_count(scheme):
    if scheme['type'] == 'category':
        return len(scheme['map'])
    if scheme['type'] == 'interval':
        return len(scheme['edges']) + 1
    return scheme['labels']


def _lookup(attribute, scheme, value):
    kind = scheme['type']
    if kind == 'category':
        key = str(value)
        if key not in scheme['map']:
            raise BinningError(f"unknown value {value!r} for attribute {attribute}")
        return scheme['map'][key]
    edges = np.asarray(scheme['edges'])
    if kind == 'interval':
        side = 'left' if scheme['right_closed'] else 'right'
        return int(np.searchsorted(edges, value, side=side))
    label = int(np.searchsorted(edges[1:-1], value, side='left'))
    return min(label, scheme['labels'] - 1)


def _raw_value(record, attribute, snapshot_date):
    value = getattr(record, attribute)
    if value is None:
        return None
    if attribute == 'genre_id':
        return collapse_genre(value)
    if attribute == 'installs':
        return installs_to_int(value)
    if attribute == 'size':
        return size_to_kb(value)
    if attribute == 'released':
        return released_days(value, snapshot_date)
    return value


class AppBinner(BaseEstimator, TransformerMixin):
    """
    Fits the per-attribute binning schemes on a corpus and maps records to bins.
    Quantile edges are learned from present values only; category and interval
    schemes are fixed apart from genres observed beyond the three store groups.
    """
    def __init__(self, snapshot_date=None, released_scheme='text', size_scheme='text'):
        self.snapshot_date = snapshot_date
        self.released_scheme = released_scheme
        self.size_scheme = size_scheme

    def fit(self, X, y=None):
        records = list(X)
        if not records:
            raise BinningError("cannot fit binning on an empty corpus")
        if self.snapshot_date is None:
            raise ConfigError("snapshot_date is required for binning")
        if self.released_scheme not in RELEASED_EDGES_DAYS:
            raise ConfigError(f"unknown released_scheme '{self.released_scheme}'")
        if self.size_scheme not in SIZE_EDGES_KB:
            raise ConfigError(f"unknown size_scheme '{self.size_scheme}'")

        genres = list(GENRE_GROUPS)
        extra = {collapse_genre(r.genre_id) for r in records if r.genre_id is not None}
        genres += sorted(extra - set(genres))

        schemes = {
            'ad_supported': _category_scheme([False, True]),
            'content_rating': _category_scheme(CONTENT_RATINGS),
            'editors_choice': _category_scheme([False, True]),
            'genre_id': _category_scheme(genres),
            'installs': _interval_scheme(INSTALL_EDGES, right_closed=False),
            'offers_iap': _category_scheme([False, True]),
            'released': _interval_scheme(RELEASED_EDGES_DAYS[self.released_scheme], right_closed=True),
            'size': _interval_scheme(SIZE_EDGES_KB[self.size_scheme], right_closed=False),
            'video': _category_scheme([False, True]),
        }
        for attribute, n_labels in QUANTILE_LABELS.items():
            schemes[attribute] = _quantile_scheme(
                attribute, [getattr(r, attribute) for r in records], n_labels)

        self.spec_ = BinningSpec(
            snapshot_date=self.snapshot_date,
            schemes=schemes,
            group_counts={ATTRIBUTE_RELATION[a]: _group_count(s) for a, s in schemes.items()},
        )
        return self

    def transform(self, X):
        check_is_fitted(self, 'spec_')
        return [apply_binning(r, self.spec_) for r in X]


def fit_binning(corpus, snapshot_date, released_scheme='text', size_scheme='text') -> BinningSpec:
    binner = AppBinner(snapshot_date=snapshot_date, released_scheme=released_scheme,
                       size_scheme=size_scheme)
    return binner.fit(corpus).spec_


def apply_binning(record, spec: BinningSpec) -> EntityFeatures:
    bins = {}
    for relation, attribute in RELATION_ATTRIBUTE.items():
        value = _raw_value(record, attribute, spec.snapshot_date)
        if value is None:
            continue
        bins[relation] = _lookup(attribute, spec.schemes[attribute], value)
    return EntityFeatures(app_id=record.app_id, bins=bins)


# --- Graph ---

class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class KnowledgeGraph:
    """
    Entity and relation vocabularies plus a deduplicated, canonically sorted
    triple array and a head -> (relation, tail) adjacency index.
    Treated as immutable once constructed.
    """
    def __init__(self, entities, relations, triples):
        self.entities = tuple(entities)
        self.relations = tuple(relations)
        if len(set(self.entities)) != len(self.entities):
            raise KGFormatError(0, "duplicate entity in vocabulary")
        for name in self.relations:
            if name not in RELATION_IDS:
                raise KGFormatError(0, f"unknown relation '{name}'")
        self.entity_index = {e: i for i, e in enumerate(self.entities)}
        self.relation_index = {r: i for i, r in enumerate(self.relations)}

        arr = np.asarray(list(triples) if not isinstance(triples, np.ndarray) else triples,
                         dtype=np.int64).reshape(-1, 3)
        if len(arr):
            if (arr[:, 0] == arr[:, 2]).any():
                raise KGFormatError(0, "self-loop triple")
            if arr[:, [0, 2]].min() < 0 or arr[:, [0, 2]].max() >= len(self.entities):
                raise KGFormatError(0, "entity index out of range")
            if arr[:, 1].min() < 0 or arr[:, 1].max() >= len(self.relations):
                raise KGFormatError(0, "relation index out of range")
            arr = np.unique(arr, axis=0)
        arr.setflags(write=False)
        self.triples = arr

        # CSR adjacency over heads (triples are sorted by head)
        self._offsets = np.searchsorted(arr[:, 0], np.arange(len(self.entities) + 1), side='left') \
            if len(arr) else np.zeros(len(self.entities) + 1, dtype=np.int64)

    @property
    def num_entities(self):
        return len(self.entities)

    @property
    def num_relations(self):
        return len(self.relations)

    def __len__(self):
        return len(self.triples)

    def __eq__(self, other):
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (self.entities == other.entities and self.relations == other.relations
                and np.array_equal(self.triples, other.triples))

    def neighbors(self, head):
        """(relations, tails) of the triples whose head is the given entity."""
        lo, hi = self._offsets[head], self._offsets[head + 1]
        block = self.triples[lo:hi]
        return block[:, 1], block[:, 2]

    def adjacency(self):
        return {h: list(zip(*map(np.ndarray.tolist, self.neighbors(h))))
                for h in range(self.num_entities) if self._offsets[h + 1] > self._offsets[h]}

    def triple_set(self):
        return set(map(tuple, self.triples.tolist()))

    def relation_triples(self, relation):
        return self.triples[self.triples[:, 1] == relation]

    def drop_relations(self, names):
        """Graph without the named relations' triples; every other triple is kept."""
        keep = [r for r in self.relations if r not in set(names)]
        remap = {self.relation_index[r]: i for i, r in enumerate(keep)}
        mask = np.isin(self.triples[:, 1], list(remap))
        kept = self.triples[mask].copy()
        kept[:, 1] = [remap[r] for r in kept[:, 1]]
        return KnowledgeGraph(self.entities, keep, kept)

    def describe(self):
        return (f"KnowledgeGraph(entities={self.num_entities}, relations={self.num_relations}, "
                f"triples={len(self)})")


def build_triples(features, k, seed, relations=None) -> KnowledgeGraph:
    """
    For every entity and relation with a bin, sample min(k, |peers|) distinct
    same-bin peers without replacement and emit directed (entity, relation, peer).
    """
    if k < 1:
        raise ConfigError("edges_per_relation k must be >= 1")
    features = sorted(features, key=lambda f: f.app_id)
    if len(features) < 2:
        raise ConfigError("at least two entities are required to build triples")
    relations = tuple(relations) if relations is not None else RELATION_NAMES
    rng = np.random.default_rng(seed)

    triples = []
    for r_idx, name in enumerate(relations):
        rid = RELATION_IDS[name]
        groups = {}
        for e_idx, feat in enumerate(features):
            label = feat.bins.get(rid)
            if label is not None:
                groups.setdefault(label, []).append(e_idx)
        members_of = {label: np.asarray(m) for label, m in groups.items()}
        position = {e: (label, pos) for label, m in groups.items() for pos, e in enumerate(m)}

        for e_idx in range(len(features)):
            if e_idx not in position:
                continue
            label, pos = position[e_idx]
            members = members_of[label]
            m = len(members)
            if m < 2:
                continue
            picks = rng.choice(m - 1, size=min(k, m - 1), replace=False)
            picks[picks >= pos] += 1
            for t_idx in members[picks]:
                triples.append((e_idx, r_idx, int(t_idx)))

    kg = KnowledgeGraph([f.app_id for f in features], relations, triples)
    logger.info(f"[BUILD] {kg.describe()} (k={k}, seed={seed})")
    return kg


# --- Splits ---

@dataclass
class SplitSet:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    ratios: tuple
    seed: int

    def all_triples(self):
        return np.concatenate([self.train, self.valid, self.test])

    def sizes(self):
        return len(self.train), len(self.valid), len(self.test)


def _repair(train, rest, num_entities):
    """Swap eval triples whose entities are unseen in train with safe train triples."""
    train = [tuple(t) for t in train]
    rest = [tuple(t) for t in rest]
    counts = np.zeros(num_entities, dtype=np.int64)
    for h, _, t in train:
        counts[h] += 1
        counts[t] += 1

    for i, (h, r, t) in enumerate(rest):
        if counts[h] > 0 and counts[t] > 0:
            continue
        for j, (h2, r2, t2) in enumerate(train):
            # removing (h2, t2) must leave both in train once (h, t) joins
            need = {h2: 1 + (h2 == t2), t2: 1 + (h2 == t2)}
            ok = all(counts[e] - need[e] + (e == h) + (e == t) >= 1 for e in (h2, t2))
            if not ok:
                continue
            counts[h2] -= 1
            counts[t2] -= 1
            counts[h] += 1
            counts[t] += 1
            train[j], rest[i] = (h, r, t), (h2, r2, t2)
            break
    return train, rest


def split_triples(kg, ratios=(0.6, 0.2, 0.2), seed=42) -> SplitSet:
    """Seeded shuffle, contiguous cut, then a swap repair so eval entities appear in train."""
    ratios = tuple(float(x) for x in ratios)
    if len(ratios) != 3 or any(x <= 0 for x in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"split ratios must be three positive values summing to 1, got {ratios}")
    n = len(kg)
    if n < MIN_SPLIT_TRIPLES:
        raise SplitError(f"need at least {MIN_SPLIT_TRIPLES} triples to split, got {n}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    shuffled = kg.triples[order]
    n_train = max(1, int(round(ratios[0] * n)))
    n_valid = max(1, int(round(ratios[1] * n)))
    if n_train + n_valid > n - 1:
        n_train = n - 1 - n_valid
    cut = n_train + n_valid

    train, rest = _repair(shuffled[:n_train], shuffled[n_train:], kg.num_entities)
    rest = np.asarray(rest, dtype=np.int64).reshape(-1, 3)
    splits = SplitSet(
        train=np.asarray(train, dtype=np.int64).reshape(-1, 3),
        valid=rest[:cut - n_train],
        test=rest[cut - n_train:],
        ratios=ratios,
        seed=seed,
    )
    logger.info(f"[BUILD] Split sizes train/valid/test = {splits.sizes()}")
    return splits


# --- Persistence ---

def _triples_frame(kg, triples):
    df = pd.DataFrame({
        'head_app_id': [kg.entities[h] for h in triples[:, 0]],
        'relation_order': triples[:, 1],
        'relation_name': [kg.relations[r] for r in triples[:, 1]],
        'tail_app_id': [kg.entities[t] for t in triples[:, 2]],
    })
    df = df.sort_values(['head_app_id', 'relation_order', 'tail_app_id'], kind='mergesort')
    return df[TRIPLE_COLUMNS]


def serialize_kg(kg, path, triples=None):
    """Canonical TSV (sorted by head, relation, tail) so output is byte-stable."""
    triples = kg.triples if triples is None else triples
    AtomicFileSaver.save_frame(_triples_frame(kg, triples), path)


def _read_triple_rows(path):
    with open(path, 'r', encoding='utf-8', newline='') as f:
        lines = f.read().split('\n')
    rows = []
    for row_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split('\t')
        if parts == TRIPLE_COLUMNS:
            continue
        if len(parts) != 3 or not all(p.strip() for p in parts):
            raise KGFormatError(row_no, f"expected 3 nonempty tab-separated columns, got {line!r}")
        head, rel, tail = (p.strip() for p in parts)
        if rel not in RELATION_IDS:
            raise KGFormatError(row_no, f"unknown relation '{rel}'")
        if head == tail:
            raise KGFormatError(row_no, f"self-loop on '{head}'")
        rows.append((row_no, head, rel, tail))
    return rows


def read_triples(path, kg):
    """Rows of a triple file as index triples over an existing vocabulary."""
    out = []
    for row_no, head, rel, tail in _read_triple_rows(path):
        if head not in kg.entity_index or tail not in kg.entity_index:
            raise KGFormatError(row_no, "entity not in vocabulary")
        if rel not in kg.relation_index:
            raise KGFormatError(row_no, f"relation '{rel}' not in graph")
        out.append((kg.entity_index[head], kg.relation_index[rel], kg.entity_index[tail]))
    return np.asarray(out, dtype=np.int64).reshape(-1, 3)


def deserialize_kg(path, entities=None, relations=None) -> KnowledgeGraph:
    rows = _read_triple_rows(path)
    if relations is None:
        relations = RELATION_NAMES
    if entities is None:
        entities = sorted({r[1] for r in rows} | {r[3] for r in rows})
    entity_index = {e: i for i, e in enumerate(entities)}
    relation_index = {r: i for i, r in enumerate(relations)}
    triples = []
    for row_no, head, rel, tail in rows:
        if head not in entity_index or tail not in entity_index:
            raise KGFormatError(row_no, "entity not in vocabulary")
        if rel not in relation_index:
            raise KGFormatError(row_no, f"relation '{rel}' not in graph")
        triples.append((entity_index[head], relation_index[rel], entity_index[tail]))
    return KnowledgeGraph(entities, relations, triples)


def write_graph_dir(directory, kg, splits, binning, k, snapshot_date, extra=None):
    """
    Writes triples.tsv, entities.tsv, train/valid/test.tsv and a manifest.
    Rerunning with the same inputs reproduces byte-identical files.
    """
    os.makedirs(directory, exist_ok=True)
    files = {
        'triples': os.path.join(directory, 'triples.tsv'),
        'entities': os.path.join(directory, 'entities.tsv'),
        'train': os.path.join(directory, 'train.tsv'),
        'valid': os.path.join(directory, 'valid.tsv'),
        'test': os.path.join(directory, 'test.tsv'),
    }
    serialize_kg(kg, files['triples'])
    AtomicFileSaver.save_frame(pd.DataFrame({'app_id': list(kg.entities)}), files['entities'])
    serialize_kg(kg, files['train'], splits.train)
    serialize_kg(kg, files['valid'], splits.valid)
    serialize_kg(kg, files['test'], splits.test)

    manifest = {
        'seed': splits.seed,
        'k': k,
        'ratios': list(splits.ratios),
        'snapshot_date': snapshot_date.isoformat(),
        'relations': list(kg.relations),
        'binning': binning.to_dict() if binning is not None else None,
        'sha256': {name: calculate_sha256(p) for name, p in sorted(files.items())},
    }
    if extra:
        manifest.update(extra)
    AtomicFileSaver.save_json(manifest, os.path.join(directory, 'manifest.json'))
    logger.info(f"[BUILD] Wrote graph directory {directory}")
    return manifest


def read_graph_dir(directory):
    """(kg, splits, manifest) from a directory written by write_graph_dir."""
    manifest_path = os.path.join(directory, 'manifest.json')
    with open(manifest_path, 'r', encoding='utf-8') as f:
        manifest = json.load(f)
    entities = read_tsv(os.path.join(directory, 'entities.tsv'))['app_id'].tolist()
    kg = deserialize_kg(os.path.join(directory, 'triples.tsv'), entities, manifest['relations'])
    splits = SplitSet(
        train=read_triples(os.path.join(directory, 'train.tsv'), kg),
        valid=read_triples(os.path.join(directory, 'valid.tsv'), kg),
        test=read_triples(os.path.join(directory, 'test.tsv'), kg),
        ratios=tuple(manifest['ratios']),
        seed=manifest['seed'],
    )
    return kg, splits, manifest
