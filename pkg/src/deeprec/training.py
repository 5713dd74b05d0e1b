"""
Training of the deep recommender: summed binary cross-entropy over linked
(positive) and unlinked (negative) app pairs plus an L2 penalty, minimized
with Adam. The shallow TransD store stays frozen.
"""
import logging
from dataclasses import dataclass, asdict

import numpy as np

from app_config import (
    DEEP_DIM, NEIGHBOR_SAMPLE_SIZE, DEEP_DEPTH, DEEP_BATCH_SIZE, DEEP_LR, DEEP_L2,
    DEEP_EPOCHS, PROB_EPS,
)
from errors import TrainingError, ConfigError
from kge.optimizers import Adam
from .model import init_deep_model, pair_logits, pair_gradients, sigmoid, train_graph

logger = logging.getLogger(__name__)


@dataclass
class DeepConfig:
    dim: int = DEEP_DIM
    neighbor_sample_size: int = NEIGHBOR_SAMPLE_SIZE
    depth: int = DEEP_DEPTH
    batch_size: int = DEEP_BATCH_SIZE
    learning_rate: float = DEEP_LR
    l2_weight: float = DEEP_L2
    epochs: int = DEEP_EPOCHS
    activation: str = 'relu'
    seed: int = 42

    def validate(self):
        if self.learning_rate < 0:
            raise ConfigError("deep learning_rate must be >= 0")
        if min(self.dim, self.neighbor_sample_size, self.depth, self.batch_size, self.epochs) < 1:
            raise ConfigError("deep dim, neighbor_sample_size, depth, batch_size and epochs must be >= 1")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass
class RecBatch:
    anchor: int
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        if set(np.asarray(self.positives).tolist()) & set(np.asarray(self.negatives).tolist()):
            raise ValueError("negatives must be disjoint from positives")


def linked_pairs(*triple_sets):
    """Unordered entity pairs linked by any triple."""
    out = set()
    for triples in triple_sets:
        for h, _, t in np.asarray(triples).reshape(-1, 3).tolist():
            out.add((min(h, t), max(h, t)))
    return out


def positive_pairs(triples):
    """Distinct (head, tail) pairs in first-seen order."""
    seen = {}
    for h, _, t in np.asarray(triples).reshape(-1, 3).tolist():
        seen.setdefault((h, t), None)
    return np.asarray(list(seen), dtype=np.int64).reshape(-1, 2)


def sample_negative_tails(anchors, entity_count, linked, rng):
    """One unlinked partner per anchor, drawn uniformly."""
    out = np.empty(len(anchors), dtype=np.int64)
    for i, a in enumerate(np.asarray(anchors).tolist()):
        for _ in range(64):
            b = int(rng.integers(entity_count))
            if b != a and (min(a, b), max(a, b)) not in linked:
                break
        else:
            free = [b for b in range(entity_count)
                    if b != a and (min(a, b), max(a, b)) not in linked]
            if not free:
                raise TrainingError(f"no unlinked partner available for entity {a}")
            b = free[int(rng.integers(len(free)))]
        out[i] = b
    return out


def make_batches(pairs, entity_count, linked, rng):
    """RecBatches grouped by anchor, one negative per positive."""
    negatives = sample_negative_tails(pairs[:, 0], entity_count, linked, rng)
    by_anchor = {}
    for (a, b), n in zip(pairs.tolist(), negatives.tolist()):
        pos, neg = by_anchor.setdefault(a, ([], []))
        pos.append(b)
        neg.append(n)
    return [RecBatch(a, np.asarray(pos, dtype=np.int64), np.asarray(neg, dtype=np.int64))
            for a, (pos, neg) in by_anchor.items()]


def _flatten(batches):
    pairs, labels = [], []
    for rb in batches:
        if len(rb.positives) == 0:
            raise TrainingError(f"batch for anchor {rb.anchor} has no positives")
        pairs += [(rb.anchor, int(b)) for b in rb.positives]
        labels += [1.0] * len(rb.positives)
        pairs += [(rb.anchor, int(b)) for b in rb.negatives]
        labels += [0.0] * len(rb.negatives)
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2), np.asarray(labels)


def _bce(y, labels):
    """Summed BCE with clamped probabilities and its gradient w.r.t. the logits."""
    clamped = np.clip(y, PROB_EPS, 1.0 - PROB_EPS)
    loss = -np.sum(labels * np.log(clamped) + (1.0 - labels) * np.log(1.0 - clamped))
    inside = (y > PROB_EPS) & (y < 1.0 - PROB_EPS)
    d_logits = np.where(inside, y - labels, 0.0)
    return float(loss), d_logits


def _l2(model, weight):
    return weight * sum(float(np.sum(v * v)) for v in model.params.values())


def loss_and_grad(model, kg, batches, l2_weight, salt=()):
    pairs, labels = _flatten(batches)
    logits, state = pair_logits(model, kg, pairs, salt)
    loss, d_logits = _bce(sigmoid(logits), labels)
    grads = pair_gradients(model, state, d_logits)
    for name, value in model.params.items():
        grads[name] += 2.0 * l2_weight * value
    return loss + _l2(model, l2_weight), grads


def recommendation_loss(model, batches, l2_weight, kg, salt=()):
    if not batches:
        return _l2(model, l2_weight)
    pairs, labels = _flatten(batches)
    y = sigmoid(pair_logits(model, kg, pairs, salt)[0])
    return _bce(y, labels)[0] + _l2(model, l2_weight)


def train_deep(kg, splits, shallow, config: DeepConfig, graph=None):
    """
    Returns the DeepModel with the lowest validation loss. Neighborhoods come
    from the train split unless a graph is supplied.
    """
    config.validate()
    if shallow.kind != 'TransD':
        raise ConfigError(f"deep training needs a TransD shallow model, got {shallow.kind}")
    graph = graph if graph is not None else train_graph(kg, splits)
    E = kg.num_entities
    model = init_deep_model(shallow, kg.num_relations, config.dim, config.depth,
                            config.neighbor_sample_size, config.activation, config.seed)
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(lr=config.learning_rate)
    linked = linked_pairs(splits.train, splits.valid, splits.test)

    train_pairs = positive_pairs(splits.train)
    if len(train_pairs) == 0:
        raise TrainingError("train split has no pairs")
    valid_pairs = positive_pairs(splits.valid)
    valid_batches = make_batches(valid_pairs, E, linked, np.random.default_rng(config.seed + 1)) \
        if len(valid_pairs) else []

    best_params = {k: v.copy() for k, v in model.params.items()}
    best_loss, best_epoch = np.inf, 0
    loss_trace, valid_trace = [], []
    logger.info(f"[DEEP] {len(train_pairs)} train pairs, dim={config.dim}, S={config.neighbor_sample_size}, "
                f"K={config.depth}, lr={config.learning_rate}")

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_pairs))
        total = 0.0
        for b, lo in enumerate(range(0, len(train_pairs), config.batch_size)):
            chunk = train_pairs[order[lo:lo + config.batch_size]]
            batches = make_batches(chunk, E, linked, rng)
            loss, grads = loss_and_grad(model, graph, batches, config.l2_weight, salt=(epoch,))
            if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
                raise TrainingError("deep model: non-finite loss", epoch=epoch, batch=b)
            optimizer.step(model.params, grads)
            total += loss
        loss_trace.append(total)

        if valid_batches:
            v_loss = recommendation_loss(model, valid_batches, 0.0, graph)
            valid_trace.append((epoch, v_loss))
            logger.info(f"[DEEP] epoch {epoch}: train loss {total:.4f}, valid loss {v_loss:.4f}")
            if v_loss < best_loss:
                best_loss, best_epoch = v_loss, epoch
                best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            logger.info(f"[DEEP] epoch {epoch}: train loss {total:.4f}")

    if valid_trace:
        model.params = best_params
    else:
        best_epoch = config.epochs
    model.meta = {'config': config.to_dict(), 'loss_trace': loss_trace,
                  'valid_trace': valid_trace, 'best_epoch': best_epoch}
    logger.info(f"[DEEP] best epoch {best_epoch}")
    return model
