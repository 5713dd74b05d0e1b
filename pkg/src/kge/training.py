"""
Seeded mini-batch training of the shallow models.

Each epoch shuffles the train split, corrupts every batch, scores positives
and negatives, applies the analytic gradients through the optimizer and
re-projects constrained parameters. Validation filtered MRR is tracked and
the best-validation parameters are returned.
"""
import logging
from dataclasses import dataclass, asdict, replace

import numpy as np

from app_config import DEFAULT_LOSS_FAMILY, DEFAULT_MARGIN, ADAM_BETAS, ADAM_EPS, NTN_SLICES
from errors import TrainingError, ConfigError
from .models import init_model, score_triples, score_gradients, project, check_kind
from .losses import loss_and_grad, LOSS_FAMILIES
from .optimizers import make_optimizer
from .sampling import corrupt_batch, corrupt_among
from .evaluation import evaluate_link_prediction, build_filter

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    dim: int = 16
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 0.01
    negatives_per_positive: int = 1
    margin: float = DEFAULT_MARGIN
    loss_family: str = None        # None -> the kind's default family
    optimizer: str = None          # None -> sgd for margin losses, adam otherwise
    adam_beta1: float = ADAM_BETAS[0]
    adam_beta2: float = ADAM_BETAS[1]
    adam_eps: float = ADAM_EPS
    l2_weight: float = 0.0
    seed: int = 42
    relation_dim: int = None
    slices: int = NTN_SLICES
    filter_true: bool = False
    adversarial_temperature: float = 1.0
    eval_every: int = 1
    n_jobs: int = 1

    def validate(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")
        if self.negatives_per_positive < 1:
            raise ConfigError("negatives_per_positive must be >= 1")
        if self.batch_size < 1 or self.dim < 1 or self.eval_every < 1:
            raise ConfigError("batch_size, dim and eval_every must be >= 1")
        if self.loss_family is not None and self.loss_family not in LOSS_FAMILIES:
            raise ConfigError(f"unknown loss_family '{self.loss_family}'")
        if self.optimizer not in (None, 'sgd', 'adam'):
            raise ConfigError(f"unknown optimizer '{self.optimizer}'")
        return self

    def resolved(self, kind):
        """Copy with the kind-dependent defaults filled in."""
        family = self.loss_family or DEFAULT_LOSS_FAMILY[kind]
        optimizer = self.optimizer or ('sgd' if family in ('pairwise_margin', 'self_adversarial') else 'adam')
        return replace(self, loss_family=family, optimizer=optimizer)

    def to_dict(self):
        return asdict(self)


def _counts(splits, entity_count, relation_count):
    every = splits.all_triples()
    if entity_count is None:
        entity_count = int(every[:, [0, 2]].max()) + 1 if len(every) else 0
    if relation_count is None:
        relation_count = int(every[:, 1].max()) + 1 if len(every) else 0
    return entity_count, relation_count


def _negatives(batch, entity_count, rng, config, known):
    if not config.filter_true:
        return corrupt_batch(batch, entity_count, rng, config.negatives_per_positive)
    out = np.empty((len(batch), config.negatives_per_positive, 3), dtype=np.int64)
    for i, triple in enumerate(batch):
        for j in range(config.negatives_per_positive):
            out[i, j] = corrupt_among(triple, entity_count, rng, filter_true=True, known=known)
    return out


def _l2(model, weight):
    if weight == 0:
        return 0.0
    return weight * sum(float(np.sum(v * v)) for v in model.params.values())


def train_step(model, batch, negatives, config, optimizer):
    """One update; returns the batch loss."""
    B, n = negatives.shape[:2]
    flat = negatives.reshape(-1, 3)
    pos = score_triples(model, batch[:, 0], batch[:, 1], batch[:, 2])
    neg = score_triples(model, flat[:, 0], flat[:, 1], flat[:, 2]).reshape(B, n)
    loss, d_pos, d_neg = loss_and_grad(config.loss_family, pos, neg, config.margin,
                                       config.adversarial_temperature)
    loss += _l2(model, config.l2_weight)
    if not np.isfinite(loss):
        return loss

    grads = score_gradients(model, batch[:, 0], batch[:, 1], batch[:, 2], d_pos)
    neg_grads = score_gradients(model, flat[:, 0], flat[:, 1], flat[:, 2], d_neg.reshape(-1))
    for name in grads:
        grads[name] += neg_grads[name]
        if config.l2_weight:
            grads[name] += 2.0 * config.l2_weight * model.params[name]
    optimizer.step(model.params, grads)
    project(model)
    return loss


def train_model(splits, config: TrainConfig, kind, entity_count=None, relation_count=None):
    check_kind(kind)
    config = config.validate().resolved(kind)
    train = np.asarray(splits.train, dtype=np.int64).reshape(-1, 3)
    if len(train) == 0:
        raise TrainingError("train split is empty")
    E, R = _counts(splits, entity_count, relation_count)

    model = init_model(kind, config.dim, E, R, config.seed,
                       relation_dim=config.relation_dim, slices=config.slices)
    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(config.optimizer, config.learning_rate,
                               (config.adam_beta1, config.adam_beta2), config.adam_eps)
    known = set(map(tuple, train.tolist()))
    valid = np.asarray(splits.valid, dtype=np.int64).reshape(-1, 3)
    filter_index = build_filter(splits.train, splits.valid, splits.test)

    best_params = {k: v.copy() for k, v in model.params.items()}
    best_mrr, best_epoch = -np.inf, 0
    loss_trace, valid_trace = [], []

    logger.info(f"[TRAIN] {kind}: {len(train)} train triples, dim={config.dim}, "
                f"loss={config.loss_family}, optimizer={config.optimizer}, lr={config.learning_rate}")
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train))
        total = 0.0
        for b, lo in enumerate(range(0, len(train), config.batch_size)):
            batch = train[order[lo:lo + config.batch_size]]
            negatives = _negatives(batch, E, rng, config, known)
            loss = train_step(model, batch, negatives, config, optimizer)
            if not np.isfinite(loss):
                raise TrainingError(f"{kind}: non-finite loss", epoch=epoch, batch=b)
            total += loss * len(batch)
        epoch_loss = total / len(train)
        loss_trace.append(epoch_loss)

        if len(valid) and (epoch % config.eval_every == 0 or epoch == config.epochs):
            mrr = evaluate_link_prediction(model, valid, filter_index, n_jobs=config.n_jobs).mrr_filtered
            valid_trace.append((epoch, mrr))
            logger.info(f"[TRAIN] {kind} epoch {epoch}: loss {epoch_loss:.6f}, valid filtered MRR {mrr:.4f}")
            if mrr > best_mrr:
                best_mrr, best_epoch = mrr, epoch
                best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            logger.debug(f"[TRAIN] {kind} epoch {epoch}: loss {epoch_loss:.6f}")

    if valid_trace:
        model.params = best_params
    else:
        best_epoch = config.epochs
    model.meta = {
        'config': config.to_dict(),
        'loss_trace': loss_trace,
        'valid_trace': valid_trace,
        'best_epoch': best_epoch,
        'best_valid_mrr': float(best_mrr) if valid_trace else None,
    }
    logger.info(f"[TRAIN] {kind}: best epoch {best_epoch}"
                + (f" (valid filtered MRR {best_mrr:.4f})" if valid_trace else ""))
    return model


def validation_score(model, splits, n_jobs=1):
    """Best validation filtered MRR recorded during training, else evaluated now."""
    recorded = model.meta.get('best_valid_mrr')
    if recorded is not None:
        return recorded
    valid = np.asarray(splits.valid).reshape(-1, 3)
    if not len(valid):
        raise TrainingError("no validation triples to score the model on")
    filter_index = build_filter(splits.train, splits.valid, splits.test)
    return evaluate_link_prediction(model, valid, filter_index, n_jobs=n_jobs).mrr_filtered


def select_best_model(splits, configs, entity_count=None, relation_count=None):
    """
    Trains every requested kind and picks the highest validation filtered MRR.
    configs maps kind -> TrainConfig. Returns (best kind, {kind: model}, {kind: score}).
    """
    models, scores = {}, {}
    for kind, config in configs.items():
        models[kind] = train_model(splits, config, kind, entity_count, relation_count)
        scores[kind] = validation_score(models[kind], splits, config.n_jobs)
    best = max(scores, key=lambda k: (scores[k], -list(configs).index(k)))
    logger.info(f"[TRAIN] Selected {best} (valid filtered MRR {scores[best]:.4f})")
    return best, models, scores
