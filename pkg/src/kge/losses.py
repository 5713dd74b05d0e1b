"""
Loss families over positive scores and their per-positive negative scores.
Each returns the loss together with its gradient w.r.t. the scores.
"""
import numpy as np

from errors import TrainingError

LOSS_FAMILIES = ('pairwise_margin', 'pointwise_logistic', 'multiclass', 'self_adversarial')


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def _softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _margin(pos, neg, margin):
    B, n = neg.shape
    hinge = margin - pos[:, None] + neg
    active = (hinge > 0).astype(float)
    loss = np.sum(hinge * active) / (B * n)
    d_neg = active / (B * n)
    return loss, -d_neg.sum(axis=1), d_neg


def _logistic(pos, neg):
    B, n = neg.shape
    loss = np.mean(np.logaddexp(0.0, -pos)) + np.mean(np.logaddexp(0.0, neg))
    return loss, -_sigmoid(-pos) / B, _sigmoid(neg) / (B * n)


def _multiclass(pos, neg):
    B = len(pos)
    logits = np.concatenate([pos[:, None], neg], axis=1)
    m = logits.max(axis=1, keepdims=True)
    lse = (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))[:, 0]
    loss = np.mean(lse - pos)
    probs = _softmax(logits)
    return loss, (probs[:, 0] - 1.0) / B, probs[:, 1:] / B


def _self_adversarial(pos, neg, margin, temperature):
    # softmax weights over each row's negatives are treated as constants
    B = len(pos)
    weights = _softmax(temperature * neg)
    hinge = margin - pos[:, None] + neg
    active = (hinge > 0).astype(float)
    loss = np.sum(weights * hinge * active) / B
    d_neg = weights * active / B
    return loss, -d_neg.sum(axis=1), d_neg


def loss_and_grad(family, positive_scores, negative_scores, margin=1.0, temperature=1.0):
    """(loss, d loss / d positive, d loss / d negatives)."""
    pos = np.asarray(positive_scores, dtype=float).reshape(-1)
    neg = np.asarray(negative_scores, dtype=float)
    if pos.size == 0:
        raise TrainingError("empty batch")
    neg = neg.reshape(len(pos), -1)
    if neg.shape[1] == 0:
        raise TrainingError("every positive needs at least one negative")
    if family == 'pairwise_margin':
        return _margin(pos, neg, margin)
    if family == 'pointwise_logistic':
        return _logistic(pos, neg)
    if family == 'multiclass':
        return _multiclass(pos, neg)
    if family == 'self_adversarial':
        return _self_adversarial(pos, neg, margin, temperature)
    raise ValueError(f"unknown loss family '{family}'")


def batch_loss(family, positive_scores, negative_scores, margin=1.0, temperature=1.0):
    return float(loss_and_grad(family, positive_scores, negative_scores, margin, temperature)[0])
