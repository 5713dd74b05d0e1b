"""
Deep app-pair recommender.

Each app's deep representation comes from a sampled receptive field: S
neighbors per node (with replacement) for K hops, aggregated with
relation attention driven by the root app's embedding and folded back
through K fully connected layers. The fused vector is the frozen shallow
TransD entity embedding concatenated with the deep output; a pair scores
sigmoid(fused_a . fused_b).
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from app_config import DEEP_DIM, NEIGHBOR_SAMPLE_SIZE, DEEP_DEPTH
from kgbuild import KnowledgeGraph

logger = logging.getLogger(__name__)

ACTIVATIONS = ('relu', 'tanh', 'sigmoid', 'identity')


def _act(name, x):
    if name == 'relu':
        return np.maximum(x, 0.0)
    if name == 'tanh':
        return np.tanh(x)
    if name == 'sigmoid':
        return sigmoid(x)
    return x


def _act_grad(name, pre, out):
    if name == 'relu':
        return (pre > 0).astype(float)
    if name == 'tanh':
        return 1.0 - out * out
    if name == 'sigmoid':
        return out * (1.0 - out)
    return np.ones_like(pre)


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


@dataclass
class DeepModel:
    shallow: object                  # trained TransD KgeModel, frozen
    params: dict                     # ent, rel, W1..WK, b1..bK
    depth: int = DEEP_DEPTH
    neighbor_sample_size: int = NEIGHBOR_SAMPLE_SIZE
    activation: str = 'relu'         # hidden layers; the last layer is identity
    seed: int = 42
    meta: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.params['ent'].shape[1]

    @property
    def entity_count(self):
        return self.params['ent'].shape[0]

    @property
    def shallow_embeddings(self):
        return self.shallow.params['ent']

    def layer_activation(self, k):
        return 'identity' if k == self.depth else self.activation

    def copy(self):
        return DeepModel(self.shallow, {k: v.copy() for k, v in self.params.items()}, self.depth,
                         self.neighbor_sample_size, self.activation, self.seed, dict(self.meta))


def init_deep_model(shallow, relation_count, dim=DEEP_DIM, depth=DEEP_DEPTH,
                    neighbor_sample_size=NEIGHBOR_SAMPLE_SIZE, activation='relu', seed=42):
    if depth < 1 or neighbor_sample_size < 1:
        raise ValueError("depth and neighbor_sample_size must be >= 1")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation '{activation}'")
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(dim)
    params = {
        'ent': rng.uniform(-bound, bound, size=(shallow.entity_count, dim)),
        'rel': rng.uniform(-bound, bound, size=(relation_count, dim)),
    }
    w_bound = np.sqrt(6.0 / (3 * dim))
    for k in range(1, depth + 1):
        params[f'W{k}'] = rng.uniform(-w_bound, w_bound, size=(dim, 2 * dim))
        params[f'b{k}'] = np.zeros(dim)
    return DeepModel(shallow=shallow, params=params, depth=depth,
                     neighbor_sample_size=neighbor_sample_size, activation=activation, seed=seed)


def train_graph(kg, splits):
    """Graph over the train split only, used for neighborhoods."""
    return KnowledgeGraph(kg.entities, kg.relations, splits.train)


def pair_rng(seed, a, b, *salt):
    """Generator seeded by the unordered pair so both orders sample alike."""
    return np.random.default_rng([int(seed), *map(int, salt), min(int(a), int(b)), max(int(a), int(b))])


# --- Single-vector building blocks ---

def attention_weights(anchor_embedding, relation_embeddings):
    """Softmax over inner products of the anchor with each triple's relation."""
    logits = np.asarray(relation_embeddings, dtype=float) @ np.asarray(anchor_embedding, dtype=float)
    z = np.exp(logits - logits.max())
    return z / z.sum()


def sample_neighbors(kg, node, S, rng):
    """(relations, tails) of S triples drawn with replacement; empty for isolated nodes."""
    rels, tails = kg.neighbors(node)
    if len(tails) == 0:
        return rels[:0], tails[:0]
    idx = rng.integers(len(tails), size=S)
    return rels[idx], tails[idx]


def aggregate_neighborhood(anchor, node, kg, model, rng, embeddings=None):
    """Attention-weighted sum over sampled neighbors; zero vector when isolated."""
    embeddings = model.params['ent'] if embeddings is None else embeddings
    rels, tails = sample_neighbors(kg, node, model.neighbor_sample_size, rng)
    if len(tails) == 0:
        return np.zeros(embeddings.shape[1])
    w = attention_weights(model.params['ent'][anchor], model.params['rel'][rels])
    return w @ embeddings[tails]


def layer_update(v, v_neighbors, W, b, activation='relu'):
    x = np.concatenate([np.asarray(v, dtype=float), np.asarray(v_neighbors, dtype=float)])
    W = np.asarray(W, dtype=float)
    if W.shape[1] != x.shape[0] or W.shape[0] != np.shape(b)[0]:
        raise ValueError(f"layer shape mismatch: W {W.shape}, input {x.shape}, bias {np.shape(b)}")
    return _act(activation, W @ x + b)


def fuse_embeddings(shallow, deep):
    return np.concatenate([np.asarray(shallow, dtype=float), np.asarray(deep, dtype=float)])


# --- Batched receptive fields ---

@dataclass
class ReceptiveField:
    """Per hop l: entities, relations and validity masks of shape (B, S**l)."""
    entities: list
    relations: list
    masks: list

    @property
    def roots(self):
        return self.entities[0][:, 0]


def sample_receptive_field(kg, root, S, K, rng):
    entities = [np.array([root], dtype=np.int64)]
    relations = [np.zeros(1, dtype=np.int64)]
    masks = [np.ones(1, dtype=bool)]
    for _ in range(K):
        ents, rels, mask = [], [], []
        for node, valid in zip(entities[-1].tolist(), masks[-1].tolist()):
            r, t = sample_neighbors(kg, node, S, rng) if valid else ([], [])
            if len(t):
                ents.append(t)
                rels.append(r)
                mask.append(np.ones(S, dtype=bool))
            else:
                ents.append(np.zeros(S, dtype=np.int64))
                rels.append(np.zeros(S, dtype=np.int64))
                mask.append(np.zeros(S, dtype=bool))
        entities.append(np.concatenate(ents))
        relations.append(np.concatenate(rels))
        masks.append(np.concatenate(mask))
    return entities, relations, masks


def stack_fields(fields):
    """List of single-root fields -> one batched ReceptiveField."""
    K = len(fields[0][0])
    return ReceptiveField(
        entities=[np.stack([f[0][l] for f in fields]) for l in range(K)],
        relations=[np.stack([f[1][l] for f in fields]) for l in range(K)],
        masks=[np.stack([f[2][l] for f in fields]) for l in range(K)],
    )


def _masked_softmax(logits, mask):
    z = np.where(mask, logits, -np.inf)
    top = z.max(axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(mask, np.exp(z - top), 0.0)
    total = e.sum(axis=-1, keepdims=True)
    return np.divide(e, total, out=np.zeros_like(e), where=total > 0)


def forward(model, field):
    """Deep outputs (B, d) plus the cache needed by backward."""
    p = model.params
    S, K = model.neighbor_sample_size, model.depth
    B, d = len(field.roots), model.dim
    u = p['ent'][field.roots]

    attn = [None]
    for l in range(1, K + 1):
        logits = np.einsum('bnd,bd->bn', p['rel'][field.relations[l]], u)
        attn.append(_masked_softmax(logits.reshape(B, -1, S), field.masks[l].reshape(B, -1, S)))

    H = [p['ent'][field.entities[l]] for l in range(K + 1)]
    steps = []
    for k in range(1, K + 1):
        W, b = p[f'W{k}'], p[f'b{k}']
        act = model.layer_activation(k)
        new_H, layer = [], []
        for l in range(K - k + 1):
            n = H[l].shape[1]
            children = H[l + 1].reshape(B, n, S, d)
            agg = np.einsum('bps,bpsd->bpd', attn[l + 1], children)
            x = np.concatenate([H[l], agg], axis=-1)
            pre = x @ W.T + b
            out = _act(act, pre)
            new_H.append(out)
            layer.append((x, pre, out))
        steps.append((H, layer))
        H = new_H
    return H[0][:, 0, :], {'u': u, 'attn': attn, 'steps': steps}


def backward(model, field, cache, d_out):
    """Gradients of sum(d_out * outputs) for ent, rel and the layer weights."""
    p = model.params
    S, K = model.neighbor_sample_size, model.depth
    B, d = len(field.roots), model.dim
    grads = {name: np.zeros_like(v) for name, v in p.items()}
    d_attn = [None] + [np.zeros_like(a) for a in cache['attn'][1:]]

    d_H = [d_out[:, None, :]]
    for k in range(K, 0, -1):
        H_prev, layer = cache['steps'][k - 1]
        W = p[f'W{k}']
        act = model.layer_activation(k)
        d_prev = [np.zeros_like(h) for h in H_prev]
        for l, (x, pre, out) in enumerate(layer):
            d_pre = d_H[l] * _act_grad(act, pre, out)
            grads[f'W{k}'] += np.einsum('bpi,bpj->ij', d_pre, x)
            grads[f'b{k}'] += d_pre.sum(axis=(0, 1))
            d_x = d_pre @ W
            d_prev[l] += d_x[..., :d]
            d_agg = d_x[..., d:]
            n = H_prev[l].shape[1]
            children = H_prev[l + 1].reshape(B, n, S, d)
            d_attn[l + 1] += np.einsum('bpd,bpsd->bps', d_agg, children)
            d_prev[l + 1] += np.einsum('bps,bpd->bpsd', cache['attn'][l + 1], d_agg).reshape(B, n * S, d)
        d_H = d_prev

    for l in range(K + 1):
        np.add.at(grads['ent'], field.entities[l].reshape(-1), d_H[l].reshape(-1, d))

    u = cache['u']
    d_u = np.zeros_like(u)
    for l in range(1, K + 1):
        A = cache['attn'][l]
        d_logits = A * (d_attn[l] - np.sum(A * d_attn[l], axis=-1, keepdims=True))
        d_logits = d_logits.reshape(B, -1)
        R = p['rel'][field.relations[l]]
        d_u += np.einsum('bn,bnd->bd', d_logits, R)
        np.add.at(grads['rel'], field.relations[l].reshape(-1),
                  (d_logits[:, :, None] * u[:, None, :]).reshape(-1, d))
    np.add.at(grads['ent'], field.roots, d_u)
    return grads


def propagate(anchor, kg, model, rng):
    """Depth-K deep vector of one app."""
    field = stack_fields([sample_receptive_field(kg, anchor, model.neighbor_sample_size, model.depth, rng)])
    return forward(model, field)[0][0]


def pair_fields(model, kg, pairs, salt=()):
    """Receptive fields for both sides of each pair, sampled with the pair's own generator."""
    left, right = [], []
    S, K = model.neighbor_sample_size, model.depth
    for a, b in pairs:
        rng = pair_rng(model.seed, a, b, *salt)
        first, second = (a, b) if a <= b else (b, a)
        f_first = sample_receptive_field(kg, first, S, K, rng)
        f_second = sample_receptive_field(kg, second, S, K, rng)
        fa, fb = (f_first, f_second) if a <= b else (f_second, f_first)
        left.append(fa)
        right.append(fb)
    return stack_fields(left), stack_fields(right)


def pair_logits(model, kg, pairs, salt=()):
    """Raw fused inner products plus what backward needs."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    f_left, f_right = pair_fields(model, kg, pairs.tolist(), salt)
    o_left, c_left = forward(model, f_left)
    o_right, c_right = forward(model, f_right)
    sh = model.shallow_embeddings
    logits = np.sum(sh[pairs[:, 0]] * sh[pairs[:, 1]], axis=1) + np.sum(o_left * o_right, axis=1)
    return logits, (f_left, c_left, o_left, f_right, c_right, o_right)


def pair_gradients(model, state, d_logits):
    f_left, c_left, o_left, f_right, c_right, o_right = state
    g_left = backward(model, f_left, c_left, d_logits[:, None] * o_right)
    g_right = backward(model, f_right, c_right, d_logits[:, None] * o_left)
    return {k: g_left[k] + g_right[k] for k in g_left}


def score_app_pairs(model, kg, pairs, salt=()):
    return sigmoid(pair_logits(model, kg, pairs, salt)[0])


def score_app_pair(model, app1, app2, kg, rng=None):
    """
    Probability that two apps are similar. Without an explicit rng the
    receptive fields are seeded by the unordered pair, which makes the
    score symmetric.
    """
    if rng is None:
        return float(score_app_pairs(model, kg, [(app1, app2)])[0])
    S, K = model.neighbor_sample_size, model.depth
    f1 = stack_fields([sample_receptive_field(kg, app1, S, K, rng)])
    f2 = stack_fields([sample_receptive_field(kg, app2, S, K, rng)])
    a = fuse_embeddings(model.shallow_embeddings[app1], forward(model, f1)[0][0])
    b = fuse_embeddings(model.shallow_embeddings[app2], forward(model, f2)[0][0])
    return float(sigmoid(a @ b))
