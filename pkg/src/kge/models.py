"""
Shallow knowledge graph embedding models.

Every score function is oriented higher = more plausible; the translational
and rotational kinds return the negated squared distance. Each kind supplies
vectorized scoring over index arrays, the analytic gradient of a weighted sum
of scores, and the projection that restores its parameter constraints.
"""
import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from app_config import KGE_KINDS, NTN_SLICES

logger = logging.getLogger(__name__)


@dataclass
class KgeModel:
    kind: str
    params: dict
    entity_count: int
    relation_count: int
    dim: int
    relation_dim: int
    seed: int
    slices: int = NTN_SLICES
    meta: dict = field(default_factory=dict)

    def copy(self):
        return KgeModel(self.kind, {k: v.copy() for k, v in self.params.items()},
                        self.entity_count, self.relation_count, self.dim, self.relation_dim,
                        self.seed, self.slices, copy.deepcopy(self.meta))

    @property
    def score_function(self):
        return SCORE_FUNCTIONS[self.kind]


def _scatter(shape, index, values):
    out = np.zeros(shape)
    np.add.at(out, index, values)
    return out


class ScoreFunction:
    """Base class; subclasses declare parameter shapes and their own math."""
    entity_params = ()

    def shapes(self, E, R, d, dr, k):
        raise NotImplementedError

    def score(self, p, h, r, t):
        raise NotImplementedError

    def grad(self, p, h, r, t, g):
        raise NotImplementedError

    def project(self, p):
        pass


class TransE(ScoreFunction):
    def shapes(self, E, R, d, dr, k):
        return {'ent': (E, d), 'rel': (R, d)}

    def _diff(self, p, h, r, t):
        return p['ent'][h] + p['rel'][r] - p['ent'][t]

    def score(self, p, h, r, t):
        diff = self._diff(p, h, r, t)
        return -np.sum(diff * diff, axis=-1)

    def grad(self, p, h, r, t, g):
        G = -2.0 * g[:, None] * self._diff(p, h, r, t)
        ent = _scatter(p['ent'].shape, h, G)
        np.add.at(ent, t, -G)
        return {'ent': ent, 'rel': _scatter(p['rel'].shape, r, G)}


class TransH(ScoreFunction):
    def shapes(self, E, R, d, dr, k):
        return {'ent': (E, d), 'norm': (R, d), 'trans': (R, d)}

    def _parts(self, p, h, r, t):
        e = p['ent'][h] - p['ent'][t]
        w = p['norm'][r]
        a = np.sum(w * e, axis=-1, keepdims=True)
        return e, w, a, e - a * w + p['trans'][r]

    def score(self, p, h, r, t):
        diff = self._parts(p, h, r, t)[3]
        return -np.sum(diff * diff, axis=-1)

    def grad(self, p, h, r, t, g):
        e, w, a, diff = self._parts(p, h, r, t)
        G = -2.0 * g[:, None] * diff
        wG = np.sum(w * G, axis=-1, keepdims=True)
        grad_e = G - w * wG
        grad_w = -(wG * e + a * G)
        ent = _scatter(p['ent'].shape, h, grad_e)
        np.add.at(ent, t, -grad_e)
        return {'ent': ent,
                'norm': _scatter(p['norm'].shape, r, grad_w),
                'trans': _scatter(p['trans'].shape, r, G)}

    def project(self, p):
        norms = np.linalg.norm(p['norm'], axis=-1, keepdims=True)
        p['norm'] /= np.maximum(norms, 1e-12)


class TransD(ScoreFunction):
    def shapes(self, E, R, d, dr, k):
        return {'ent': (E, d), 'ent_p': (E, d), 'rel': (R, d), 'rel_p': (R, d)}

    def _parts(self, p, h, r, t):
        hv, tv = p['ent'][h], p['ent'][t]
        hp, tp, rp = p['ent_p'][h], p['ent_p'][t], p['rel_p'][r]
        ah = np.sum(hp * hv, axis=-1, keepdims=True)
        at = np.sum(tp * tv, axis=-1, keepdims=True)
        diff = hv + rp * ah + p['rel'][r] - (tv + rp * at)
        return hv, tv, hp, tp, rp, ah, at, diff

    def score(self, p, h, r, t):
        diff = self._parts(p, h, r, t)[-1]
        return -np.sum(diff * diff, axis=-1)

    def grad(self, p, h, r, t, g):
        hv, tv, hp, tp, rp, ah, at, diff = self._parts(p, h, r, t)
        G = -2.0 * g[:, None] * diff
        rG = np.sum(rp * G, axis=-1, keepdims=True)
        ent = _scatter(p['ent'].shape, h, G + hp * rG)
        np.add.at(ent, t, -(G + tp * rG))
        ent_p = _scatter(p['ent_p'].shape, h, rG * hv)
        np.add.at(ent_p, t, -rG * tv)
        return {'ent': ent, 'ent_p': ent_p,
                'rel': _scatter(p['rel'].shape, r, G),
                'rel_p': _scatter(p['rel_p'].shape, r, G * (ah - at))}


class RESCAL(ScoreFunction):
    def shapes(self, E, R, d, dr, k):
        return {'ent': (E, d), 'rel_mat': (R, d, d)}

    def score(self, p, h, r, t):
        return np.einsum('bi,bij,bj->b', p['ent'][h], p['rel_mat'][r], p['ent'][t])

    def grad(self, p, h, r, t, g):
        hv, tv, M = p['ent'][h], p['ent'][t], p['rel_mat'][r]
        ent = _scatter(p['ent'].shape, h, g[:, None] * np.einsum('bij,bj->bi', M, tv))
        np.add.at(ent, t, g[:, None] * np.einsum('bij,bi->bj', M, hv))
        dM = g[:, None, None] * hv[:, :, None] * tv[:, None, :]
        return {'ent': ent, 'rel_mat': _scatter(p['rel_mat'].shape, r, dM)}


class RotatE(ScoreFunction):
    """Complex entities; relations stored as phases so every rotation has modulus 1."""
    def shapes(self, E, R, d, dr, k):
        return {'ent_re': (E, d), 'ent_im': (E, d), 'phase': (R, d)}

    def _parts(self, p, h, r, t):
        hr, hi = p['ent_re'][h], p['ent_im'][h]
        c, s = np.cos(p['phase'][r]), np.sin(p['phase'][r])
        re = hr * c - hi * s
        im = hr * s + hi * c
        return hr, hi, c, s, re, im, re - p['ent_re'][t], im - p['ent_im'][t]

    def score(self, p, h, r, t):
        d_re, d_im = self._parts(p, h, r, t)[-2:]
        return -np.sum(d_re * d_re + d_im * d_im, axis=-1)

    def grad(self, p, h, r, t, g):
        hr, hi, c, s, re, im, d_re, d_im = self._parts(p, h, r, t)
        G_re = -2.0 * g[:, None] * d_re
        G_im = -2.0 * g[:, None] * d_im
        ent_re = _scatter(p['ent_re'].shape, h, G_re * c + G_im * s)
        np.add.at(ent_re, t, -G_re)
        ent_im = _scatter(p['ent_im'].shape, h, -G_re * s + G_im * c)
        np.add.at(ent_im, t, -G_im)
        return {'ent_re': ent_re, 'ent_im': ent_im,
                'phase': _scatter(p['phase'].shape, r, -G_re * im + G_im * re)}

    def project(self, p):
        # wrap into [-pi, pi); wrapping a wrapped phase is a no-op
        p['phase'][:] = np.mod(p['phase'] + np.pi, 2.0 * np.pi) - np.pi


class ComplEx(ScoreFunction):
    def shapes(self, E, R, d, dr, k):
        return {'ent_re': (E, d), 'ent_im': (E, d), 'rel_re': (R, d), 'rel_im': (R, d)}

    def score(self, p, h, r, t):
        hr, hi = p['ent_re'][h], p['ent_im'][h]
        tr, ti = p['ent_re'][t], p['ent_im'][t]
        rr, ri = p['rel_re'][r], p['rel_im'][r]
        return np.sum(hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr, axis=-1)

    def grad(self, p, h, r, t, g):
        hr, hi = p['ent_re'][h], p['ent_im'][h]
        tr, ti = p['ent_re'][t], p['ent_im'][t]
        rr, ri = p['rel_re'][r], p['rel_im'][r]
        g = g[:, None]
        ent_re = _scatter(p['ent_re'].shape, h, g * (rr * tr + ri * ti))
        np.add.at(ent_re, t, g * (hr * rr - hi * ri))
        ent_im = _scatter(p['ent_im'].shape, h, g * (rr * ti - ri * tr))
        np.add.at(ent_im, t, g * (hi * rr + hr * ri))
        return {'ent_re': ent_re, 'ent_im': ent_im,
                'rel_re': _scatter(p['rel_re'].shape, r, g * (hr * tr + hi * ti)),
                'rel_im': _scatter(p['rel_im'].shape, r, g * (hr * ti - hi * tr))}


class DistMult(ScoreFunction):
    def shapes(self, E, R, d, dr, k):
        return {'ent': (E, d), 'rel': (R, d)}

    def score(self, p, h, r, t):
        return np.sum(p['ent'][h] * p['rel'][r] * p['ent'][t], axis=-1)

    def grad(self, p, h, r, t, g):
        hv, rv, tv = p['ent'][h], p['rel'][r], p['ent'][t]
        g = g[:, None]
        ent = _scatter(p['ent'].shape, h, g * rv * tv)
        np.add.at(ent, t, g * hv * rv)
        return {'ent': ent, 'rel': _scatter(p['rel'].shape, r, g * hv * tv)}


class SimplE(ScoreFunction):
    """Head/tail embedding per entity; the inverse relation ties the two roles together."""
    def shapes(self, E, R, d, dr, k):
        return {'ent_h': (E, d), 'ent_t': (E, d), 'rel': (R, d), 'rel_inv': (R, d)}

    def score(self, p, h, r, t):
        fwd = np.sum(p['ent_h'][h] * p['rel'][r] * p['ent_t'][t], axis=-1)
        inv = np.sum(p['ent_h'][t] * p['rel_inv'][r] * p['ent_t'][h], axis=-1)
        return 0.5 * (fwd + inv)

    def grad(self, p, h, r, t, g):
        hh, ht = p['ent_h'][h], p['ent_t'][h]
        th, tt = p['ent_h'][t], p['ent_t'][t]
        rv, ri = p['rel'][r], p['rel_inv'][r]
        g = 0.5 * g[:, None]
        ent_h = _scatter(p['ent_h'].shape, h, g * rv * tt)
        np.add.at(ent_h, t, g * ri * ht)
        ent_t = _scatter(p['ent_t'].shape, t, g * hh * rv)
        np.add.at(ent_t, h, g * th * ri)
        return {'ent_h': ent_h, 'ent_t': ent_t,
                'rel': _scatter(p['rel'].shape, r, g * hh * tt),
                'rel_inv': _scatter(p['rel_inv'].shape, r, g * th * ht)}


class TuckER(ScoreFunction):
    def shapes(self, E, R, d, dr, k):
        return {'ent': (E, d), 'rel': (R, dr), 'core': (d, dr, d)}

    def score(self, p, h, r, t):
        W_r = np.einsum('ijk,bj->bik', p['core'], p['rel'][r])
        return np.einsum('bi,bik,bk->b', p['ent'][h], W_r, p['ent'][t])

    def grad(self, p, h, r, t, g):
        W = p['core']
        hv, rv, tv = p['ent'][h], p['rel'][r], p['ent'][t]
        W_r = np.einsum('ijk,bj->bik', W, rv)
        gh = g[:, None] * hv
        ent = _scatter(p['ent'].shape, h, g[:, None] * np.einsum('bik,bk->bi', W_r, tv))
        np.add.at(ent, t, np.einsum('bik,bi->bk', W_r, gh))
        d_rel = np.einsum('ijk,bi,bk->bj', W, gh, tv)
        d_core = np.einsum('bi,bj,bk->ijk', gh, rv, tv)
        return {'ent': ent, 'rel': _scatter(p['rel'].shape, r, d_rel), 'core': d_core}


class NTN(ScoreFunction):
    """u_r . tanh(h W_r t + M_r [h; t] + b_r) with k bilinear slices per relation."""
    def shapes(self, E, R, d, dr, k):
        return {'ent': (E, d), 'slab': (R, k, d, d), 'lin': (R, k, 2 * d),
                'bias': (R, k), 'comb': (R, k)}

    def _activation(self, p, h, r, t):
        hv, tv = p['ent'][h], p['ent'][t]
        d = hv.shape[-1]
        lin = p['lin'][r]
        x = (np.einsum('bi,bkij,bj->bk', hv, p['slab'][r], tv)
             + np.einsum('bki,bi->bk', lin[:, :, :d], hv)
             + np.einsum('bki,bi->bk', lin[:, :, d:], tv)
             + p['bias'][r])
        return hv, tv, np.tanh(x)

    def score(self, p, h, r, t):
        a = self._activation(p, h, r, t)[2]
        return np.sum(p['comb'][r] * a, axis=-1)

    def grad(self, p, h, r, t, g):
        hv, tv, a = self._activation(p, h, r, t)
        d = hv.shape[-1]
        slab, lin = p['slab'][r], p['lin'][r]
        Gx = g[:, None] * p['comb'][r] * (1.0 - a * a)
        grad_h = np.einsum('bk,bkij,bj->bi', Gx, slab, tv) + np.einsum('bk,bki->bi', Gx, lin[:, :, :d])
        grad_t = np.einsum('bk,bkij,bi->bj', Gx, slab, hv) + np.einsum('bk,bki->bi', Gx, lin[:, :, d:])
        ent = _scatter(p['ent'].shape, h, grad_h)
        np.add.at(ent, t, grad_t)
        d_slab = Gx[:, :, None, None] * hv[:, None, :, None] * tv[:, None, None, :]
        d_lin = Gx[:, :, None] * np.concatenate([hv, tv], axis=-1)[:, None, :]
        return {'ent': ent,
                'slab': _scatter(p['slab'].shape, r, d_slab),
                'lin': _scatter(p['lin'].shape, r, d_lin),
                'bias': _scatter(p['bias'].shape, r, Gx),
                'comb': _scatter(p['comb'].shape, r, g[:, None] * a)}


SCORE_FUNCTIONS = {
    'NTN': NTN(), 'TransE': TransE(), 'TransH': TransH(), 'TransD': TransD(),
    'RESCAL': RESCAL(), 'RotatE': RotatE(), 'ComplEx': ComplEx(),
    'DistMult': DistMult(), 'SimplE': SimplE(), 'TuckER': TuckER(),
}


def check_kind(kind):
    if kind not in SCORE_FUNCTIONS:
        raise ValueError(f"unknown model kind '{kind}', expected one of {', '.join(KGE_KINDS)}")
    return kind


def init_model(kind, dim, entity_count, relation_count, seed, relation_dim=None, slices=NTN_SLICES):
    """Uniform init in [-6/sqrt(dim), 6/sqrt(dim)], then constraint projection."""
    check_kind(kind)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    relation_dim = relation_dim or dim
    fn = SCORE_FUNCTIONS[kind]
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(dim)
    params = {}
    for name, shape in fn.shapes(entity_count, relation_count, dim, relation_dim, slices).items():
        params[name] = rng.uniform(-bound, bound, size=shape)
    fn.project(params)
    return KgeModel(kind=kind, params=params, entity_count=entity_count,
                    relation_count=relation_count, dim=dim, relation_dim=relation_dim,
                    seed=seed, slices=slices)


def _as_index(x):
    return np.atleast_1d(np.asarray(x, dtype=np.int64))


def score_triples(model, h, r, t):
    h, r, t = np.broadcast_arrays(_as_index(h), _as_index(r), _as_index(t))
    return model.score_function.score(model.params, h, r, t)


def score_triple(model, h, r, t):
    return float(score_triples(model, h, r, t)[0])


def score_gradients(model, h, r, t, weights):
    """Gradient of sum(weights * score(h, r, t)) w.r.t. every parameter block."""
    h, r, t = np.broadcast_arrays(_as_index(h), _as_index(r), _as_index(t))
    weights = np.asarray(weights, dtype=float).reshape(-1)
    grads = model.score_function.grad(model.params, h, r, t, weights)
    for name, value in model.params.items():
        grads.setdefault(name, np.zeros_like(value))
    return grads


def project(model):
    model.score_function.project(model.params)
    return model


def is_finite(model):
    return all(np.isfinite(v).all() for v in model.params.values())
