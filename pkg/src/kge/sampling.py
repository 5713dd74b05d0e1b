"""
Uniform negative sampling by head or tail corruption.
"""
import numpy as np

from app_config import CORRUPTION_RETRIES
from errors import CorruptionExhaustedError


def _other_entity(rng, current, num_entities):
    idx = int(rng.integers(num_entities - 1))
    return idx + 1 if idx >= current else idx


def _replace(triple, slot, entity):
    h, r, t = triple
    return (entity, r, t) if slot == 0 else (h, r, entity)


def corrupt_triple(triple, kg, rng, filter_true=False, known=None):
    """
    Replace head or tail (fair coin) with a different uniformly drawn entity.
    With filter_true the corruption must not be a known-true triple: bounded
    resampling first, then an exhaustive scan over both slots.
    """
    if filter_true and known is None:
        known = kg.triple_set()
    return corrupt_among(triple, kg.num_entities, rng, filter_true, known)


def corrupt_among(triple, E, rng, filter_true=False, known=frozenset()):
    if E < 2:
        raise CorruptionExhaustedError("need at least two entities to corrupt a triple")
    triple = tuple(int(x) for x in triple)
    slot = 0 if rng.random() < 0.5 else 2
    candidate = _replace(triple, slot, _other_entity(rng, triple[slot], E))
    if not filter_true:
        return candidate

    for _ in range(CORRUPTION_RETRIES):
        if candidate not in known:
            return candidate
        candidate = _replace(triple, slot, _other_entity(rng, triple[slot], E))

    for s in (slot, 2 - slot):
        for e in range(E):
            if e == triple[s]:
                continue
            candidate = _replace(triple, s, e)
            if candidate not in known:
                return candidate
    raise CorruptionExhaustedError(f"every corruption of {triple} is a known-true triple")


def corrupt_batch(triples, num_entities, rng, negatives_per_positive=1):
    """(B, n, 3) negatives for a (B, 3) batch without truth filtering."""
    triples = np.asarray(triples, dtype=np.int64)
    B = len(triples)
    n = negatives_per_positive
    out = np.repeat(triples[:, None, :], n, axis=1)
    tail_side = rng.random((B, n)) >= 0.5
    slot = np.where(tail_side, 2, 0)
    current = np.take_along_axis(out, slot[:, :, None], axis=2)[:, :, 0]
    repl = rng.integers(num_entities - 1, size=(B, n))
    repl = repl + (repl >= current)
    np.put_along_axis(out, slot[:, :, None], repl[:, :, None], axis=2)
    return out
