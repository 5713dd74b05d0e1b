"""
Deep model checkpoints: the deep parameter blocks plus a reference (path and
SHA-256) to the shallow TransD checkpoint they were trained against.
"""
import os
import logging

from errors import CheckpointError
from kg_utils import calculate_sha256
from kge.checkpoint import write_container, read_container, load_model
from .model import DeepModel

logger = logging.getLogger(__name__)


def save_deep_model(model: DeepModel, path, shallow_path):
    header = {
        'format': 'deep',
        'shallow_checkpoint': os.path.relpath(shallow_path, os.path.dirname(os.path.abspath(path))),
        'shallow_sha256': calculate_sha256(shallow_path),
        'depth': model.depth,
        'neighbor_sample_size': model.neighbor_sample_size,
        'activation': model.activation,
        'seed': model.seed,
        'meta': model.meta,
    }
    write_container(path, header, model.params)
    logger.info(f"[DEEP] Saved deep checkpoint to {path}")


def load_deep_model(path) -> DeepModel:
    header, blocks = read_container(path)
    if header.get('format') != 'deep':
        raise CheckpointError(f"{path}: not a deep model checkpoint")
    shallow_path = os.path.join(os.path.dirname(os.path.abspath(path)), header['shallow_checkpoint'])
    if not os.path.exists(shallow_path):
        raise CheckpointError(f"{path}: shallow checkpoint {shallow_path} is missing")
    if calculate_sha256(shallow_path) != header['shallow_sha256']:
        raise CheckpointError(f"{path}: shallow checkpoint {shallow_path} has changed since training")
    return DeepModel(shallow=load_model(shallow_path), params=blocks, depth=header['depth'],
                     neighbor_sample_size=header['neighbor_sample_size'],
                     activation=header['activation'], seed=header['seed'], meta=header.get('meta', {}))
