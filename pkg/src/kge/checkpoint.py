"""
Checkpoint container.

Line 1 is the magic string, line 2 a JSON header listing the parameter
blocks (name and shape) in file order, followed by the blocks as
little-endian float64.
"""
import json
import logging

import numpy as np

from app_config import CHECKPOINT_MAGIC
from errors import CheckpointError
from kg_utils import AtomicFileSaver
from .models import KgeModel, check_kind

logger = logging.getLogger(__name__)

LE_FLOAT64 = np.dtype('<f8')


def write_container(path, header, blocks):
    header = dict(header)
    header['blocks'] = [{'name': name, 'shape': list(arr.shape)} for name, arr in blocks.items()]
    head = (CHECKPOINT_MAGIC + "\n" + json.dumps(header, sort_keys=True) + "\n").encode('utf-8')
    body = b''.join(np.ascontiguousarray(arr, dtype=LE_FLOAT64).tobytes() for arr in blocks.values())
    AtomicFileSaver.save_bytes(head + body, path)


def read_container(path):
    """(header, {name: array}) with blocks in header order."""
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")

    first = data.find(b"\n")
    second = data.find(b"\n", first + 1)
    if first < 0 or data[:first].decode('utf-8', 'replace') != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if second < 0:
        raise CheckpointError(f"{path}: missing header")
    try:
        header = json.loads(data[first + 1:second].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: malformed header ({e})")

    offset = second + 1
    blocks = {}
    for spec in header.get('blocks', []):
        shape = tuple(spec['shape'])
        nbytes = int(np.prod(shape, dtype=np.int64)) * LE_FLOAT64.itemsize
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated block '{spec['name']}'")
        arr = np.frombuffer(data, dtype=LE_FLOAT64, count=nbytes // 8, offset=offset)
        blocks[spec['name']] = arr.reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return header, blocks


def save_model(model: KgeModel, path):
    header = {
        'format': 'kge',
        'kind': model.kind,
        'entity_count': model.entity_count,
        'relation_count': model.relation_count,
        'dim': model.dim,
        'relation_dim': model.relation_dim,
        'seed': model.seed,
        'slices': model.slices,
        'meta': model.meta,
    }
    write_container(path, header, model.params)
    logger.info(f"[TRAIN] Saved {model.kind} checkpoint to {path}")


def load_model(path) -> KgeModel:
    header, blocks = read_container(path)
    if header.get('format') != 'kge':
        raise CheckpointError(f"{path}: not a shallow model checkpoint")
    try:
        check_kind(header['kind'])
    except ValueError as e:
        raise CheckpointError(str(e))
    return KgeModel(kind=header['kind'], params=blocks,
                    entity_count=header['entity_count'], relation_count=header['relation_count'],
                    dim=header['dim'], relation_dim=header['relation_dim'], seed=header['seed'],
                    slices=header['slices'], meta=header.get('meta', {}))
