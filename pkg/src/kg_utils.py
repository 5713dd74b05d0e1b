import os
import io
import json
import hashlib
import logging

import pandas as pd

logger = logging.getLogger(__name__)


class AtomicFileSaver:
    """
    Writes files atomically to prevent half-written artifacts.
    Every payload goes to a .tmp sibling first and is then renamed over the target.
    """
    @staticmethod
    def _ensure_dir(filepath):
        dirname = os.path.dirname(filepath)
        if dirname and not os.path.exists(dirname):
            os.makedirs(dirname)

    @staticmethod
    def save_bytes(payload, filepath):
        AtomicFileSaver._ensure_dir(filepath)
        tmp_path = filepath + ".tmp"
        with open(tmp_path, 'wb') as f:
            f.write(payload)
        try:
            os.replace(tmp_path, filepath)
        except OSError as e:
            # Fallback for lock issues: remove then rename
            logger.warning(f"[SafeSave] Atomic replace failed ({e}), attempting delete-rename...")
            if os.path.exists(filepath):
                os.remove(filepath)
            os.rename(tmp_path, filepath)
        logger.debug(f"[SafeSave] Saved {filepath}")

    @staticmethod
    def save_text(text, filepath):
        AtomicFileSaver.save_bytes(text.encode('utf-8'), filepath)

    @staticmethod
    def save_frame(df, filepath, header=True):
        """TSV with LF line endings, no index."""
        buf = io.StringIO()
        df.to_csv(buf, sep='\t', index=False, header=header, lineterminator='\n')
        AtomicFileSaver.save_text(buf.getvalue(), filepath)

    @staticmethod
    def save_json(obj, filepath):
        AtomicFileSaver.save_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", filepath)


def read_tsv(filepath, **kwargs):
    return pd.read_csv(filepath, sep='\t', dtype=str, keep_default_na=False, **kwargs)


def calculate_sha256(file_path, block_size=1 << 16):
    """Hex digest of a corpus, graph TSV or checkpoint, as recorded in manifests and deep checkpoint headers."""
    digest = hashlib.sha256()
    with open(file_path, 'rb') as f:
        for block in iter(lambda: f.read(block_size), b''):
            digest.update(block)
    return digest.hexdigest()
