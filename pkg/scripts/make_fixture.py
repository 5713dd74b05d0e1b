import os
import sys
import logging
import argparse
import datetime

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(os.path.join(PROJECT_ROOT, 'src'))

from ingest import SyntheticConfig, generate_synthetic_corpus, serialize_app_records
from kg_utils import AtomicFileSaver, calculate_sha256

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')


def main():
    parser = argparse.ArgumentParser(description='Write a synthetic app corpus (JSON lines)')
    parser.add_argument('--out', default=os.path.join(PROJECT_ROOT, 'data', 'corpus.jsonl'))
    parser.add_argument('--count', type=int, default=1793)
    parser.add_argument('--seed', type=int, default=7)
    parser.add_argument('--missing-rate', type=float, default=0.0)
    parser.add_argument('--store', default='play', choices=['play', 'apple'])
    parser.add_argument('--snapshot-date', default='2022-05-04')
    args = parser.parse_args()

    config = SyntheticConfig(seed=args.seed, count=args.count, missing_rate=args.missing_rate,
                             store=args.store,
                             snapshot_date=datetime.date.fromisoformat(args.snapshot_date))
    records = generate_synthetic_corpus(config)
    AtomicFileSaver.save_bytes(serialize_app_records(records), args.out)
    logging.info(f"Wrote {len(records)} records to {args.out} (sha256 {calculate_sha256(args.out)})")


if __name__ == '__main__':
    main()
