"""
Per-query inference timing.
"""
import time
import logging
from dataclasses import dataclass, field

import pandas as pd

logger = logging.getLogger(__name__)


@dataclass
class TimingReport:
    name: str
    times_ms: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.times_ms)

    @property
    def mean_ms(self):
        return sum(self.times_ms) / len(self.times_ms)


def measure_inference(query_fn, entities, name='model', timer=time.perf_counter):
    """Wall time of query_fn(entity) per entity, sequentially, in milliseconds."""
    entities = list(entities)
    if not entities:
        raise ValueError("timing needs a nonempty test set")
    times = []
    for e in entities:
        start = timer()
        query_fn(e)
        times.append((timer() - start) * 1000.0)
    report = TimingReport(name=name, times_ms=times)
    logger.info(f"[BENCH] {name}: mean {report.mean_ms:.3f} ms over {report.n} queries")
    return report


def compare_timings(reports, baseline=None):
    """
    One row per model with its mean and the percentage deviation from the
    average mean of the baseline models (all but 'deep' by default).
    """
    reports = list(reports)
    baseline = set(baseline) if baseline is not None else {r.name for r in reports if r.name != 'deep'}
    base = [r.mean_ms for r in reports if r.name in baseline]
    base_avg = sum(base) / len(base) if base else None
    rows = []
    for r in reports:
        dev = (r.mean_ms - base_avg) / base_avg * 100.0 if base_avg else None
        rows.append({'model': r.name, 'queries': r.n, 'mean_ms': r.mean_ms, 'dev_pct': dev})
    return pd.DataFrame(rows, columns=['model', 'queries', 'mean_ms', 'dev_pct'])
