"""
Seeded random search over TrainConfig fields, scored by validation filtered MRR.
"""
import logging
from dataclasses import dataclass, replace, fields

import numpy as np
import pandas as pd
from sklearn.model_selection import ParameterSampler

from errors import AppGraphError, SearchError, ConfigError
from .training import TrainConfig, train_model, validation_score

logger = logging.getLogger(__name__)

CONFIG_FIELDS = {f.name for f in fields(TrainConfig)}


@dataclass
class TrialResult:
    index: int
    params: dict
    objective: float = None
    error: str = None


def sample_configs(space, budget, seed, base=None):
    """budget TrainConfigs drawn from space (field -> list of values or a scipy-style distribution)."""
    if budget < 1:
        raise ConfigError("search budget must be >= 1")
    unknown = set(space) - CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"unknown search fields: {', '.join(sorted(unknown))}")
    base = base or TrainConfig()
    sampler = ParameterSampler(space, n_iter=budget, random_state=seed)
    return [(dict(p), replace(base, **p)) for p in sampler]


def search_trials(space, budget, seed, kind, splits, base=None,
                  entity_count=None, relation_count=None):
    trials = []
    for i, (params, config) in enumerate(sample_configs(space, budget, seed, base)):
        trial = TrialResult(index=i, params=params)
        try:
            model = train_model(splits, config, kind, entity_count, relation_count)
            trial.objective = float(validation_score(model, splits, config.n_jobs))
            logger.info(f"[SEARCH] trial {i} {params}: valid filtered MRR {trial.objective:.4f}")
        except (AppGraphError, ValueError, FloatingPointError) as e:
            trial.error = str(e)
            logger.warning(f"[SEARCH] trial {i} {params} failed: {e}")
        trials.append(trial)
    return trials


def trials_frame(trials):
    return pd.DataFrame([{'trial': t.index, **t.params, 'objective': t.objective, 'error': t.error}
                         for t in trials])


def best_trial(trials):
    """Highest finite objective; ties go to the earliest trial."""
    ok = [t for t in trials if t.objective is not None and np.isfinite(t.objective)]
    if not ok:
        raise SearchError([(t.index, t.error or 'non-finite objective') for t in trials])
    return max(ok, key=lambda t: (t.objective, -t.index))


def hyperparameter_search(space, budget, seed, kind, splits, base=None,
                          entity_count=None, relation_count=None) -> TrainConfig:
    """Best sampled TrainConfig."""
    trials = search_trials(space, budget, seed, kind, splits, base, entity_count, relation_count)
    best = best_trial(trials)
    logger.info(f"[SEARCH] best trial {best.index}: {best.params} ({best.objective:.4f})")
    return replace(base or TrainConfig(), **best.params)
