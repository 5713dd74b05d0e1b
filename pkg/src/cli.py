"""
Command-line front end: build, stats, train, eval, search, ablate, recommend,
relations, bench and synth, all driven by one INI config file.

Exit codes: 0 success, 2 configuration / usage / missing input, 3 IO or
runtime failure.
"""
import os
import sys
import logging
import argparse
import datetime
import configparser
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from app_config import (
    ABLATION_GROUPS, KGE_KINDS, REC_K_LIST, REL_K_LIST, SPLIT_RATIOS,
    EDGES_PER_RELATION,
)
from errors import AppGraphError, ConfigError
from kg_utils import AtomicFileSaver, calculate_sha256
from ingest import load_corpus, validate_records, SyntheticConfig, generate_synthetic_corpus, serialize_app_records
from kgbuild import (
    AppBinner, build_triples, split_triples, write_graph_dir, read_graph_dir,
)
from kgstats import relatedness_matrix, relatedness_table, graph_statistics, stats_frame
from kge.training import TrainConfig, train_model, select_best_model
from kge.evaluation import evaluate_link_prediction, build_filter, report_frame
from kge.search import search_trials, best_trial, trials_frame
from kge.checkpoint import save_model, load_model
from deeprec.model import train_graph
from deeprec.training import DeepConfig, train_deep
from deeprec.evaluation import (
    evaluate_recommendations, evaluate_relation_prediction, recommend_top_k, recommendation_frame,
    predict_relations,
)
from deeprec.timing import measure_inference, compare_timings
from deeprec.checkpoint import save_deep_model, load_deep_model

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


# --- Configuration ---

def _floats(text):
    return tuple(float(x) for x in text.split(',') if x.strip())


def _ints(text):
    return tuple(int(x) for x in text.split(',') if x.strip())


def _names(text):
    return tuple(x.strip() for x in text.split(',') if x.strip())


def _mix(text):
    out = {}
    for part in _names(text):
        key, sep, value = part.partition(':')
        if not sep:
            raise ConfigError(f"expected 'name: share' in mix entry '{part}'")
        out[key.strip()] = float(value)
    return out


def _date(text):
    try:
        return datetime.date.fromisoformat(text.strip())
    except ValueError:
        raise ConfigError(f"snapshot_date must be an ISO date, got '{text}'")


@dataclass
class AblationPlan:
    group: str
    relations: tuple

    @classmethod
    def from_id(cls, group):
        key = group.lower()
        if key not in ABLATION_GROUPS:
            raise ConfigError(f"unknown ablation group '{group}', expected one of {', '.join(ABLATION_GROUPS)}")
        return cls(group=key, relations=ABLATION_GROUPS[key])


@dataclass
class RunConfig:
    config_path: str = None
    corpus: str = 'data/corpus.jsonl'
    workdir: str = 'output'
    snapshot_date: datetime.date = None
    k: int = EDGES_PER_RELATION
    released_scheme: str = 'text'
    size_scheme: str = 'text'
    split_ratios: tuple = SPLIT_RATIOS
    split_seed: int = 42
    kinds: tuple = ('TransE', 'RotatE', 'ComplEx')
    train: TrainConfig = field(default_factory=TrainConfig)
    deep: DeepConfig = field(default_factory=DeepConfig)
    rec_k_list: tuple = REC_K_LIST
    rel_k_list: tuple = REL_K_LIST
    n_jobs: int = 1
    ablation_models: tuple = ('ComplEx', 'RotatE')
    search_budget: int = 4
    search_seed: int = 7
    search_space: dict = field(default_factory=dict)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    # Workdir layout
    @property
    def kg_dir(self):
        return os.path.join(self.workdir, 'kg')

    @property
    def models_dir(self):
        return os.path.join(self.workdir, 'models')

    @property
    def reports_dir(self):
        return os.path.join(self.workdir, 'reports')

    def checkpoint(self, kind):
        return os.path.join(self.models_dir, f"{kind}.ckpt")

    def report(self, name):
        return os.path.join(self.reports_dir, name)


TRAIN_KEYS = {
    'dim': int, 'epochs': int, 'batch_size': int, 'learning_rate': float,
    'negatives_per_positive': int, 'margin': float, 'l2_weight': float, 'seed': int,
    'eval_every': int, 'adversarial_temperature': float, 'slices': int,
    'loss_family': str, 'optimizer': str,
}
DEEP_KEYS = {
    'dim': int, 'neighbor_sample_size': int, 'depth': int, 'batch_size': int,
    'learning_rate': float, 'l2_weight': float, 'epochs': int, 'seed': int, 'activation': str,
}
SEARCH_KEYS = {'learning_rate': float, 'margin': float, 'dim': int, 'l2_weight': float,
               'negatives_per_positive': int, 'batch_size': int}


def _section_values(parser, section, keys):
    if not parser.has_section(section):
        return {}
    out = {}
    for key, cast in keys.items():
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                out[key] = cast(raw)
            except ValueError:
                raise ConfigError(f"[{section}] {key}: cannot read '{raw}'")
    return out


def load_run_config(path, overrides=None) -> RunConfig:
    """Reads the INI file; relative paths resolve against its directory. Overrides win."""
    overrides = overrides or {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding='utf-8')
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e}")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(base, p))

    try:
        cfg = RunConfig(config_path=os.path.abspath(path))
        cfg.corpus = resolve(parser.get('paths', 'corpus', fallback=cfg.corpus))
        cfg.workdir = resolve(parser.get('paths', 'workdir', fallback=cfg.workdir))
        if not parser.has_option('graph', 'snapshot_date'):
            raise ConfigError("[graph] snapshot_date is required")
        cfg.snapshot_date = _date(parser.get('graph', 'snapshot_date'))
        cfg.k = parser.getint('graph', 'edges_per_relation', fallback=cfg.k)
        cfg.released_scheme = parser.get('graph', 'released_scheme', fallback=cfg.released_scheme)
        cfg.size_scheme = parser.get('graph', 'size_scheme', fallback=cfg.size_scheme)
        if parser.has_option('split', 'ratios'):
            cfg.split_ratios = _floats(parser.get('split', 'ratios'))
        cfg.split_seed = parser.getint('split', 'seed', fallback=cfg.split_seed)

        if parser.has_option('train', 'kinds'):
            cfg.kinds = _names(parser.get('train', 'kinds'))
        cfg.train = replace(TrainConfig(), **_section_values(parser, 'train', TRAIN_KEYS))
        cfg.deep = replace(DeepConfig(), **_section_values(parser, 'deep', DEEP_KEYS))

        if parser.has_option('eval', 'rec_k_list'):
            cfg.rec_k_list = _ints(parser.get('eval', 'rec_k_list'))
        if parser.has_option('eval', 'rel_k_list'):
            cfg.rel_k_list = _ints(parser.get('eval', 'rel_k_list'))
        cfg.n_jobs = parser.getint('eval', 'n_jobs', fallback=cfg.n_jobs)
        cfg.train = replace(cfg.train, n_jobs=cfg.n_jobs)
        if parser.has_option('ablation', 'models'):
            cfg.ablation_models = _names(parser.get('ablation', 'models'))

        cfg.search_budget = parser.getint('search', 'budget', fallback=cfg.search_budget)
        cfg.search_seed = parser.getint('search', 'seed', fallback=cfg.search_seed)
        if parser.has_section('search'):
            for key, cast in SEARCH_KEYS.items():
                if parser.has_option('search', key):
                    cfg.search_space[key] = [cast(v) for v in _names(parser.get('search', key))]

        syn = SyntheticConfig(snapshot_date=cfg.snapshot_date)
        if parser.has_section('synthetic'):
            s = parser['synthetic']
            syn = replace(syn,
                          count=s.getint('count', fallback=syn.count),
                          seed=s.getint('seed', fallback=syn.seed),
                          store=s.get('store', fallback=syn.store),
                          missing_rate=s.getfloat('missing_rate', fallback=syn.missing_rate))
            if 'category_mix' in s:
                syn = replace(syn, category_mix=_mix(s['category_mix']))
        cfg.synthetic = syn
    except ValueError as e:
        raise ConfigError(f"{path}: {e}")

    if 'workdir' in overrides and overrides['workdir']:
        cfg.workdir = os.path.abspath(overrides['workdir'])
    if overrides.get('seed') is not None:
        seed = int(overrides['seed'])
        cfg.split_seed = seed
        cfg.train = replace(cfg.train, seed=seed)
        cfg.deep = replace(cfg.deep, seed=seed)

    for kind in cfg.kinds + cfg.ablation_models:
        if kind not in KGE_KINDS:
            raise ConfigError(f"unknown model kind '{kind}'")
    cfg.train.validate()
    cfg.deep.validate()
    cfg.synthetic.validate()
    return cfg


# --- Shared helpers ---

def _load_graph(cfg):
    if not os.path.exists(os.path.join(cfg.kg_dir, 'manifest.json')):
        raise ConfigError(f"no built graph under {cfg.kg_dir}; run 'build' first")
    return read_graph_dir(cfg.kg_dir)


def _load_checkpoint(cfg, kind):
    path = cfg.checkpoint(kind)
    if not os.path.exists(path):
        raise ConfigError(f"missing checkpoint {path}; run 'train {kind}' first")
    if kind == 'deep':
        return load_deep_model(path)
    model = load_model(path)
    if model.kind != kind:
        raise ConfigError(f"checkpoint {path} holds a {model.kind} model, not {kind}")
    return model


def _entity_id(kg, app_id):
    if app_id not in kg.entity_index:
        raise ConfigError(f"unknown app '{app_id}'")
    return kg.entity_index[app_id]


def _trace_frame(model):
    valid = {int(e): v for e, v in model.meta.get('valid_trace', [])}
    return pd.DataFrame([{'epoch': e, 'loss': loss, 'valid': valid.get(e)}
                         for e, loss in enumerate(model.meta.get('loss_trace', []), start=1)])


# --- Commands ---

def build_graph(cfg, records):
    binner = AppBinner(snapshot_date=cfg.snapshot_date, released_scheme=cfg.released_scheme,
                       size_scheme=cfg.size_scheme).fit(records)
    features = binner.transform(records)
    kg = build_triples(features, cfg.k, cfg.split_seed)
    return kg, binner.spec_


def cmd_build(cfg):
    if not os.path.exists(cfg.corpus):
        raise ConfigError(f"corpus not found: {cfg.corpus}")
    records = load_corpus(cfg.corpus)
    for err in records.errors:
        logger.warning(f"[INGEST] skipped {err}")
    report = validate_records(records)
    rejected = {app_id for app_id, _ in report.rejected}
    accepted = [r for r in records if r.app_id not in rejected]
    if not accepted:
        raise ConfigError(f"corpus {cfg.corpus} has no usable records")

    kg, spec = build_graph(cfg, accepted)
    splits = split_triples(kg, cfg.split_ratios, cfg.split_seed)
    write_graph_dir(cfg.kg_dir, kg, splits, spec, cfg.k, cfg.snapshot_date, extra={
        'corpus_sha256': calculate_sha256(cfg.corpus),
        'records': report.record_count,
        'rejected': [list(x) for x in report.rejected],
        'parse_errors': [str(e) for e in records.errors],
        'missing': report.missing,
    })
    print(f"Built {kg.describe()}; splits {splits.sizes()} -> {cfg.kg_dir}")
    return kg, splits


def cmd_stats(cfg):
    kg, _, _ = _load_graph(cfg)
    matrix = relatedness_matrix(kg)
    stats = graph_statistics(kg)
    os.makedirs(cfg.reports_dir, exist_ok=True)
    frame = matrix.frame().round(6).reset_index().rename(columns={'index': 'relation'})
    AtomicFileSaver.save_frame(frame, cfg.report('relatedness.tsv'))
    AtomicFileSaver.save_frame(relatedness_table(matrix), cfg.report('relatedness_pairs.tsv'))
    AtomicFileSaver.save_frame(stats_frame(stats), cfg.report('graph_stats.tsv'))
    print(stats_frame(stats).to_string(index=False))
    return matrix, stats


def _train_one(cfg, kind, kg, splits):
    model = train_model(splits, cfg.train, kind, kg.num_entities, kg.num_relations)
    os.makedirs(cfg.models_dir, exist_ok=True)
    save_model(model, cfg.checkpoint(kind))
    AtomicFileSaver.save_frame(_trace_frame(model), cfg.report(f"train_{kind}.tsv"))
    return model


def cmd_train(cfg, kind):
    kg, splits, _ = _load_graph(cfg)
    if kind == 'deep':
        shallow = _load_checkpoint(cfg, 'TransD')
        model = train_deep(kg, splits, shallow, cfg.deep)
        save_deep_model(model, cfg.checkpoint('deep'), cfg.checkpoint('TransD'))
        AtomicFileSaver.save_frame(_trace_frame(model), cfg.report('train_deep.tsv'))
        return model
    if kind == 'all':
        configs = {k: cfg.train for k in KGE_KINDS}
        best, models, scores = select_best_model(splits, configs, kg.num_entities, kg.num_relations)
        os.makedirs(cfg.models_dir, exist_ok=True)
        for k, m in models.items():
            save_model(m, cfg.checkpoint(k))
        rows = [{'model': k, 'valid_filtered_mrr': s, 'selected': k == best} for k, s in scores.items()]
        AtomicFileSaver.save_frame(pd.DataFrame(rows), cfg.report('model_selection.tsv'))
        print(f"Selected {best}")
        return models[best]
    if kind not in KGE_KINDS:
        raise ConfigError(f"unknown model kind '{kind}'")
    return _train_one(cfg, kind, kg, splits)


def cmd_eval(cfg, kind):
    kg, splits, _ = _load_graph(cfg)
    if len(splits.test) == 0:
        raise ConfigError("test split is empty")
    os.makedirs(cfg.reports_dir, exist_ok=True)
    if kind == 'deep':
        model = _load_checkpoint(cfg, 'deep')
        graph = train_graph(kg, splits)
        rec = evaluate_recommendations(model, splits.test, graph, cfg.rec_k_list, cfg.n_jobs)
        rel = evaluate_relation_prediction(model, splits.test, cfg.rel_k_list)
        AtomicFileSaver.save_frame(rec.frame(), cfg.report('rec_deep.tsv'))
        AtomicFileSaver.save_frame(rel.frame(), cfg.report('relations_deep.tsv'))
        print(rec.frame().to_string(index=False))
        print(rel.frame().to_string(index=False))
        return rec, rel
    if kind not in KGE_KINDS:
        raise ConfigError(f"unknown model kind '{kind}'")
    model = _load_checkpoint(cfg, kind)
    report = evaluate_link_prediction(model, splits.test, build_filter(splits.train, splits.valid, splits.test),
                                      n_jobs=cfg.n_jobs)
    frame = report_frame({kind: report})
    AtomicFileSaver.save_frame(frame, cfg.report(f"eval_{kind}.tsv"))
    print(frame.to_string(index=False))
    return report


def cmd_search(cfg, kind):
    if kind not in KGE_KINDS:
        raise ConfigError(f"unknown model kind '{kind}'")
    if not cfg.search_space:
        raise ConfigError("[search] defines no parameter lists")
    kg, splits, _ = _load_graph(cfg)
    trials = search_trials(cfg.search_space, cfg.search_budget, cfg.search_seed, kind, splits,
                           cfg.train, kg.num_entities, kg.num_relations)
    os.makedirs(cfg.reports_dir, exist_ok=True)
    AtomicFileSaver.save_frame(trials_frame(trials), cfg.report(f"search_{kind}.tsv"))
    best = replace(cfg.train, **best_trial(trials).params)
    print(f"Best {kind} config: " + ", ".join(f"{k}={getattr(best, k)}" for k in cfg.search_space))
    return best


def _ablation_rows(experiment, kind, report):
    rows = []
    for metric, value in report.row().items():
        if metric != 'queries':
            rows.append({'experiment': experiment, 'model': kind, 'metric': metric, 'value': value})
    return rows


def cmd_ablate(cfg, group):
    plan = AblationPlan.from_id(group)
    kg, splits, _ = _load_graph(cfg)
    reduced = kg.drop_relations(plan.relations)
    reduced_splits = split_triples(reduced, cfg.split_ratios, cfg.split_seed)
    write_graph_dir(os.path.join(cfg.workdir, 'ablation', plan.group), reduced, reduced_splits,
                    None, cfg.k, cfg.snapshot_date, extra={'dropped': list(plan.relations)})

    rows = []
    for experiment, graph, sp in (('full', kg, splits), (plan.group, reduced, reduced_splits)):
        every = build_filter(sp.train, sp.valid, sp.test)
        for kind in cfg.ablation_models:
            model = train_model(sp, cfg.train, kind, graph.num_entities, graph.num_relations)
            rows += _ablation_rows(experiment, kind, evaluate_link_prediction(model, sp.test, every,
                                                                              n_jobs=cfg.n_jobs))
    frame = pd.DataFrame(rows, columns=['experiment', 'model', 'metric', 'value'])
    os.makedirs(cfg.reports_dir, exist_ok=True)
    AtomicFileSaver.save_frame(frame, cfg.report(f"ablation_{plan.group}.tsv"))
    print(frame.pivot_table(index=['model', 'metric'], columns='experiment', values='value').to_string())
    return frame


def cmd_recommend(cfg, app_id, kind='deep', k=None):
    kg, splits, _ = _load_graph(cfg)
    model = _load_checkpoint(cfg, kind)
    k = k or cfg.rec_k_list[0]
    frame = recommendation_frame(model, [_entity_id(kg, app_id)], k, train_graph(kg, splits), kg.entities)
    os.makedirs(cfg.reports_dir, exist_ok=True)
    AtomicFileSaver.save_frame(frame, cfg.report(f"recommend_{kind}.tsv"))
    print(frame.to_string(index=False))
    return frame


def cmd_relations(cfg, app1, app2, kind='deep', k=None):
    kg, _, _ = _load_graph(cfg)
    model = _load_checkpoint(cfg, kind)
    k = min(k or max(cfg.rel_k_list), kg.num_relations)
    ranked = predict_relations(model, (_entity_id(kg, app1), _entity_id(kg, app2)), k)
    for rank, r in enumerate(ranked, start=1):
        print(f"{rank}\t{kg.relations[r]}")
    return [kg.relations[r] for r in ranked]


def cmd_bench(cfg):
    kg, splits, _ = _load_graph(cfg)
    anchors = sorted(set(np.asarray(splits.test)[:, 0].tolist())) if len(splits.test) else []
    if not anchors:
        raise ConfigError("test split is empty; nothing to benchmark")
    graph = train_graph(kg, splits)
    names = [k for k in cfg.kinds if os.path.exists(cfg.checkpoint(k))]
    if os.path.exists(cfg.checkpoint('deep')):
        names.append('deep')
    if not names:
        raise ConfigError(f"no checkpoints under {cfg.models_dir}; run 'train' first")

    K = max(cfg.rec_k_list)
    reports, raw = [], []
    for name in names:
        model = _load_checkpoint(cfg, name)
        rep = measure_inference(lambda a, m=model: recommend_top_k(m, a, K, graph), anchors, name=name)
        reports.append(rep)
        raw += [{'model': name, 'query': i, 'app_id': kg.entities[a], 'time_ms': t}
                for i, (a, t) in enumerate(zip(anchors, rep.times_ms))]
    os.makedirs(cfg.reports_dir, exist_ok=True)
    summary = compare_timings(reports)
    AtomicFileSaver.save_frame(summary, cfg.report('bench.tsv'))
    AtomicFileSaver.save_frame(pd.DataFrame(raw), cfg.report('bench_times.tsv'))
    print(summary.to_string(index=False))
    return reports


def cmd_synth(cfg, out=None):
    out = out or cfg.corpus
    records = generate_synthetic_corpus(cfg.synthetic)
    AtomicFileSaver.save_bytes(serialize_app_records(records), out)
    print(f"Wrote {len(records)} synthetic records to {out}")
    return records


# --- Entry point ---

def build_parser():
    parser = argparse.ArgumentParser(prog='appgraph', description='App-app knowledge graph pipeline')
    parser.add_argument('--config', default='config.ini', help='INI config file')
    parser.add_argument('--seed', type=int, default=None, help='override every seed')
    parser.add_argument('--workdir', default=None, help='override [paths] workdir')
    parser.add_argument('--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('build', help='build the graph and splits from the corpus')
    sub.add_parser('stats', help='relatedness matrix and graph statistics')
    p = sub.add_parser('train', help='train a shallow model, all shallow models, or the deep model')
    p.add_argument('kind', help=f"one of {', '.join(KGE_KINDS)}, 'all' or 'deep'")
    p = sub.add_parser('eval', help='evaluate a trained model')
    p.add_argument('kind', help="a shallow kind or 'deep'")
    p = sub.add_parser('search', help='random hyperparameter search for one shallow kind')
    p.add_argument('kind')
    p = sub.add_parser('ablate', help='retrain without one feature group')
    p.add_argument('group', help=', '.join(ABLATION_GROUPS))
    p = sub.add_parser('recommend', help='top-K similar apps')
    p.add_argument('app_id')
    p.add_argument('--model', default='deep')
    p.add_argument('-k', type=int, default=None)
    p = sub.add_parser('relations', help='most plausible relations between two apps')
    p.add_argument('app_id')
    p.add_argument('other_app_id')
    p.add_argument('--model', default='deep')
    p.add_argument('-k', type=int, default=None)
    sub.add_parser('bench', help='average inference time per model')
    p = sub.add_parser('synth', help='write a synthetic corpus')
    p.add_argument('--out', default=None)
    return parser


def run(args):
    cfg = load_run_config(args.config, {'seed': args.seed, 'workdir': args.workdir})
    if args.command == 'build':
        cmd_build(cfg)
    elif args.command == 'stats':
        cmd_stats(cfg)
    elif args.command == 'train':
        cmd_train(cfg, args.kind)
    elif args.command == 'eval':
        cmd_eval(cfg, args.kind)
    elif args.command == 'search':
        cmd_search(cfg, args.kind)
    elif args.command == 'ablate':
        cmd_ablate(cfg, args.group)
    elif args.command == 'recommend':
        cmd_recommend(cfg, args.app_id, args.model, args.k)
    elif args.command == 'relations':
        cmd_relations(cfg, args.app_id, args.other_app_id, args.model, args.k)
    elif args.command == 'bench':
        cmd_bench(cfg)
    elif args.command == 'synth':
        cmd_synth(cfg, args.out)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s')
    try:
        run(args)
    except ConfigError as e:
        logger.error(f"[CLI] {e}")
        return EXIT_CONFIG
    except (OSError, AppGraphError, ValueError) as e:
        logger.error(f"[CLI] {type(e).__name__}: {e}")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
