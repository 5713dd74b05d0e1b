import unittest
import os
import io
import json
import sys
import shutil
import tempfile
import contextlib

import pandas as pd

sys.path.append(os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'src'))

from cli import (
    main, load_run_config, cmd_synth, cmd_build, cmd_stats, cmd_train, cmd_eval, cmd_search,
    cmd_ablate, cmd_recommend, cmd_relations, cmd_bench, EXIT_CONFIG, EXIT_OK,
)
from kg_utils import calculate_sha256
from errors import ConfigError

CONFIG = """
[paths]
corpus = data/corpus.jsonl
workdir = out

[graph]
snapshot_date = 2022-05-04
edges_per_relation = 1

[split]
ratios = 0.6, 0.2, 0.2
seed = 3

[train]
kinds = TransE, TransD
dim = 4
epochs = 3
batch_size = 64
learning_rate = 0.01
seed = 3
eval_every = 1

[deep]
dim = 4
neighbor_sample_size = 2
depth = 1
batch_size = 8
learning_rate = 0.005
epochs = 2
seed = 3

[eval]
rec_k_list = 5, 10
rel_k_list = 1, 3

[search]
budget = 2
seed = 1
learning_rate = 0.0, 0.01

[synthetic]
count = 60
seed = 5
"""


def write_config(directory, text=CONFIG):
    path = os.path.join(directory, 'config.ini')
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    return path


def quietly(fn, *args, **kwargs):
    with contextlib.redirect_stdout(io.StringIO()):
        return fn(*args, **kwargs)


class TestExitCodes(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        self.config = write_config(self.tmp)

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_bad_arguments(self):
        with contextlib.redirect_stderr(io.StringIO()):
            self.assertEqual(main(['--config', self.config]), EXIT_CONFIG)
            self.assertEqual(main(['--config', self.config, 'train']), EXIT_CONFIG)

    def test_missing_config(self):
        self.assertEqual(main(['--config', os.path.join(self.tmp, 'nope.ini'), 'build']), EXIT_CONFIG)

    def test_build_without_corpus(self):
        self.assertEqual(main(['--config', self.config, 'build']), EXIT_CONFIG)

    def test_eval_without_graph(self):
        self.assertEqual(main(['--config', self.config, 'eval', 'TransE']), EXIT_CONFIG)

    def test_unknown_kind_in_config(self):
        write_config(self.tmp, CONFIG.replace('kinds = TransE, TransD', 'kinds = TransQ'))
        self.assertEqual(main(['--config', self.config, 'stats']), EXIT_CONFIG)


class TestLoadRunConfig(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        self.config = write_config(self.tmp)

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_paths_resolve_against_config_dir(self):
        cfg = load_run_config(self.config)
        self.assertEqual(cfg.corpus, os.path.join(self.tmp, 'data', 'corpus.jsonl'))
        self.assertEqual(cfg.kg_dir, os.path.join(self.tmp, 'out', 'kg'))
        self.assertEqual(cfg.kinds, ('TransE', 'TransD'))
        self.assertEqual(cfg.rec_k_list, (5, 10))
        self.assertEqual(cfg.train.dim, 4)
        self.assertEqual(cfg.deep.neighbor_sample_size, 2)
        self.assertEqual(cfg.synthetic.count, 60)
        self.assertEqual(cfg.search_space, {'learning_rate': [0.0, 0.01]})

    def test_overrides(self):
        other = os.path.join(self.tmp, 'elsewhere')
        cfg = load_run_config(self.config, {'seed': 9, 'workdir': other})
        self.assertEqual(cfg.workdir, other)
        self.assertEqual((cfg.split_seed, cfg.train.seed, cfg.deep.seed), (9, 9, 9))

    def test_snapshot_date_required(self):
        write_config(self.tmp, CONFIG.replace('snapshot_date = 2022-05-04', ''))
        with self.assertRaises(ConfigError):
            load_run_config(self.config)

    def test_bad_value(self):
        write_config(self.tmp, CONFIG.replace('dim = 4\nepochs = 3', 'dim = four\nepochs = 3'))
        with self.assertRaises(ConfigError):
            load_run_config(self.config)


class TestPipeline(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        cls.cfg = load_run_config(write_config(cls.tmp))
        quietly(cmd_synth, cls.cfg)
        quietly(cmd_build, cls.cfg)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def test_build_is_reproducible(self):
        manifest = os.path.join(self.cfg.kg_dir, 'manifest.json')
        first = calculate_sha256(manifest)
        quietly(cmd_build, self.cfg)
        self.assertEqual(calculate_sha256(manifest), first)

    def test_stats_reports(self):
        quietly(cmd_stats, self.cfg)
        stats = pd.read_csv(self.cfg.report('graph_stats.tsv'), sep='\t')
        self.assertGreater(len(stats), 0)
        self.assertTrue(os.path.exists(self.cfg.report('relatedness.tsv')))
        self.assertTrue(os.path.exists(self.cfg.report('relatedness_pairs.tsv')))

    def test_train_and_eval_shallow(self):
        quietly(cmd_train, self.cfg, 'TransE')
        self.assertTrue(os.path.exists(self.cfg.checkpoint('TransE')))
        report = quietly(cmd_eval, self.cfg, 'TransE')
        frame = pd.read_csv(self.cfg.report('eval_TransE.tsv'), sep='\t')
        self.assertEqual(len(frame), 1)
        self.assertTrue(0.0 < report.mrr_filtered <= 1.0)

    def test_search_writes_trials(self):
        best = quietly(cmd_search, self.cfg, 'TransE')
        trials = pd.read_csv(self.cfg.report('search_TransE.tsv'), sep='\t')
        self.assertEqual(len(trials), 2)
        self.assertIn(best.learning_rate, (0.0, 0.01))

    def test_unknown_kind(self):
        with self.assertRaises(ConfigError):
            cmd_train(self.cfg, 'TransQ')

    def test_deep_model_end_to_end(self):
        quietly(cmd_train, self.cfg, 'TransD')
        quietly(cmd_train, self.cfg, 'deep')
        rec, rel = quietly(cmd_eval, self.cfg, 'deep')
        self.assertEqual([row['K'] for row in rec.rows], [5, 10])
        self.assertEqual([row['K'] for row in rel.rows], [1, 3])

        kg_entities = pd.read_csv(os.path.join(self.cfg.kg_dir, 'entities.tsv'), sep='\t')['app_id'].tolist()
        frame = quietly(cmd_recommend, self.cfg, kg_entities[0], 'deep', 3)
        self.assertLessEqual(len(frame), 3)
        self.assertNotIn(kg_entities[0], frame['app'].tolist())

        relations = quietly(cmd_relations, self.cfg, kg_entities[0], kg_entities[1], 'deep', 3)
        self.assertEqual(len(relations), 3)
        self.assertEqual(len(set(relations)), 3)

        reports = quietly(cmd_bench, self.cfg)
        self.assertIn('deep', [r.name for r in reports])
        self.assertTrue(os.path.exists(self.cfg.report('bench.tsv')))

    def test_ablation_drops_the_group(self):
        frame = quietly(cmd_ablate, self.cfg, 'EXP2')
        self.assertEqual(set(frame['experiment']), {'full', 'exp2'})
        self.assertEqual(set(frame['model']), {'ComplEx', 'RotatE'})
        self.assertIn('Filtered MRR', set(frame['metric']))
        with open(os.path.join(self.cfg.workdir, 'ablation', 'exp2', 'manifest.json')) as f:
            manifest = json.load(f)
        self.assertNotIn('CRSIMILAR', manifest['relations'])
        self.assertNotIn('GIDSIMILAR', manifest['relations'])
        self.assertEqual(manifest['dropped'], ['CRSIMILAR', 'GIDSIMILAR'])

    def test_unknown_ablation_group(self):
        with self.assertRaises(ConfigError):
            cmd_ablate(self.cfg, 'exp9')

    def test_unknown_app(self):
        quietly(cmd_train, self.cfg, 'TransE')
        self.assertEqual(main(['--config', self.cfg.config_path, 'recommend', 'no.such.app',
                               '--model', 'TransE']), EXIT_CONFIG)

    def test_main_stats(self):
        with contextlib.redirect_stdout(io.StringIO()):
            self.assertEqual(main(['--config', self.cfg.config_path, 'stats']), EXIT_OK)


if __name__ == '__main__':
    unittest.main()
