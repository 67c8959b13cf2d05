import csv
import os
import shutil
import tempfile
from unittest import TestCase, mock

import numpy as np
from click.testing import CliRunner

from phdae_cli.bench.dcnet import init_dc_params
from phdae_cli.cli import cli
from phdae_cli.cli_utils import evaluate_model
from phdae_cli.model import flatten, load_model

SMALL_CONFIG = """
data:
  samples: 240
train:
  truncation_length: 10
  batch_size: 32
  epochs: {epochs}
bench:
  snr_levels: [20]
  runs: 2
workers: 1
{extra}"""


class TestPhDaeCli(TestCase):
    def setUp(self) -> None:
        self.cli_runner = CliRunner()
        self.dir = tempfile.mkdtemp()

    def tearDown(self) -> None:
        shutil.rmtree(self.dir, ignore_errors=True)

    def _config(self, epochs=1, name='config.yml', extra=''):
        path = os.path.join(self.dir, name)
        with open(path, 'w') as f:
            f.write(SMALL_CONFIG.format(epochs=epochs, extra=extra))
        return path

    def _generate(self, out='data', config=None):
        out = os.path.join(self.dir, out)
        result = self.cli_runner.invoke(cli, ['generate', '--config', config or self._config(), '--out', out])
        assert result.exit_code == 0, result.output
        return out

    def _read(self, path):
        with open(path, 'rb') as f:
            return f.read()

    def test_version_command(self):
        result = self.cli_runner.invoke(cli, ['version'])
        assert result.exit_code == 0

    def test_generate(self):
        out = self._generate()
        for name in ('train.csv', 'val.csv', 'test.csv', 'manifest.json'):
            self.assertTrue(os.path.exists(os.path.join(out, name)))
        with open(os.path.join(out, 'train.csv')) as f:
            rows = list(csv.reader(f))
        self.assertEqual(['t', 'u1', 'y1', 'y_clean1'], rows[0])
        self.assertEqual(241, len(rows))

        # regenerate from the manifest
        again = self._generate('again', config=os.path.join(out, 'manifest.json'))
        for name in ('train.csv', 'val.csv', 'test.csv', 'manifest.json'):
            self.assertEqual(self._read(os.path.join(out, name)), self._read(os.path.join(again, name)))

    def test_seed_changes_data(self):
        out = self._generate()
        result = self.cli_runner.invoke(cli, ['generate', '--config', self._config(), '--seed', '99', '--out',
                                              os.path.join(self.dir, 'seeded')])
        assert result.exit_code == 0
        self.assertNotEqual(self._read(os.path.join(out, 'train.csv')),
                            self._read(os.path.join(self.dir, 'seeded', 'train.csv')))

    def test_missing_config(self):
        path = os.path.join(self.dir, 'missing.yml')
        result = self.cli_runner.invoke(cli, ['generate', '--config', path, '--out', self.dir])
        assert result.exit_code == 2
        self.assertIn('missing.yml', result.output)

    def test_train_and_eval(self):
        data = self._generate()
        out = os.path.join(self.dir, 'model')
        result = self.cli_runner.invoke(cli, ['train', '--config', self._config(epochs=2), '--data', data,
                                              '--out', out])
        assert result.exit_code == 0, result.output

        with open(os.path.join(out, 'train_log.csv')) as f:
            rows = list(csv.reader(f))
        self.assertEqual(['epoch', 'train_loss', 'val_nrms', 'lr'], rows[0])
        self.assertEqual(['1', '2'], [r[0] for r in rows[1:]])

        model_path = os.path.join(out, 'model.json')
        bundle = load_model(model_path)
        self.assertEqual(6, bundle.params.n_theta)
        self.assertIn(bundle.metadata['best_epoch'], (1, 2))

        result = self.cli_runner.invoke(cli, ['eval', '--model', model_path, '--dataset',
                                              os.path.join(data, 'test.csv'), '--out', out])
        assert result.exit_code == 0, result.output
        lines = [line for line in result.output.splitlines() if line.startswith('nrms=')]
        self.assertEqual(1, len(lines))
        self.assertGreater(float(lines[0][len('nrms='):]), 0.0)
        with open(os.path.join(out, 'trajectory.csv')) as f:
            self.assertEqual('t,y_measured,y_simulated,error', f.readline().strip())

    def test_zero_epochs_keeps_initialization(self):
        data = self._generate()
        out = os.path.join(self.dir, 'model')
        result = self.cli_runner.invoke(cli, ['train', '--config', self._config(epochs=0), '--data', data,
                                              '--out', out])
        assert result.exit_code == 0, result.output
        bundle = load_model(os.path.join(out, 'model.json'))
        expected = init_dc_params(np.random.default_rng(0))
        np.testing.assert_array_equal(flatten(expected), flatten(bundle.params))
        self.assertIsNone(bundle.metadata['best_epoch'])

    def test_corrupt_dataset(self):
        data = self._generate()
        with open(os.path.join(data, 'train.csv'), 'a') as f:
            f.write('1.0,2.0\n')
        result = self.cli_runner.invoke(cli, ['train', '--config', self._config(), '--data', data,
                                              '--out', self.dir])
        assert result.exit_code == 1
        self.assertIn('line 242', result.output)

    def test_simulate(self):
        data = self._generate()
        out = os.path.join(self.dir, 'model')
        result = self.cli_runner.invoke(cli, ['train', '--config', self._config(epochs=0), '--data', data,
                                              '--out', out])
        assert result.exit_code == 0
        result = self.cli_runner.invoke(cli, ['simulate', '--model', os.path.join(out, 'model.json'),
                                              '--dataset', os.path.join(data, 'test.csv'), '--out', out])
        assert result.exit_code == 0, result.output
        with open(os.path.join(out, 'simulation.csv')) as f:
            rows = list(csv.reader(f))
        self.assertEqual(['t', 'x1', 'x2', 'x3', 'x4', 'x5', 'y1'], rows[0])
        self.assertEqual(241, len(rows))

    def test_train_with_masks(self):
        data = self._generate()
        out = os.path.join(self.dir, 'model')
        config = self._config(epochs=0, extra='masks:\n  l_r: [[0, 0], [3, 3], [4, 4], [4, 3]]\n')
        result = self.cli_runner.invoke(cli, ['train', '--config', config, '--data', data, '--out', out])
        assert result.exit_code == 0, result.output
        bundle = load_model(os.path.join(out, 'model.json'))
        self.assertEqual(7, bundle.params.n_theta)
        self.assertEqual(0.0, bundle.params.l_r[4, 3])

    def test_invalid_masks(self):
        config = self._config(extra='masks:\n  l_e: [[5, 0]]\n')
        result = self.cli_runner.invoke(cli, ['generate', '--config', config, '--out', self.dir])
        assert result.exit_code == 2
        self.assertIn('masks', result.output)

    def test_simulate_reads_dataset_once(self):
        data = self._generate()
        out = os.path.join(self.dir, 'model')
        result = self.cli_runner.invoke(cli, ['train', '--config', self._config(epochs=0), '--data', data,
                                              '--out', out])
        assert result.exit_code == 0
        config = self._config(name='solver.yml', extra='solver:\n  max_newton_iters: 7\n')
        with mock.patch.object(evaluate_model, 'read_csv', wraps=evaluate_model.read_csv) as reader, \
                mock.patch.object(evaluate_model, 'simulate', wraps=evaluate_model.simulate) as simulator:
            result = self.cli_runner.invoke(cli, ['simulate', '--model', os.path.join(out, 'model.json'),
                                                  '--dataset', os.path.join(data, 'test.csv'), '--config', config,
                                                  '--out', out])
        assert result.exit_code == 0, result.output
        self.assertEqual(1, reader.call_count)
        solver = simulator.call_args[0][3]
        self.assertEqual(7, solver.max_newton_iters)
        self.assertAlmostEqual(0.005, solver.h, places=12)

    def test_bench_noiseless(self):
        out = os.path.join(self.dir, 'bench')
        result = self.cli_runner.invoke(cli, ['bench', 'noiseless', '--config', self._config(), '--out', out])
        assert result.exit_code == 0, result.output
        lines = [line for line in result.output.splitlines() if line.startswith('nrms=')]
        self.assertEqual(1, len(lines))
        self.assertGreater(float(lines[0][len('nrms='):]), 0.0)
        with open(os.path.join(out, 'noiseless.csv')) as f:
            rows = list(csv.reader(f))
        self.assertEqual(['snr_db', 'noise_std', 'nrms'], rows[0])
        self.assertEqual(2, len(rows))

    def test_bench_table1(self):
        out = os.path.join(self.dir, 'bench')
        result = self.cli_runner.invoke(cli, ['bench', 'table1', '--config', self._config(), '--out', out])
        assert result.exit_code == 0, result.output
        with open(os.path.join(out, 'table1.csv')) as f:
            rows = list(csv.reader(f))
        self.assertEqual(['snr_db', 'noise_std', 'nrms'], rows[0])
        self.assertEqual(2, len(rows))
        self.assertEqual('20.0', rows[1][0])

    def test_bench_recovery(self):
        out = os.path.join(self.dir, 'bench')
        result = self.cli_runner.invoke(cli, ['bench', 'recovery', '--config', self._config(), '--out', out])
        assert result.exit_code == 0, result.output
        with open(os.path.join(out, 'param_recovery.csv')) as f:
            self.assertEqual(1 + 2 * 6, len(f.read().splitlines()))
        with open(os.path.join(out, 'param_recovery_summary.csv')) as f:
            self.assertEqual('parameter,q1,median,q3,min,max', f.readline().strip())

    def test_bench_unknown(self):
        result = self.cli_runner.invoke(cli, ['bench', 'everything'])
        assert result.exit_code == 2
