import math
import os
import tempfile
from unittest import TestCase

import numpy as np

from phdae_cli.error import (DatasetIoError, DatasetParseError, DegenerateSignal, DimensionMismatch, InsufficientData,
                             InvalidParameter)
from phdae_cli.signals import NOISELESS, Dataset, MultisineSpec, add_noise, multisine, read_csv, write_csv


class TestMultisine(TestCase):

    def test_zero_phases(self):
        self.assertEqual(0.0, multisine(MultisineSpec(), 0.0))

    def test_quarter_phases(self):
        spec = MultisineSpec(phases=np.full(40, np.pi / 2))
        self.assertAlmostEqual(40.0, multisine(spec, 0.0), places=12)

    def test_rms_over_period(self):
        spec = MultisineSpec.random(np.random.default_rng(0))
        t = np.arange(0.0, 1.0 / spec.f0, 0.005)
        rms = np.sqrt(np.mean(multisine(spec, t) ** 2))
        self.assertAlmostEqual(np.sqrt(20.0), rms, delta=0.01 * np.sqrt(20.0))

    def test_periodic(self):
        spec = MultisineSpec.random(np.random.default_rng(2))
        t = np.linspace(0.0, 1.0 / spec.f0, 173)
        np.testing.assert_allclose(multisine(spec, t + 1.0 / spec.f0), multisine(spec, t), atol=1e-9)

    def test_phase_validation(self):
        with self.assertRaises(InvalidParameter):
            MultisineSpec(n_sines=2, phases=[0.0, 7.0])
        with self.assertRaises(DimensionMismatch):
            MultisineSpec(n_sines=3, phases=[0.0, 1.0])


class TestNoise(TestCase):

    def setUp(self):
        rng = np.random.default_rng(1)
        signal = rng.normal(size=(20000, 1))
        self.signal = (signal - signal.mean()) / signal.std()

    def test_levels(self):
        _, std = add_noise(self.signal, 20.0, np.random.default_rng(0))
        self.assertAlmostEqual(0.100, std[0], places=12)
        _, std = add_noise(self.signal, 10.0, np.random.default_rng(0))
        self.assertAlmostEqual(0.316, std[0], places=3)

    def test_empirical_std(self):
        noisy, std = add_noise(self.signal, 20.0, np.random.default_rng(0))
        self.assertAlmostEqual(0.1, np.std(noisy - self.signal), delta=0.005)

    def test_zero_mean(self):
        noisy, std = add_noise(self.signal, 20.0, np.random.default_rng(3))
        bound = 4.0 * std[0] / np.sqrt(self.signal.shape[0])
        self.assertLess(abs(np.mean(noisy - self.signal)), bound)

    def test_noiseless(self):
        noisy, std = add_noise(self.signal, NOISELESS, np.random.default_rng(0))
        np.testing.assert_array_equal(self.signal, noisy)
        np.testing.assert_array_equal(std, [0.0])

    def test_constant_signal(self):
        with self.assertRaises(DegenerateSignal):
            add_noise(np.ones((10, 1)), 20.0, np.random.default_rng(0))


class TestDatasetCsv(TestCase):

    def setUp(self):
        self.dir = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.dir.cleanup()

    def _path(self, name):
        return os.path.join(self.dir.name, name)

    def _write(self, name, content):
        path = self._path(name)
        with open(path, 'w') as f:
            f.write(content)
        return path

    def test_write_and_read(self):
        rng = np.random.default_rng(5)
        dataset = Dataset(t_s=0.005, inputs=rng.normal(size=(50, 1)), outputs=rng.normal(size=(50, 3)) / 3.0,
                          clean_outputs=rng.normal(size=(50, 3)))
        path = self._path('data.csv')
        write_csv(dataset, path)
        loaded = read_csv(path)
        np.testing.assert_array_equal(dataset.inputs, loaded.inputs)
        np.testing.assert_array_equal(dataset.outputs, loaded.outputs)
        np.testing.assert_array_equal(dataset.clean_outputs, loaded.clean_outputs)
        self.assertTrue(math.isclose(0.005, loaded.t_s, rel_tol=1e-12))

        with open(path) as f:
            self.assertEqual('t,u1,y1,y2,y3,y_clean1,y_clean2,y_clean3', f.readline().strip())

    def test_column_count(self):
        path = self._write('bad.csv', 't,u1,y1\n0,1,2\n0.1,1\n')
        with self.assertRaises(DatasetParseError) as ctx:
            read_csv(path)
        self.assertEqual(3, ctx.exception.line)
        self.assertIn('line 3', str(ctx.exception))

    def test_not_a_number(self):
        path = self._write('bad.csv', 't,u1,y1\n0,1,2\n0.1,x,2\n')
        with self.assertRaises(DatasetParseError):
            read_csv(path)

    def test_header(self):
        with self.assertRaises(DatasetParseError):
            read_csv(self._write('bad.csv', 'time,u1,y1\n0,1,2\n'))
        with self.assertRaises(DatasetParseError):
            read_csv(self._write('bad.csv', 't,u1,z1\n0,1,2\n'))

    def test_empty(self):
        with self.assertRaises(InsufficientData):
            read_csv(self._write('empty.csv', 't,u1,y1\n'))
        with self.assertRaises(InsufficientData):
            read_csv(self._write('blank.csv', ''))

    def test_missing(self):
        with self.assertRaises(DatasetIoError):
            read_csv(self._path('missing.csv'))
