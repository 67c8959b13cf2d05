from dataclasses import replace
from unittest import TestCase, mock

import numpy as np

from phdae_cli.bench.dcnet import init_dc_params
from phdae_cli.error import DegenerateSignal, DimensionMismatch, InsufficientData, SingularJacobian, SingularMatrix
from phdae_cli.error import SolverFailure
from phdae_cli.ident.adam import AdamState, adam_step
from phdae_cli.ident.encoder import LinearEncoder, encoder_windows, window_size
from phdae_cli.ident.event import TrainEventHandler
from phdae_cli.ident.trainer import (TrainConfig, epoch_batches, evaluate_nrms, full_loss, lr_schedule,
                                     mean_loss_and_gradient, nrms, positive_diagonal, predict, sample_batch,
                                     subsection_loss, train, valid_starts)
from phdae_cli.grad import SubsectionBatch
from phdae_cli.model import PhDaeParams, flatten, unflatten
from phdae_cli.signals import Dataset
from tests.common import scalar_dataset, scalar_masks, slow


def _scalar_params(l_e=1.0, l_r=np.sqrt(0.5)) -> PhDaeParams:
    return PhDaeParams(m_j=np.zeros((1, 1)), l_r=np.array([[l_r]]), l_e=np.array([[l_e]]), g=np.ones((1, 1)),
                       masks=scalar_masks())


def _output_encoder(n_lag=1) -> LinearEncoder:
    # x = y[tau], exact for the scalar system with y = x
    encoder = LinearEncoder.zeros(1, n_lag, 1, 1)
    weight = encoder.weight.copy()
    weight[0, -1] = 1.0
    return LinearEncoder(weight, encoder.bias, n_lag, 1, 1)


class RecordingHandler(TrainEventHandler):
    def __init__(self):
        self.retries = []
        self.epochs = []

    def handle_retry(self, epoch, batch, lr, error):
        self.retries.append((epoch, batch, lr))

    def handle_epoch_end(self, record, improved):
        self.epochs.append((record, improved))


class TestEncoder(TestCase):

    def test_window_layout(self):
        inputs = np.arange(6, dtype=float)[:, None]
        outputs = 10.0 + np.arange(6, dtype=float)[:, None]
        z = encoder_windows(inputs, outputs, [3], n_lag=2)
        np.testing.assert_array_equal(z[:, 0], [1.0, 2.0, 11.0, 12.0, 13.0])
        self.assertEqual(5, window_size(2, 1, 1))

        with self.assertRaises(InsufficientData):
            encoder_windows(inputs, outputs, [1], n_lag=2)

    def test_zero_weight(self):
        encoder = LinearEncoder(np.zeros((3, 5)), np.array([1.0, -2.0, 0.5]), 2, 1, 1)
        np.testing.assert_array_equal(encoder.encode([4.0, 5.0], [1.0, 2.0, 3.0]), [1.0, -2.0, 0.5])

    def test_zero_window(self):
        rng = np.random.default_rng(1)
        encoder = LinearEncoder(rng.normal(size=(3, 5)), np.array([1.0, 2.0, 3.0]), 2, 1, 1)
        np.testing.assert_array_equal(encoder.encode(np.zeros(2), np.zeros(3)), [1.0, 2.0, 3.0])

    def test_projection(self):
        weight = np.zeros((3, 5))
        weight[:, -1] = 1.0
        encoder = LinearEncoder(weight, np.zeros(3), 2, 1, 1)
        np.testing.assert_array_equal(encoder.encode([9.0, 9.0], [1.0, 2.0, 7.0]), [7.0, 7.0, 7.0])

    def test_window_lengths(self):
        encoder = LinearEncoder.zeros(2, 3, 1, 1)
        with self.assertRaises(DimensionMismatch):
            encoder.encode(np.zeros(2), np.zeros(4))
        with self.assertRaises(DimensionMismatch):
            encoder.encode(np.zeros(3), np.zeros(3))

    def test_vector_and_dict(self):
        rng = np.random.default_rng(2)
        # window of 2 inputs and 3 samples of 2 outputs
        encoder = LinearEncoder(rng.normal(size=(2, 8)), rng.normal(size=2), 2, 1, 2)
        self.assertEqual(8, window_size(2, 1, 2))
        self.assertEqual(18, encoder.n_eta)
        back = encoder.from_vector(encoder.to_vector())
        np.testing.assert_array_equal(encoder.weight, back.weight)
        again = LinearEncoder.from_dict(encoder.to_dict())
        np.testing.assert_array_equal(encoder.bias, again.bias)
        self.assertEqual(2, again.m_y)
        with self.assertRaises(DimensionMismatch):
            LinearEncoder(np.zeros((2, 7)), np.zeros(2), 2, 1, 2)


class TestAdam(TestCase):

    def test_zero_gradient(self):
        params = np.array([1.0, -2.0])
        new, state = adam_step(params, np.zeros(2), AdamState.zeros(2), 0.1)
        np.testing.assert_array_equal(params, new)
        self.assertEqual(1, state.t)

    def test_first_step(self):
        new, state = adam_step(np.array([0.0]), np.array([1.0]), AdamState.zeros(1), 0.01)
        self.assertAlmostEqual(-0.01 / (1.0 + 1e-8), new[0], places=15)
        self.assertAlmostEqual(0.1, state.m[0])

    def test_mask(self):
        params = np.array([1.0, 2.0])
        new, state = adam_step(params, np.array([1.0, 1.0]), AdamState.zeros(2), 0.1, mask=np.array([True, False]))
        self.assertEqual(2.0, new[1])
        self.assertEqual(0.0, state.m[1])
        self.assertLess(new[0], 1.0)

    def test_inputs_untouched(self):
        params = np.array([1.0])
        state = AdamState.zeros(1)
        adam_step(params, np.array([3.0]), state, 0.1)
        self.assertEqual(1.0, params[0])
        self.assertEqual(0, state.t)
        self.assertEqual(0.0, state.m[0])


class TestSchedule(TestCase):

    def test_geometric(self):
        config = TrainConfig(epochs=300)
        self.assertEqual(1e-2, lr_schedule(config, 0))
        self.assertAlmostEqual(1e-3, lr_schedule(config, 299), places=15)
        self.assertAlmostEqual(np.sqrt(1e-5), lr_schedule(TrainConfig(epochs=3), 1), places=15)

    def test_valid_starts(self):
        np.testing.assert_array_equal(valid_starts(45, 40, 5), [5])
        with self.assertRaises(InsufficientData):
            valid_starts(44, 40, 5)

    def test_sample_batch(self):
        a = sample_batch(200, 10, 3, 16, np.random.default_rng(4))
        b = sample_batch(200, 10, 3, 16, np.random.default_rng(4))
        np.testing.assert_array_equal(a, b)
        self.assertTrue(np.all(np.diff(a) > 0))
        self.assertTrue(np.all((a >= 3) & (a <= 190)))
        np.testing.assert_array_equal(sample_batch(45, 40, 5, 1, np.random.default_rng(0)), [5])
        with self.assertRaises(InsufficientData):
            sample_batch(45, 40, 5, 2, np.random.default_rng(0))

    def test_epoch_batches(self):
        config = TrainConfig(truncation_length=10, batch_size=8)
        batches = epoch_batches(100, config, 2, np.random.default_rng(1))
        # 89 valid starts make 11 full batches
        self.assertEqual(11, len(batches))
        joined = np.concatenate(batches)
        self.assertEqual(88, np.unique(joined).size)


class TestLossAndNrms(TestCase):

    def setUp(self):
        self.dataset = scalar_dataset()

    def test_nrms_definition(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=(100, 2))
        self.assertEqual(0.0, nrms(y, y))
        self.assertAlmostEqual(1.0, nrms(y, np.broadcast_to(y.mean(axis=0), y.shape)), places=12)
        with self.assertRaises(DegenerateSignal):
            nrms(np.ones((10, 1)), np.zeros((10, 1)))

    def test_self_consistency(self):
        value = evaluate_nrms(_scalar_params(), _output_encoder(), self.dataset)
        self.assertLess(value, 1e-9)
        y_hat = predict(_scalar_params(), _output_encoder(), self.dataset)
        self.assertEqual((len(self.dataset) - 1, 1), y_hat.shape)

    def test_subsection_loss(self):
        encoder = LinearEncoder.zeros(1, 1, 1, 1)
        record = Dataset(t_s=0.1, inputs=np.zeros((6, 1)), outputs=np.ones((6, 1)))
        subsection = SubsectionBatch.from_record(record.inputs, record.outputs, [1], 4, 1)
        # zero state and zero input give y_hat = 0 against targets of one
        self.assertAlmostEqual(1.0, subsection_loss(_scalar_params(), encoder, subsection, 0.1), places=15)

        perfect = SubsectionBatch.from_record(self.dataset.inputs, self.dataset.outputs, [10], 40, 1)
        self.assertLess(subsection_loss(_scalar_params(), _output_encoder(), perfect, self.dataset.t_s), 1e-20)

    def test_full_loss_and_mean(self):
        params = _scalar_params(l_e=1.2, l_r=0.9)
        encoder = _output_encoder()
        starts = valid_starts(len(self.dataset), 20, 1)
        loss, grad = mean_loss_and_gradient(params, encoder, self.dataset, starts, 20, self.dataset.t_s)
        self.assertAlmostEqual(full_loss(params, encoder, self.dataset, 20), loss, places=12)
        self.assertEqual(params.n_theta + encoder.n_eta, grad.size)


class TestTrain(TestCase):

    def setUp(self):
        self.train_set = scalar_dataset(seed=1)
        self.val_set = scalar_dataset(seed=2)

    def test_zero_epochs(self):
        params = _scalar_params(l_e=1.3, l_r=0.6)
        state = train(self.train_set, self.val_set, params, LinearEncoder.zeros(1, 1, 1, 1),
                      TrainConfig(epochs=0, truncation_length=20, batch_size=16))
        np.testing.assert_array_equal(flatten(params), flatten(state.best_params()))
        self.assertEqual([], state.history)
        self.assertIsNone(state.best_epoch)

    def test_loss_decreases(self):
        config = TrainConfig(epochs=5, truncation_length=20, batch_size=32, seed=3)
        handler = RecordingHandler()
        state = train(self.train_set, self.val_set, _scalar_params(l_e=1.4, l_r=1.2), LinearEncoder.zeros(1, 1, 1, 1),
                      config, handler=handler)
        self.assertEqual(5, len(state.history))
        self.assertLess(state.history[-1].train_loss, state.history[0].train_loss)
        self.assertTrue(handler.epochs[0][1])
        self.assertEqual(min(r.val_nrms for r in state.history), state.best_val_nrms)

    def test_workers_do_not_change_result(self):
        config = TrainConfig(epochs=2, truncation_length=10, batch_size=150, seed=8)
        params = _scalar_params(l_e=0.8, l_r=1.1)
        one = train(self.train_set, self.val_set, params, LinearEncoder.zeros(1, 1, 1, 1), config, workers=1)
        four = train(self.train_set, self.val_set, params, LinearEncoder.zeros(1, 1, 1, 1), config, workers=4)
        np.testing.assert_array_equal(one.theta, four.theta)
        np.testing.assert_array_equal(one.eta, four.eta)
        self.assertEqual([r.train_loss for r in one.history], [r.train_loss for r in four.history])

    def test_retry_with_half_rate(self):
        config = TrainConfig(epochs=1, truncation_length=20, batch_size=256, seed=0, lr_start=1e-2, lr_end=1e-2)
        failure = SingularJacobian(SingularMatrix(0, 0.0, 1e-12))
        calls = []

        def check(theta, masks, h):
            calls.append(theta)
            if len(calls) == 1:
                raise failure

        handler = RecordingHandler()
        with mock.patch('phdae_cli.ident.trainer._check_step', side_effect=check):
            train(self.train_set, self.val_set, _scalar_params(), LinearEncoder.zeros(1, 1, 1, 1), config,
                  handler=handler)
        self.assertEqual([(0, 0, 5e-3)], handler.retries)

    def test_retry_exhausted(self):
        config = TrainConfig(epochs=1, truncation_length=20, batch_size=256)
        failure = SingularJacobian(SingularMatrix(0, 0.0, 1e-12))
        with mock.patch('phdae_cli.ident.trainer._check_step', side_effect=failure):
            with self.assertRaises(SolverFailure) as ctx:
                train(self.train_set, self.val_set, _scalar_params(), LinearEncoder.zeros(1, 1, 1, 1), config)
        self.assertEqual(0, ctx.exception.epoch)
        self.assertEqual(0, ctx.exception.batch)

    def test_diagonal_steps_are_relative(self):
        # one batch per epoch, so exactly one Adam step of size lr
        params = _scalar_params(l_e=1.3, l_r=1.1)
        config = TrainConfig(epochs=1, truncation_length=20, batch_size=300, lr_start=1e-2, lr_end=1e-2)
        state = train(self.train_set, self.val_set, params, LinearEncoder.zeros(1, 1, 1, 1), config)
        np.testing.assert_allclose(np.abs(np.log(state.theta / flatten(params))), [1e-2, 1e-2], rtol=1e-5)

        linear = train(self.train_set, self.val_set, params, LinearEncoder.zeros(1, 1, 1, 1),
                       replace(config, log_diagonal=False))
        np.testing.assert_allclose(np.abs(linear.theta - flatten(params)), [1e-2, 1e-2], rtol=1e-5)

    def test_positive_diagonal(self):
        np.testing.assert_array_equal([True, True], positive_diagonal(_scalar_params()))
        np.testing.assert_array_equal([False, True], positive_diagonal(_scalar_params(l_r=0.0)))
        free = init_dc_params(np.random.default_rng(0), free_topology=True)
        found = unflatten(positive_diagonal(free).astype(float), free.masks)
        np.testing.assert_array_equal(np.diag(found.l_e), [1.0, 1.0, 1.0, 0.0, 0.0])
        np.testing.assert_array_equal(np.diag(found.l_r), np.ones(5))
        self.assertEqual(0.0, np.sum(found.l_r) - np.trace(found.l_r))
        self.assertEqual(0.0, np.sum(np.abs(found.m_j)))

    def test_batch_too_large(self):
        with self.assertRaises(InsufficientData):
            train(self.train_set, self.val_set, _scalar_params(), LinearEncoder.zeros(1, 1, 1, 1),
                  TrainConfig(epochs=1, truncation_length=20, batch_size=10000))

    def test_encoder_shape_checked(self):
        with self.assertRaises(DimensionMismatch):
            train(self.train_set, self.val_set, _scalar_params(), LinearEncoder.zeros(1, 3, 1, 1),
                  TrainConfig(epochs=1, n_lag=1))

    @slow
    def test_noiseless_scalar_recovery(self):
        config = TrainConfig(epochs=200, truncation_length=40, batch_size=32, seed=0)
        state = train(self.train_set, self.val_set, _scalar_params(l_e=1.3, l_r=1.1), LinearEncoder.zeros(1, 1, 1, 1),
                      config)
        self.assertLess(evaluate_nrms(state.best_params(), state.best_encoder(), self.train_set), 1e-3)
