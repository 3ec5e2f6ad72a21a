import math
import shutil
import tempfile
import unittest
from os import path as os_path

import numpy as np

from src.pyotom.tools.bloch import TissueParams
from src.pyotom.tools.dataset import DatasetConfig, TissueRanges, generateSamples
from src.pyotom.tools.neural import (AdamState, BiLstmModel, FcnnModel, TrainHistory, adamStep, gradientCheck,
                                     l1Loss, lstmCellForward, lstmLayerForward, loadHistory, loadModel, predict,
                                     saveModel, stepLearningRate)
from src.pyotom.tools.schedule import Schedule, loadFixtureSchedule
from src.pyotom.utils.exceptions import DomainError, WeightFormatError


def _maskedBatch(lengths, input_dim: int = 5, seed: int = 0):
    rng = np.random.default_rng(seed)
    lengths = np.asarray(lengths)
    steps = int(lengths.max())
    xs = rng.uniform(0.0, 1.0, (steps, lengths.size, input_dim))
    mask = (np.arange(steps)[:, None] < lengths[None, :]).astype(np.float64)
    return xs * mask[..., None], mask


def _sigmoid(value: float) -> float:
    return 1.0 / (1.0 + math.exp(-value))


def _scalarCell(x, h, c, W, U, b):
    """One LSTM step written element by element, gates in [input, forget, cell, output] order."""
    hidden = len(h)
    z = [b[row] + sum(W[row][col] * x[col] for col in range(len(x)))
         + sum(U[row][col] * h[col] for col in range(hidden)) for row in range(4 * hidden)]
    h_new, c_new = [], []
    for unit in range(hidden):
        i = _sigmoid(z[unit])
        f = _sigmoid(z[hidden + unit])
        g = math.tanh(z[2 * hidden + unit])
        o = _sigmoid(z[3 * hidden + unit])
        c_new.append(f * c[unit] + i * g)
        h_new.append(o * math.tanh(c_new[-1]))
    return h_new, c_new


def _scalarDirection(sequence, W, U, b, reverse: bool = False):
    hidden = U.shape[1]
    h, c = [0.0] * hidden, [0.0] * hidden
    outputs = [None] * len(sequence)
    for t in (reversed(range(len(sequence))) if reverse else range(len(sequence))):
        h, c = _scalarCell(sequence[t], h, c, W, U, b)
        outputs[t] = h
    return outputs


class TestLayers(unittest.TestCase):

    def test_lstm_cell_with_zero_weights(self):
        """Test a zero-weight cell halves the cell state through the forget gate."""
        hidden = 3
        weights = {"W": np.zeros((4 * hidden, 2)), "U": np.zeros((4 * hidden, hidden)), "b": np.zeros(4 * hidden)}
        c = np.array([1.0, -2.0, 0.5])
        h_new, c_new = lstmCellForward(np.ones(2), np.zeros(hidden), c, weights)
        np.testing.assert_allclose(c_new, 0.5 * c, rtol=1e-15)
        np.testing.assert_allclose(h_new, 0.5 * np.tanh(0.5 * c), rtol=1e-15)

    def test_lstm_cell_matches_elementwise_step(self):
        """Test the vectorized cell against an element-by-element step for random weights and states."""
        rng = np.random.default_rng(5)
        hidden, inputs = 4, 3
        for _ in range(5):
            weights = {"W": rng.normal(size=(4 * hidden, inputs)), "U": rng.normal(size=(4 * hidden, hidden)),
                       "b": rng.normal(size=4 * hidden)}
            x, h, c = rng.normal(size=inputs), rng.normal(size=hidden), rng.normal(size=hidden)
            h_new, c_new = lstmCellForward(x, h, c, weights)
            h_expected, c_expected = _scalarCell(x, h, c, weights["W"], weights["U"], weights["b"])
            np.testing.assert_allclose(h_new, h_expected, rtol=0, atol=1e-12)
            np.testing.assert_allclose(c_new, c_expected, rtol=0, atol=1e-12)

    def test_lstm_cell_shape_checks(self):
        """Test mismatched weights are refused."""
        weights = {"W": np.zeros((12, 2)), "U": np.zeros((12, 3)), "b": np.zeros(12)}
        with self.assertRaises(DomainError):
            lstmCellForward(np.ones(4), np.zeros(3), np.zeros(3), weights)
        with self.assertRaises(DomainError):
            lstmCellForward(np.ones(2), np.zeros(3), np.zeros(2), weights)
        with self.assertRaises(DomainError):
            lstmCellForward(np.ones(2), np.zeros(3), np.zeros(3), {**weights, "b": np.zeros(8)})

    def test_masked_steps_hold_state(self):
        """Test padded steps leave the hidden state of a sequence unchanged."""
        rng = np.random.default_rng(2)
        W, U, b = rng.normal(size=(8, 5)), rng.normal(size=(8, 2)), rng.normal(size=8)
        xs, mask = _maskedBatch([2, 4])
        hs, _ = lstmLayerForward(xs, mask, W, U, b)
        np.testing.assert_array_equal(hs[2, 0], hs[1, 0])
        np.testing.assert_array_equal(hs[3, 0], hs[1, 0])
        self.assertFalse(np.array_equal(hs[3, 1], hs[2, 1]))

        hs_reverse, _ = lstmLayerForward(xs, mask, W, U, b, reverse=True)
        np.testing.assert_array_equal(hs_reverse[3, 0], np.zeros(2))

    def test_l1_loss(self):
        """Test the mean absolute error and its subgradient."""
        loss, grad = l1Loss(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0, 2.0], [5.0, 4.0]]))
        self.assertAlmostEqual(loss, 0.75, places=15)
        np.testing.assert_array_equal(grad, [[0.25, 0.0], [-0.25, 0.0]])
        with self.assertRaises(DomainError):
            l1Loss(np.zeros(3), np.zeros(4))


class TestOptim(unittest.TestCase):

    def test_first_adam_step(self):
        """Test the first bias-corrected step moves each entry by about lr against its gradient."""
        params = {"w": np.array([1.0, -1.0, 0.5])}
        state = AdamState.fromParams(params)
        adamStep(state, params, {"w": np.array([0.2, -3.0, 0.0])}, lr=0.01)
        np.testing.assert_allclose(params["w"], [0.99, -0.99, 0.5], atol=1e-6)
        self.assertEqual(state.step, 1)

    def test_adam_minimizes_quadratic(self):
        """Test repeated steps reach the minimum of a quadratic."""
        params = {"w": np.array([3.0, -2.0])}
        state = AdamState.fromParams(params)
        for _ in range(2000):
            adamStep(state, params, {"w": 2.0 * (params["w"] - 1.0)}, lr=0.05)
        np.testing.assert_allclose(params["w"], [1.0, 1.0], atol=1e-2)

    def test_adam_trace_matches_elementwise_update(self):
        """Test 100 steps with varying gradients follow the element-by-element bias-corrected update."""
        rng = np.random.default_rng(9)
        params = {"w": rng.normal(size=3), "m": rng.normal(size=(2, 2))}
        expected = {name: [float(item) for item in value.ravel()] for name, value in params.items()}
        first = {name: [0.0] * len(values) for name, values in expected.items()}
        second = {name: [0.0] * len(values) for name, values in expected.items()}
        beta1, beta2, eps, lr = 0.9, 0.999, 1e-8, 0.01
        state = AdamState.fromParams(params)
        for step in range(1, 101):
            grads = {name: rng.normal(size=value.shape) for name, value in params.items()}
            adamStep(state, params, grads, lr=lr)
            for name, values in expected.items():
                for index, grad in enumerate(grads[name].ravel()):
                    first[name][index] = beta1 * first[name][index] + (1.0 - beta1) * grad
                    second[name][index] = beta2 * second[name][index] + (1.0 - beta2) * grad * grad
                    m_hat = first[name][index] / (1.0 - beta1 ** step)
                    v_hat = second[name][index] / (1.0 - beta2 ** step)
                    values[index] -= lr * m_hat / (math.sqrt(v_hat) + eps)
        self.assertEqual(state.step, 100)
        for name, value in params.items():
            np.testing.assert_allclose(value.ravel(), expected[name], rtol=0, atol=1e-10)

    def test_adam_shape_mismatch(self):
        """Test a gradient of the wrong shape is refused."""
        params = {"w": np.zeros(3)}
        with self.assertRaises(DomainError):
            adamStep(AdamState.fromParams(params), params, {"w": np.zeros(2)}, lr=0.1)

    def test_step_learning_rate(self):
        """Test the learning rate drops by the factor every period."""
        rates = [stepLearningRate(epoch, 1e-3, 0.1, 5) for epoch in range(1, 12)]
        self.assertEqual(rates[:5], [1e-3] * 5)
        for rate in rates[5:10]:
            self.assertAlmostEqual(rate, 1e-4, places=18)
        self.assertAlmostEqual(rates[10], 1e-5, places=18)
        with self.assertRaises(DomainError):
            stepLearningRate(0, 1e-3, 0.1, 5)


class TestBiLstmModel(unittest.TestCase):

    def setUp(self):
        self.model = BiLstmModel(layers=2, hidden=4, seed=7)

    def test_initialization(self):
        """Test tensor shapes, forget-gate bias and seeded initialization."""
        self.assertEqual(self.model.params["layer0.forward.W"].shape, (16, 5))
        self.assertEqual(self.model.params["layer1.backward.W"].shape, (16, 8))
        self.assertEqual(self.model.params["head.W"].shape, (4, 8))
        np.testing.assert_array_equal(self.model.params["layer0.forward.b"][4:8], np.ones(4))
        bound = 1.0 / np.sqrt(4)
        self.assertTrue(np.all(np.abs(self.model.params["layer1.forward.U"]) <= bound))
        self.assertEqual(self.model, BiLstmModel(layers=2, hidden=4, seed=7))
        self.assertNotEqual(self.model, BiLstmModel(layers=2, hidden=4, seed=8))

    def test_invalid_sizes(self):
        """Test impossible architectures are refused."""
        with self.assertRaises(DomainError):
            BiLstmModel(layers=0)
        with self.assertRaises(DomainError):
            BiLstmModel(hidden=0)

    def test_forward_shapes_and_checks(self):
        """Test outputs are non-negative (B, 4) and malformed inputs are refused."""
        xs, mask = _maskedBatch([5, 3, 1])
        output, _ = self.model.forward((xs, mask))
        self.assertEqual(output.shape, (3, 4))
        self.assertTrue(np.all(output >= 0))
        with self.assertRaises(DomainError):
            self.model.forward((xs[..., :4], mask))
        with self.assertRaises(DomainError):
            self.model.forward((xs, mask[:, :2]))
        with self.assertRaises(DomainError):
            self.model.forward((xs, np.zeros_like(mask)))

    def test_padding_invariance(self):
        """Test a padded batch gives each sequence's own result."""
        xs, mask = _maskedBatch([5, 3, 1])
        model = BiLstmModel(layers=2, hidden=4, seed=1)
        model.params["head.b"][:] = 1.0
        batch_output, _ = model.forward((xs, mask))
        for column, length in enumerate([5, 3, 1]):
            alone, _ = model.forward((xs[:length, column:column + 1], mask[:length, column:column + 1]))
            np.testing.assert_allclose(batch_output[column], alone[0], rtol=1e-10, atol=1e-12)

    def test_forward_matches_elementwise_network(self):
        """Test the stacked bidirectional forward pass on a 7-step sequence against an element-by-element network."""
        xs, mask = _maskedBatch([7], seed=6)
        output, cache = self.model.forward((xs, mask))

        sequence = [list(step) for step in xs[:, 0]]
        for layer in range(self.model.layers):
            forward = _scalarDirection(sequence, *self.model._direction(layer, "forward"))
            backward = _scalarDirection(sequence, *self.model._direction(layer, "backward"), reverse=True)
            sequence = [forward[t] + backward[t] for t in range(len(sequence))]
        features = forward[-1] + backward[0]
        head_W, head_b = self.model.params["head.W"], self.model.params["head.b"]
        z = [head_b[row] + sum(head_W[row][col] * features[col] for col in range(len(features)))
             for row in range(len(head_b))]

        np.testing.assert_allclose(cache[3][0], z, rtol=0, atol=1e-10)
        np.testing.assert_allclose(output[0], [max(value, 0.0) for value in z], rtol=0, atol=1e-10)

    def test_gradient_check(self):
        """Test backpropagation through time against finite differences on a masked batch."""
        xs, mask = _maskedBatch([5, 3, 1], seed=4)
        self.model.params["head.b"][:] = 10.0
        errors = gradientCheck(self.model, (xs, mask), np.full((3, 4), 20.0))
        self.assertEqual(set(errors), set(self.model.params))
        for name, error in errors.items():
            self.assertLess(error, 1e-4, name)

    def test_predict_variable_lengths(self):
        """Test per-record schedules of different lengths predict like single records."""
        short, long = loadFixtureSchedule(10), loadFixtureSchedule(20)
        rng = np.random.default_rng(3)
        fingerprints = [rng.uniform(0.2, 0.9, 10), rng.uniform(0.2, 0.9, 20)]
        together = predict(self.model, fingerprints, [short, long])
        self.assertEqual(together.shape, (2, 4))
        alone = predict(self.model, fingerprints[1], long)
        self.assertIsInstance(alone, TissueParams)
        np.testing.assert_allclose(together[1], alone.toArray(), rtol=1e-10)

    def test_predict_physical_units(self):
        """Test predictions are denormalized above the lower range ends."""
        schedule = loadFixtureSchedule(10)
        params = predict(self.model, np.full((5, 10), 0.5), schedule, batch_size=2)
        self.assertEqual(params.shape, (5, 4))
        self.assertTrue(np.all(params >= TissueRanges().bounds[:, 0] - 1e-15))

    def test_predict_length_mismatch(self):
        """Test fingerprints must match their schedules."""
        with self.assertRaises(DomainError):
            predict(self.model, np.zeros(9), loadFixtureSchedule(10))
        with self.assertRaises(DomainError):
            predict(self.model, np.zeros((2, 10)), [loadFixtureSchedule(10)])

    def test_batch_from_dataset(self):
        """Test dataset batches are time-major with normalized targets."""
        dataset = generateSamples(DatasetConfig(seed=1), n_samples=4)
        (xs, mask), targets = self.model.batch(dataset, [0, 2])
        width = int(dataset.lengths[[0, 2]].max())
        self.assertEqual(xs.shape, (width, 2, 5))
        np.testing.assert_array_equal(mask.sum(axis=0), dataset.lengths[[0, 2]])
        self.assertTrue(np.all(targets >= 0) and np.all(targets <= 1))


class TestFcnnModel(unittest.TestCase):

    def setUp(self):
        self.schedule = loadFixtureSchedule(10)
        self.model = FcnnModel(10, hidden=(8, 8), schedule=self.schedule, seed=2)

    def test_shapes(self):
        """Test tensor shapes and parameter count."""
        self.assertEqual(self.model.params["dense0.W"].shape, (8, 10))
        self.assertEqual(self.model.params["dense2.W"].shape, (4, 8))
        self.assertEqual(self.model.parameterCount(), 8 * 10 + 8 + 8 * 8 + 8 + 4 * 8 + 4)
        with self.assertRaises(DomainError):
            FcnnModel(10, hidden=(8, 0))
        with self.assertRaises(DomainError):
            FcnnModel(20, schedule=self.schedule)

    def test_gradient_check(self):
        """Test dense backpropagation against finite differences."""
        self.model.params["dense2.b"][:] = 10.0
        inputs = np.random.default_rng(5).uniform(0.0, 1.0, (4, 10))
        errors = gradientCheck(self.model, inputs, np.full((4, 4), 20.0))
        for name, error in errors.items():
            self.assertLess(error, 1e-4, name)

    def test_bound_schedule(self):
        """Test the FCNN refuses other schedules."""
        self.model.checkSchedule(self.schedule)
        with self.assertRaises(DomainError):
            self.model.checkSchedule(loadFixtureSchedule(20))
        shifted = Schedule(self.schedule.points + np.array([0.0, 1.0, 0.0, 0.0]), name="shifted")
        with self.assertRaises(DomainError):
            self.model.checkSchedule(shifted)
        with self.assertRaises(DomainError):
            predict(self.model, np.zeros(10), shifted)
        self.assertEqual(predict(self.model, np.full((3, 10), 0.5), self.schedule).shape, (3, 4))

    def test_batch_requires_bound_schedule(self):
        """Test dataset batches must share the bound schedule."""
        config = DatasetConfig(seed=1)
        fixed = generateSamples(config, schedule=self.schedule, n_samples=4)
        inputs, _ = self.model.batch(fixed, np.arange(4))
        self.assertEqual(inputs.shape, (4, 10))
        with self.assertRaises(DomainError):
            self.model.batch(generateSamples(config, schedule=loadFixtureSchedule(20), n_samples=4), np.arange(4))


class TestWeights(unittest.TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()
        self.path = os_path.join(self.tmp_dir, "model.otomnn")

    def tearDown(self):
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def test_bilstm_round_trip(self):
        """Test a saved bi-LSTM loads with identical weights and history."""
        model = BiLstmModel(layers=1, hidden=3, seed=4)
        history = TrainHistory(epochs=[{"epoch": 1, "train_loss": 0.2}], best_epoch=1, best_loss=0.2)
        saveModel(model, self.path, history)
        loaded = loadModel(self.path)
        self.assertIsInstance(loaded, BiLstmModel)
        self.assertEqual(loaded, model)
        self.assertEqual(loaded.normalization, model.normalization)
        self.assertEqual(loadHistory(self.path).best_epoch, 1)

    def test_fcnn_round_trip(self):
        """Test a saved FCNN keeps its bound schedule."""
        schedule = loadFixtureSchedule(10)
        model = FcnnModel(10, hidden=(4,), schedule=schedule, seed=1)
        saveModel(model, self.path)
        loaded = loadModel(self.path)
        self.assertEqual(loaded, model)
        self.assertEqual(loaded.schedule, schedule)
        self.assertEqual(loaded.schedule.name, "pr10")
        self.assertIsNone(loadHistory(self.path))

    def test_bad_files(self):
        """Test foreign, truncated and padded weight files are refused."""
        saveModel(BiLstmModel(layers=1, hidden=2), self.path)
        with open(self.path, "rb") as file:
            data = file.read()

        cases = {"foreign": b"NOTMODEL" + data[8:], "truncated": data[:-8], "padded": data + b"\x00",
                 "short": data[:9]}
        for name, content in cases.items():
            with self.subTest(name=name):
                with open(self.path, "wb") as file:
                    file.write(content)
                with self.assertRaises(WeightFormatError):
                    loadModel(self.path)


if __name__ == "__main__":
    unittest.main()
