import json
import unittest
from dataclasses import replace
from unittest.mock import patch

import numpy as np

from src.pyotom.tools.dataset import Dataset, DatasetConfig, generateSamples, validationMask
from src.pyotom.tools.neural import (BiLstmModel, FcnnModel, TrainConfig, TrainHistory, TransferConfig, evaluateLoss,
                                     fcnnTrain, train, transferTrain)
from src.pyotom.tools.neural.training import _runTraining
from src.pyotom.tools.schedule import loadFixtureSchedule
from src.pyotom.utils.exceptions import ConfigError, DomainError


class TestTrainConfig(unittest.TestCase):

    def test_defaults_and_validation(self):
        """Test defaults and invalid settings."""
        config = TrainConfig()
        self.assertEqual((config.batch_size, config.max_epochs, config.loss_type), (256, 30, "L1"))
        with self.assertRaises(ConfigError):
            TrainConfig(loss_type="L2")
        with self.assertRaises(ConfigError):
            TrainConfig(batch_size=0)
        with self.assertRaises(ConfigError):
            TrainConfig(early_stop_min_delta=-1.0)

    def test_from_section(self):
        """Test unknown keys are ignored and None overrides keep the section value."""
        config = TrainConfig.fromConfig({"max_epochs": 4, "unknown": 1}, max_epochs=None, seed=9)
        self.assertEqual(config.max_epochs, 4)
        self.assertEqual(config.seed, 9)

    def test_learning_rate(self):
        """Test the step schedule of the configured learning rate."""
        config = TrainConfig(lr_init=1e-2, lr_decay_factor=0.5, lr_decay_every_epochs=2)
        self.assertEqual([config.learningRate(epoch) for epoch in range(1, 6)], [1e-2, 1e-2, 5e-3, 5e-3, 2.5e-3])

    def test_transfer_config(self):
        """Test fine-tuning runs a fixed number of epochs."""
        train_config = TransferConfig(epochs=4, lr_init=1e-4).trainConfig()
        self.assertEqual(train_config.max_epochs, 4)
        self.assertEqual(train_config.early_stop_patience, 4)
        with self.assertRaises(ConfigError):
            TransferConfig(n_samples=-1)

    def test_history_json(self):
        """Test the history survives JSON with an infinite best loss."""
        history = TrainHistory()
        self.assertIsNone(history.toJson()["best_loss"])
        restored = TrainHistory.fromJson(history.toJson())
        self.assertEqual(restored.best_loss, float("inf"))


class TestTrain(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.dataset = generateSamples(DatasetConfig(seed=8), n_samples=120)

    def _train(self, **kwargs):
        config = TrainConfig(**{"lr_init": 1e-2, "batch_size": 16, "max_epochs": 4, "seed": 3, **kwargs})
        return train(BiLstmModel(layers=1, hidden=8, seed=0), self.dataset, config)

    def test_loss_decreases(self):
        """Test training improves the loss of the initial weights."""
        initial = evaluateLoss(BiLstmModel(layers=1, hidden=8, seed=0), self.dataset)
        model, history = self._train(max_epochs=6, early_stop_patience=6)
        self.assertLess(evaluateLoss(model, self.dataset), initial)
        self.assertEqual(len(history.epochs), 6)
        self.assertEqual(history.monitor, "val_loss")
        self.assertFalse(history.stopped_early)
        self.assertTrue(1 <= history.best_epoch <= 6)

    def test_deterministic(self):
        """Test the same seed trains to the same weights."""
        first, first_history = self._train(max_epochs=2)
        second, second_history = self._train(max_epochs=2)
        self.assertEqual(first, second)
        self.assertEqual([epoch["train_loss"] for epoch in first_history.epochs],
                         [epoch["train_loss"] for epoch in second_history.epochs])

    def test_early_stopping_restores_best(self):
        """Test early stopping keeps the best epoch's weights."""
        model, history = self._train(max_epochs=5, early_stop_patience=1, early_stop_min_delta=100.0)
        self.assertEqual(history.best_epoch, 1)
        self.assertEqual(len(history.epochs), 2)
        self.assertTrue(history.stopped_early)
        self.assertAlmostEqual(history.best_loss, history.epochs[0]["val_loss"], places=12)

        one_epoch, _ = self._train(max_epochs=1)
        self.assertEqual(model, one_epoch)

    def test_learning_rates_recorded(self):
        """Test each epoch records its learning rate."""
        _, history = self._train(max_epochs=3, lr_decay_every_epochs=2, early_stop_patience=3)
        self.assertEqual([epoch["lr"] for epoch in history.epochs][:2], [1e-2, 1e-2])
        self.assertAlmostEqual(history.epochs[2]["lr"], 1e-3, places=15)

    def test_empty_dataset(self):
        """Test training needs records."""
        with self.assertRaises(DomainError):
            train(BiLstmModel(layers=1, hidden=2), Dataset.empty())
        with self.assertRaises(DomainError):
            evaluateLoss(BiLstmModel(layers=1, hidden=2), self.dataset, positions=[])

    @patch("src.pyotom.tools.neural.training._logger")
    def test_tiny_dataset_without_validation(self, mock_logger):
        """Test a dataset without validation records monitors the training loss."""
        tiny = self.dataset.subset(np.arange(3))
        tiny.indices = np.arange(3)
        while validationMask(tiny.indices).any():
            tiny.indices = tiny.indices + 3
        _, history = train(BiLstmModel(layers=1, hidden=2), tiny, TrainConfig(max_epochs=1, batch_size=2))
        self.assertEqual(history.monitor, "train_loss")
        self.assertIsNone(history.epochs[0]["val_loss"])
        mock_logger.warning.assert_called()

    def test_holdout_free_training_keeps_final_weights(self):
        """Test training without a hold-out uses every record for all epochs and keeps the last weights."""
        config = TrainConfig(lr_init=1e-2, batch_size=16, max_epochs=3, early_stop_patience=1,
                             early_stop_min_delta=100.0, seed=3)
        model, history = _runTraining(BiLstmModel(layers=1, hidden=8, seed=0), self.dataset, config, holdout=False)
        self.assertEqual(len(history.epochs), 3)
        self.assertFalse(history.stopped_early)
        self.assertEqual(history.monitor, "train_loss")
        self.assertTrue(all(epoch["val_loss"] is None for epoch in history.epochs))

        first_epoch, _ = _runTraining(BiLstmModel(layers=1, hidden=8, seed=0), self.dataset,
                                      replace(config, max_epochs=1), holdout=False)
        self.assertEqual(history.best_epoch, 1)
        self.assertNotEqual(model, first_epoch)


class TestTransferAndFcnn(unittest.TestCase):

    def setUp(self):
        self.schedule = loadFixtureSchedule(10)
        self.model = BiLstmModel(layers=1, hidden=4, seed=2)

    def test_transfer_leaves_source_untouched(self):
        """Test fine-tuning works on a copy of the model."""
        original = self.model.copy()
        tuned, history = transferTrain(self.model, self.schedule,
                                       TransferConfig(n_samples=40, epochs=2, lr_init=1e-2, batch_size=8))
        self.assertEqual(self.model, original)
        self.assertNotEqual(tuned, original)
        self.assertEqual(len(history.epochs), 2)

    def test_transfer_without_samples(self):
        """Test zero transfer samples return an identical copy."""
        tuned, history = transferTrain(self.model, self.schedule, TransferConfig(n_samples=0))
        self.assertEqual(tuned, self.model)
        self.assertIsNot(tuned, self.model)
        self.assertEqual(history.epochs, [])

    def test_transfer_deterministic(self):
        """Test fine-tuning with the same seed gives the same weights."""
        config = TransferConfig(n_samples=30, epochs=1, batch_size=8, seed=4)
        first, _ = transferTrain(self.model, self.schedule, config)
        second, _ = transferTrain(self.model, self.schedule, config)
        self.assertEqual(first, second)

    def test_fcnn_train(self):
        """Test the FCNN baseline trains on one schedule and is bound to it."""
        dataset = generateSamples(DatasetConfig(seed=6), schedule=self.schedule, n_samples=60)
        model, history = fcnnTrain(dataset, self.schedule, TrainConfig(max_epochs=2, batch_size=16, lr_init=1e-2),
                                   hidden=(16, 16))
        self.assertIsInstance(model, FcnnModel)
        self.assertEqual(model.schedule, self.schedule)
        self.assertEqual(len(history.epochs), 2)
        with self.assertRaises(DomainError):
            model.checkSchedule(loadFixtureSchedule(20))

    def test_fcnn_needs_one_schedule(self):
        """Test the FCNN refuses records of other schedules."""
        dataset = generateSamples(DatasetConfig(seed=6), n_samples=10)
        with self.assertRaises(DomainError):
            fcnnTrain(dataset, self.schedule, TrainConfig(max_epochs=1), hidden=(4,))

    @patch("src.pyotom.tools.neural.training.splitIndices")
    def test_transfer_trains_on_every_sample(self, mock_split):
        """Test fine-tuning holds no records out and runs every configured epoch."""
        _, history = transferTrain(self.model, self.schedule,
                                   TransferConfig(n_samples=30, epochs=3, lr_init=1e-2, batch_size=8))
        mock_split.assert_not_called()
        self.assertEqual(len(history.epochs), 3)
        self.assertEqual(history.monitor, "train_loss")

    def test_fcnn_empty_dataset(self):
        """Test the FCNN baseline refuses an empty dataset as bad input."""
        empty = generateSamples(DatasetConfig(seed=6), schedule=self.schedule, n_samples=0)
        with self.assertRaises(DomainError):
            fcnnTrain(empty, self.schedule, TrainConfig(max_epochs=1), hidden=(4,))
        with self.assertRaises(DomainError):
            fcnnTrain(Dataset.empty(), self.schedule, TrainConfig(max_epochs=1), hidden=(4,))

    def test_history_json_is_reproducible(self):
        """Test two identical FCNN runs serialize identical histories without wall-clock times."""
        dataset = generateSamples(DatasetConfig(seed=6), schedule=self.schedule, n_samples=40)
        documents = []
        for _ in range(2):
            _, history = fcnnTrain(dataset, self.schedule, TrainConfig(max_epochs=2, seed=1), hidden=(8,))
            self.assertGreaterEqual(history.seconds, 0.0)
            documents.append(json.dumps(history.toJson(), sort_keys=True))
        self.assertEqual(documents[0], documents[1])
        self.assertNotIn("seconds", documents[0])


if __name__ == "__main__":
    unittest.main()
