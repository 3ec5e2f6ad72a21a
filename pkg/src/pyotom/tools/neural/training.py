"""
Minibatch training with ADAM, a step learning-rate schedule and early
stopping on the validation split; transfer learning onto one fixed schedule
and the fixed-schedule FCNN baseline share the same loop.
"""
from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .models import Model, BiLstmModel, FcnnModel
from .optim import AdamState, adamStep, stepLearningRate
from ..dataset import Dataset, DatasetConfig, NormalizationSpec, generateSamples, splitIndices
from ..schedule import Schedule
from ...utils.exceptions import DomainError, ConfigError

_logger = logging.getLogger(__name__)

__all__ = ["TrainConfig", "TransferConfig", "TrainHistory", "train", "transferTrain", "fcnnTrain", "evaluateLoss",
           "gradientCheck"]

LOSS_TYPES = ("L1",)


def _fromSection(cls, section: dict, overrides: dict):
    known = {item.name for item in fields(cls)}
    kwargs = {key: value for key, value in section.items() if key in known}
    kwargs.update({key: value for key, value in overrides.items() if value is not None})
    return cls(**kwargs)


@dataclass(frozen=True)
class TrainConfig:
    lr_init: float = 1e-3
    lr_decay_factor: float = 0.1
    lr_decay_every_epochs: int = 5
    batch_size: int = 256
    max_epochs: int = 30
    early_stop_patience: int = 3
    early_stop_min_delta: float = 1e-5
    seed: int = 0
    loss_type: str = "L1"

    def __post_init__(self):
        if self.loss_type not in LOSS_TYPES:
            raise ConfigError(f"Unsupported loss type '{self.loss_type}', expected one of {LOSS_TYPES}")
        for name in ("lr_init", "lr_decay_factor", "lr_decay_every_epochs", "batch_size", "max_epochs",
                     "early_stop_patience"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"Training setting '{name}' must be positive, got: {getattr(self, name)}")
        if self.early_stop_min_delta < 0:
            raise ConfigError(f"Training setting 'early_stop_min_delta' must be non-negative")

    @classmethod
    def fromConfig(cls, section: dict, **overrides) -> TrainConfig:
        return _fromSection(cls, section, overrides)

    def learningRate(self, epoch: int) -> float:
        return stepLearningRate(epoch, self.lr_init, self.lr_decay_factor, self.lr_decay_every_epochs)


@dataclass(frozen=True)
class TransferConfig:
    n_samples: int = 20000
    epochs: int = 3
    lr_init: float = 1e-4
    lr_decay_factor: float = 0.1
    lr_decay_every_epochs: int = 2
    batch_size: int = 256
    seed: int = 1

    def __post_init__(self):
        if self.n_samples < 0:
            raise ConfigError(f"Transfer setting 'n_samples' must be non-negative, got: {self.n_samples}")

    @classmethod
    def fromConfig(cls, section: dict, **overrides) -> TransferConfig:
        return _fromSection(cls, section, overrides)

    def trainConfig(self) -> TrainConfig:
        """Settings of the fixed-length fine-tuning loop."""
        return TrainConfig(lr_init=self.lr_init, lr_decay_factor=self.lr_decay_factor,
                           lr_decay_every_epochs=self.lr_decay_every_epochs, batch_size=self.batch_size,
                           max_epochs=self.epochs, early_stop_patience=self.epochs, seed=self.seed)


@dataclass
class TrainHistory:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_loss: float = math.inf
    monitor: str = "val_loss"
    stopped_early: bool = False
    # Wall-clock time, never serialized
    seconds: float = 0.0

    def toJson(self) -> dict:
        return {"epochs": self.epochs, "best_epoch": self.best_epoch,
                "best_loss": None if math.isinf(self.best_loss) else self.best_loss, "monitor": self.monitor,
                "stopped_early": self.stopped_early}

    @classmethod
    def fromJson(cls, data: dict) -> TrainHistory:
        best_loss = data.get("best_loss")
        return cls(data.get("epochs", []), data.get("best_epoch", 0), math.inf if best_loss is None else best_loss,
                   data.get("monitor", "val_loss"), data.get("stopped_early", False))


def evaluateLoss(model: Model, dataset: Dataset, positions=None, batch_size: int = 256) -> float:
    """Mean L1 loss (normalized units) over some records."""
    positions = np.arange(len(dataset)) if positions is None else np.asarray(positions, dtype=np.int64)
    if positions.size == 0:
        raise DomainError("Cannot evaluate the loss of an empty set of records")
    total = 0.0
    for start in range(0, positions.size, batch_size):
        chunk = positions[start:start + batch_size]
        inputs, targets = model.batch(dataset, chunk)
        total += model.loss(inputs, targets) * chunk.size
    return total / positions.size


def _runTraining(model: Model, dataset: Dataset, config: TrainConfig,
                 holdout: bool = True) -> tuple[Model, TrainHistory]:
    """
    With holdout, train on the 90% split, stop early on the validation loss
    and restore the best epoch. Without it, every record is trained on for
    max_epochs and the final weights are kept.
    """
    if len(dataset) == 0:
        raise DomainError("Cannot train on an empty dataset")

    if holdout:
        train_positions, val_positions = splitIndices(dataset.indices)
        if train_positions.size == 0:
            _logger.warning("Every record fell into the validation split; training on all of them")
            train_positions, val_positions = val_positions, np.zeros(0, np.int64)
        if not val_positions.size:
            _logger.warning("Validation split is empty; early stopping monitors the training loss")
    else:
        train_positions, val_positions = np.arange(len(dataset), dtype=np.int64), np.zeros(0, np.int64)
    history = TrainHistory(monitor="val_loss" if val_positions.size else "train_loss")

    rng = np.random.default_rng(config.seed)
    state = AdamState.fromParams(model.params)
    best_params = copy.deepcopy(model.params)
    waiting = 0
    started = time.perf_counter()

    for epoch in range(1, config.max_epochs + 1):
        epoch_started = time.perf_counter()
        lr = config.learningRate(epoch)
        order = rng.permutation(train_positions)
        total = 0.0
        for start in range(0, order.size, config.batch_size):
            positions = order[start:start + config.batch_size]
            inputs, targets = model.batch(dataset, positions)
            loss, grads = model.lossAndGradients(inputs, targets)
            adamStep(state, model.params, grads, lr)
            total += loss * positions.size
            _logger.debug(f"Epoch {epoch} batch {start // config.batch_size}: loss {loss:.6f}")

        train_loss = total / order.size
        val_loss = evaluateLoss(model, dataset, val_positions, config.batch_size) if val_positions.size else None
        monitored = train_loss if val_loss is None else val_loss
        history.epochs.append({"epoch": epoch, "lr": lr, "train_loss": train_loss, "val_loss": val_loss})
        _logger.info(f"Epoch {epoch}/{config.max_epochs} ({time.perf_counter() - epoch_started:.1f} s): lr {lr:.1e}, "
                     f"train loss {train_loss:.6f}" + ("" if val_loss is None else f", validation loss {val_loss:.6f}"))

        if monitored < history.best_loss - config.early_stop_min_delta:
            history.best_loss = monitored
            history.best_epoch = epoch
            best_params = copy.deepcopy(model.params)
            waiting = 0
        else:
            waiting += 1
            if holdout and waiting >= config.early_stop_patience:
                history.stopped_early = epoch < config.max_epochs
                _logger.info(f"Early stopping after epoch {epoch}; best epoch {history.best_epoch}")
                break

    if holdout:
        model.params = best_params
    history.seconds = time.perf_counter() - started
    return model, history


def train(model: BiLstmModel, dataset: Dataset, config: TrainConfig | None = None) -> tuple[Model, TrainHistory]:
    """
    Train in place on the 90% split and keep the weights of the best
    validation epoch.

    :return: model, history - tuple[BiLstmModel, TrainHistory]
    """
    return _runTraining(model, dataset, config or TrainConfig())


def transferTrain(model: BiLstmModel, schedule: Schedule, config: TransferConfig | None = None,
                  data_config: DatasetConfig | None = None) -> tuple[BiLstmModel, TrainHistory]:
    """
    Fine-tune a copy of a trained model on fresh samples of one fixed
    schedule: every sample, config.epochs epochs, final weights kept.

    :param model: Trained model, left untouched, should be a BiLstmModel
    :param schedule: Target schedule, should be a Schedule
    :param config: Fine-tuning settings, should be a TransferConfig
    :param data_config: Ranges, noise and pool constants of the fresh samples, should be a DatasetConfig
    :return: tuned, history - tuple[BiLstmModel, TrainHistory]
    """
    config = config or TransferConfig()
    tuned = model.copy()
    if config.n_samples == 0:
        _logger.info("Transfer learning with 0 samples leaves the model unchanged")
        return tuned, TrainHistory()

    started = time.perf_counter()
    data_config = replace(data_config or DatasetConfig(), seed=config.seed)
    samples = generateSamples(data_config, schedule=schedule, n_samples=config.n_samples)
    _logger.info(f"Generated {len(samples)} samples on schedule '{schedule.name}' in "
                 f"{time.perf_counter() - started:.1f} s")
    tuned, history = _runTraining(tuned, samples, config.trainConfig(), holdout=False)
    history.seconds = time.perf_counter() - started
    return tuned, history


def fcnnTrain(dataset: Dataset, schedule: Schedule, config: TrainConfig | None = None,
              hidden=(256, 256, 256, 256), normalization: NormalizationSpec | None = None) -> tuple[FcnnModel,
                                                                                                    TrainHistory]:
    """
    Train the fixed-schedule baseline; every record must use the given schedule.

    :return: model, history - tuple[FcnnModel, TrainHistory]
    """
    if len(dataset) == 0:
        raise DomainError("Cannot train on an empty dataset")
    config = config or TrainConfig()
    model = FcnnModel(len(schedule), hidden=hidden, schedule=schedule, normalization=normalization,
                      seed=config.seed)
    model.batch(dataset, np.arange(len(dataset)))  # schedule check of every record
    return _runTraining(model, dataset, config)


def gradientCheck(model: Model, inputs, targets, eps: float = 1e-5, max_per_tensor: int | None = None,
                  seed: int = 0) -> dict[str, float]:
    """
    Largest relative error |a - n| / max(|a| + |n|, 1e-5) between backward()
    and central finite differences, per parameter tensor.

    :param max_per_tensor: Check a random subset of this many entries per tensor, should be an int | None
    :return: errors - dict[str, float]
    """
    _, analytic = model.lossAndGradients(inputs, targets)
    rng = np.random.default_rng(seed)
    errors = {}
    for name, value in model.params.items():
        flat = value.reshape(-1)
        entries = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            entries = rng.choice(flat.size, max_per_tensor, replace=False)
        worst = 0.0
        for entry in entries:
            original = flat[entry]
            flat[entry] = original + eps
            plus = model.loss(inputs, targets)
            flat[entry] = original - eps
            minus = model.loss(inputs, targets)
            flat[entry] = original
            numeric = (plus - minus) / (2.0 * eps)
            exact = analytic[name].reshape(-1)[entry]
            worst = max(worst, abs(exact - numeric) / max(abs(exact) + abs(numeric), 1e-5))
        errors[name] = worst
    return errors
