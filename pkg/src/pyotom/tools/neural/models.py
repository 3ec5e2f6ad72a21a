"""
The two learned estimators. Both map network inputs to the four tissue
parameters in normalized [0, 1] units through a ReLU output:

- BiLstmModel: stacked bidirectional LSTM over X_i = [S, b1, omega, ts, td]_i
  for any schedule length; the head sees concat(forward h at step N, backward h
  at step 1) of the top layer.
- FcnnModel: fully connected ReLU network over the N signals of one fixed
  schedule.

forward() returns its cache instead of storing it, so inference on a finished
model is read-only.
"""
from __future__ import annotations

import copy
import logging

import numpy as np

from .layers import relu, lstmLayerForward, lstmLayerBackward, denseForward, denseBackward, l1Loss
from ..dataset import Dataset, NormalizationSpec
from ..schedule import Schedule
from ..bloch import TissueParams
from ...utils.exceptions import DomainError

_logger = logging.getLogger(__name__)

__all__ = ["Model", "BiLstmModel", "FcnnModel", "predict", "PREDICT_BATCH_SIZE"]

DIRECTIONS = ("forward", "backward")
N_OUTPUTS = 4
PREDICT_BATCH_SIZE = 256


class Model:
    """Named float64 parameter tensors plus the normalization they were trained with."""

    kind = ""

    def __init__(self, normalization: NormalizationSpec | None = None):
        self.params: dict[str, np.ndarray] = {}
        self.normalization = normalization or NormalizationSpec()

    def parameterCount(self) -> int:
        return int(sum(value.size for value in self.params.values()))

    def copy(self) -> Model:
        return copy.deepcopy(self)

    def architecture(self) -> dict:
        raise NotImplementedError

    def forward(self, inputs):
        raise NotImplementedError

    def backward(self, dout: np.ndarray, cache) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def batch(self, dataset: Dataset, positions) -> tuple:
        """Network inputs and normalized targets for some records of a dataset."""
        raise NotImplementedError

    def loss(self, inputs, targets) -> float:
        output, _ = self.forward(inputs)
        return l1Loss(output, targets)[0]

    def lossAndGradients(self, inputs, targets) -> tuple[float, dict[str, np.ndarray]]:
        output, cache = self.forward(inputs)
        loss, dout = l1Loss(output, targets)
        return loss, self.backward(dout, cache)

    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return (self.architecture() == other.architecture() and self.params.keys() == other.params.keys()
                and all(np.array_equal(value, other.params[name]) for name, value in self.params.items()))

    __hash__ = object.__hash__


class BiLstmModel(Model):
    kind = "bilstm"

    def __init__(self, layers: int = 2, hidden: int = 64, input_dim: int = 5,
                 normalization: NormalizationSpec | None = None, seed: int = 0):
        super().__init__(normalization)
        if layers < 1 or hidden < 1 or input_dim < 1:
            raise DomainError(f"Invalid bi-LSTM size: layers={layers}, hidden={hidden}, input_dim={input_dim}")
        self.layers = layers
        self.hidden = hidden
        self.input_dim = input_dim
        self._initialize(seed)

    def _initialize(self, seed: int):
        """Uniform in +-1/sqrt(H) everywhere, forget-gate bias 1.0."""
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(self.hidden)
        H = self.hidden
        for layer in range(self.layers):
            in_dim = self.input_dim if layer == 0 else 2 * H
            for direction in DIRECTIONS:
                prefix = f"layer{layer}.{direction}"
                self.params[f"{prefix}.W"] = rng.uniform(-bound, bound, (4 * H, in_dim))
                self.params[f"{prefix}.U"] = rng.uniform(-bound, bound, (4 * H, H))
                bias = rng.uniform(-bound, bound, 4 * H)
                bias[H:2 * H] = 1.0
                self.params[f"{prefix}.b"] = bias
        self.params["head.W"] = rng.uniform(-bound, bound, (N_OUTPUTS, 2 * H))
        self.params["head.b"] = rng.uniform(-bound, bound, N_OUTPUTS)

    def architecture(self) -> dict:
        return {"layers": self.layers, "hidden": self.hidden, "input_dim": self.input_dim,
                "head": [N_OUTPUTS, 2 * self.hidden]}

    def _direction(self, layer: int, direction: str):
        prefix = f"layer{layer}.{direction}"
        return self.params[f"{prefix}.W"], self.params[f"{prefix}.U"], self.params[f"{prefix}.b"]

    def forward(self, inputs):
        """
        :param inputs: xs (T, B, input_dim) and mask (T, B), should be a tuple[ndarray, ndarray]
        :return: output, cache - tuple[ndarray (B, 4), tuple]
        """
        xs, mask = inputs
        xs = np.asarray(xs, dtype=np.float64)
        mask = np.asarray(mask, dtype=np.float64)
        if xs.ndim != 3 or xs.shape[0] == 0:
            raise DomainError("Bi-LSTM input must be a non-empty (T, B, features) sequence")
        if xs.shape[-1] != self.input_dim:
            raise DomainError(f"Bi-LSTM expects {self.input_dim} input channels, got {xs.shape[-1]}")
        if mask.shape != xs.shape[:2]:
            raise DomainError(f"Mask shape {mask.shape} does not match input {xs.shape[:2]}")
        if not np.all(mask.any(axis=0)):
            raise DomainError("Every sequence needs at least one valid step")

        caches = []
        layer_input = xs
        for layer in range(self.layers):
            hs_forward, cache_forward = lstmLayerForward(layer_input, mask, *self._direction(layer, "forward"))
            hs_backward, cache_backward = lstmLayerForward(layer_input, mask, *self._direction(layer, "backward"),
                                                           reverse=True)
            caches.append((layer_input, cache_forward, cache_backward))
            layer_input = np.concatenate([hs_forward, hs_backward], axis=-1)

        features = np.concatenate([hs_forward[-1], hs_backward[0]], axis=-1)
        z = denseForward(features, self.params["head.W"], self.params["head.b"])
        return relu(z), (mask, caches, features, z)

    def backward(self, dout: np.ndarray, cache) -> dict[str, np.ndarray]:
        mask, caches, features, z = cache
        H = self.hidden
        grads = {}

        dz = dout * (z > 0)
        dfeatures, grads["head.W"], grads["head.b"] = denseBackward(dz, features, self.params["head.W"])

        steps = mask.shape[0]
        batch = mask.shape[1]
        d_above = np.zeros((steps, batch, 2 * H))
        d_above[-1, :, :H] += dfeatures[:, :H]
        d_above[0, :, H:] += dfeatures[:, H:]

        for layer in reversed(range(self.layers)):
            layer_input, cache_forward, cache_backward = caches[layer]
            d_input = np.zeros(layer_input.shape)
            for direction, part, layer_cache in (("forward", slice(0, H), cache_forward),
                                                 ("backward", slice(H, 2 * H), cache_backward)):
                W, U, _ = self._direction(layer, direction)
                dxs, dW, dU, db = lstmLayerBackward(d_above[..., part], layer_input, mask, W, U, layer_cache,
                                                    reverse=direction == "backward")
                prefix = f"layer{layer}.{direction}"
                grads[f"{prefix}.W"], grads[f"{prefix}.U"], grads[f"{prefix}.b"] = dW, dU, db
                d_input += dxs
            d_above = d_input

        return {name: grads[name] for name in self.params}

    def makeInputs(self, fingerprints, points, lengths) -> tuple[np.ndarray, np.ndarray]:
        """Time-major normalized inputs and mask from padded (B, T) signals and (B, T, 4) scans."""
        fingerprints = np.asarray(fingerprints, dtype=np.float64)
        lengths = np.asarray(lengths)
        mask = np.arange(fingerprints.shape[1]) < lengths[:, None]
        xs = self.normalization.normalizeInput(fingerprints, points, mask)
        return np.ascontiguousarray(xs.transpose(1, 0, 2)), mask.T.astype(np.float64)

    def batch(self, dataset: Dataset, positions) -> tuple:
        positions = np.asarray(positions, dtype=np.int64)
        width = int(dataset.lengths[positions].max())
        inputs = self.makeInputs(dataset.fingerprints[positions, :width], dataset.points[positions, :width],
                                 dataset.lengths[positions])
        return inputs, self.normalization.normalizeTarget(dataset.labels[positions])

    def predictNormalized(self, fingerprints, points, lengths) -> np.ndarray:
        output, _ = self.forward(self.makeInputs(fingerprints, points, lengths))
        return output


class FcnnModel(Model):
    kind = "fcnn"

    def __init__(self, n_inputs: int, hidden=(256, 256, 256, 256), schedule: Schedule | None = None,
                 normalization: NormalizationSpec | None = None, seed: int = 0):
        super().__init__(normalization)
        if n_inputs < 1 or any(units < 1 for units in hidden):
            raise DomainError(f"Invalid FCNN size: n_inputs={n_inputs}, hidden={hidden}")
        if schedule is not None and len(schedule) != n_inputs:
            raise DomainError(f"Bound schedule has {len(schedule)} scans, expected {n_inputs}")
        self._n_inputs = n_inputs
        self.hidden = tuple(int(units) for units in hidden)
        self.schedule = schedule
        self._initialize(seed)

    @property
    def n_inputs(self) -> int:
        return self._n_inputs

    def _initialize(self, seed: int):
        """Uniform in +-1/sqrt(fan_in)."""
        rng = np.random.default_rng(seed)
        sizes = (self._n_inputs, *self.hidden, N_OUTPUTS)
        for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            self.params[f"dense{layer}.W"] = rng.uniform(-bound, bound, (fan_out, fan_in))
            self.params[f"dense{layer}.b"] = rng.uniform(-bound, bound, fan_out)

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1

    def architecture(self) -> dict:
        return {"n_inputs": self._n_inputs, "hidden": list(self.hidden), "outputs": N_OUTPUTS}

    def forward(self, inputs):
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self._n_inputs:
            raise DomainError(f"FCNN expects inputs of length {self._n_inputs}, got shape {x.shape}")
        activations = [x]
        pre_activations = []
        for layer in range(self.n_layers):
            z = denseForward(activations[-1], self.params[f"dense{layer}.W"], self.params[f"dense{layer}.b"])
            pre_activations.append(z)
            activations.append(relu(z))
        return activations[-1], (activations, pre_activations)

    def backward(self, dout: np.ndarray, cache) -> dict[str, np.ndarray]:
        activations, pre_activations = cache
        grads = {}
        delta = dout
        for layer in reversed(range(self.n_layers)):
            dz = delta * (pre_activations[layer] > 0)
            delta, grads[f"dense{layer}.W"], grads[f"dense{layer}.b"] = denseBackward(
                dz, activations[layer], self.params[f"dense{layer}.W"])
        return {name: grads[name] for name in self.params}

    def checkSchedule(self, schedule: Schedule):
        """Raise DomainError unless the schedule is the bound one."""
        if len(schedule) != self._n_inputs:
            raise DomainError(f"FCNN is bound to {self._n_inputs} scans, got a schedule of {len(schedule)}")
        if self.schedule is not None and not np.allclose(schedule.points, self.schedule.points, rtol=1e-6, atol=0):
            raise DomainError(f"Schedule '{schedule.name}' differs from the bound schedule '{self.schedule.name}'")

    def batch(self, dataset: Dataset, positions) -> tuple:
        positions = np.asarray(positions, dtype=np.int64)
        if np.any(dataset.lengths[positions] != self._n_inputs):
            raise DomainError(f"FCNN samples must all have {self._n_inputs} scans")
        if self.schedule is not None:
            points = dataset.points[positions, :self._n_inputs]
            if not np.allclose(points, self.schedule.points, rtol=1e-6, atol=0):
                raise DomainError(f"Samples do not share the bound schedule '{self.schedule.name}'")
        inputs = dataset.fingerprints[positions, :self._n_inputs]
        return inputs, self.normalization.normalizeTarget(dataset.labels[positions])


def predict(model: Model, fingerprints, schedule, batch_size: int = PREDICT_BATCH_SIZE):
    """
    Tissue parameters in physical units.

    :param model: Trained estimator, should be a BiLstmModel | FcnnModel
    :param fingerprints: One (N,) fingerprint or (M, N) fingerprints
    :param schedule: Schedule shared by all fingerprints, or one Schedule per fingerprint (bi-LSTM only)
    :param batch_size: Inference batch size, should be an int
    :return: params - TissueParams for one fingerprint, ndarray (M, 4) otherwise
    """
    single = not isinstance(fingerprints, (list, tuple)) and np.ndim(fingerprints) == 1
    if single:
        fingerprints = [np.asarray(fingerprints, dtype=np.float64)]
    elif not isinstance(fingerprints, (list, tuple)):
        fingerprints = list(np.asarray(fingerprints, dtype=np.float64))
    schedules = schedule if isinstance(schedule, (list, tuple)) else [schedule] * len(fingerprints)
    if len(schedules) != len(fingerprints):
        raise DomainError(f"Got {len(fingerprints)} fingerprints but {len(schedules)} schedules")
    for fingerprint, item in zip(fingerprints, schedules):
        if len(fingerprint) != len(item):
            raise DomainError(f"Fingerprint length {len(fingerprint)} does not match schedule length {len(item)}")

    outputs = []
    for start in range(0, len(fingerprints), batch_size):
        chunk = fingerprints[start:start + batch_size]
        chunk_schedules = schedules[start:start + batch_size]
        if isinstance(model, FcnnModel):
            for item in {id(item): item for item in chunk_schedules}.values():
                model.checkSchedule(item)
            output, _ = model.forward(np.stack(chunk))
        else:
            width = max(len(fingerprint) for fingerprint in chunk)
            lengths = np.array([len(fingerprint) for fingerprint in chunk])
            signals = np.zeros((len(chunk), width))
            points = np.zeros((len(chunk), width, 4))
            for row, (fingerprint, item) in enumerate(zip(chunk, chunk_schedules)):
                signals[row, :len(fingerprint)] = fingerprint
                points[row, :len(item)] = item.points
            output = model.predictNormalized(signals, points, lengths)
        outputs.append(model.normalization.denormalizeTarget(output))

    params = np.concatenate(outputs) if outputs else np.zeros((0, N_OUTPUTS))
    return TissueParams.fromArray(params[0]) if single else params
