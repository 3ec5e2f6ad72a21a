"""
OTOMNN1 weight files:

    magic 'OTOMNN1' | version u16 | header length u32 | JSON header | tensors

The UTF-8 JSON header (sorted keys) names the model kind, its architecture,
the normalization snapshot, the bound schedule of an FCNN and the name and
shape of every tensor; tensors follow in that order as little-endian float64.
"""
from __future__ import annotations

import json
import logging
import struct
from os import path as os_path

import numpy as np

from .models import Model, BiLstmModel, FcnnModel
from .training import TrainHistory
from ..dataset import NormalizationSpec
from ..schedule import Schedule
from ...utils.exceptions import WeightFormatError
from ...utils.file import AtomicWriter, save

_logger = logging.getLogger(__name__)

__all__ = ["MAGIC", "FORMAT_VERSION", "HISTORY_SUFFIX", "saveModel", "loadModel", "loadHistory"]

MAGIC = b"OTOMNN1"
FORMAT_VERSION = 1
PREAMBLE = struct.Struct("<7sHI")
HISTORY_SUFFIX = ".history.json"


def _header(model: Model) -> dict:
    header = {
        "kind": model.kind,
        "architecture": model.architecture(),
        "normalization": model.normalization.toJson(),
        "tensors": [{"name": name, "shape": list(value.shape)} for name, value in model.params.items()],
    }
    if isinstance(model, FcnnModel):
        header["schedule"] = None if model.schedule is None else model.schedule.toJson()
    return header


def saveModel(model: Model, path: str, history: TrainHistory | None = None):
    """Write the weight file, plus '<path>.history.json' when a history is given."""
    header = json.dumps(_header(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    with AtomicWriter(path, "wb") as file:
        file.write(PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header)))
        file.write(header)
        for value in model.params.values():
            file.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    if history is not None:
        save(path + HISTORY_SUFFIX, history.toJson())
    _logger.info(f"Saved {model.kind} model ({model.parameterCount()} parameters) to '{path}'")


def _buildModel(header: dict) -> Model:
    normalization = NormalizationSpec.fromJson(header["normalization"])
    architecture = header["architecture"]
    if header["kind"] == BiLstmModel.kind:
        return BiLstmModel(architecture["layers"], architecture["hidden"], architecture["input_dim"], normalization)
    if header["kind"] == FcnnModel.kind:
        schedule = header.get("schedule")
        return FcnnModel(architecture["n_inputs"], tuple(architecture["hidden"]),
                         None if schedule is None else Schedule.fromJson(schedule), normalization)
    raise WeightFormatError(f"Unknown model kind '{header['kind']}'")


def loadModel(path: str) -> Model:
    """Read a weight file written by saveModel."""
    with open(path, "rb") as file:
        data = file.read()
    if not data.startswith(MAGIC):
        raise WeightFormatError(f"'{path}' is not an {MAGIC.decode('ascii')} weight file")
    if len(data) < PREAMBLE.size:
        raise WeightFormatError(f"Weight file '{path}' is truncated")
    _, version, header_length = PREAMBLE.unpack_from(data)
    if version != FORMAT_VERSION:
        raise WeightFormatError(f"Unsupported weight format version {version}")

    offset = PREAMBLE.size + header_length
    if len(data) < offset:
        raise WeightFormatError(f"Weight file '{path}' is truncated in its header")
    try:
        header = json.loads(data[PREAMBLE.size:offset].decode("utf-8"))
        model = _buildModel(header)
    except (ValueError, KeyError, TypeError) as e:
        raise WeightFormatError(f"Weight file '{path}' has an invalid header: {e}")

    expected = {name: tuple(value.shape) for name, value in model.params.items()}
    listed = {item["name"]: tuple(item["shape"]) for item in header["tensors"]}
    if listed != expected:
        raise WeightFormatError(f"Weight file '{path}' tensors do not match its architecture")

    for item in header["tensors"]:
        count = int(np.prod(item["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(data):
            raise WeightFormatError(f"Weight file '{path}' is truncated in tensor '{item['name']}'")
        model.params[item["name"]] = np.frombuffer(data, "<f8", count, offset).astype(np.float64).reshape(
            item["shape"])
        offset = end
    if offset != len(data):
        raise WeightFormatError(f"Weight file '{path}' has trailing bytes")
    _logger.debug(f"Loaded {model.kind} model from '{path}'")
    return model


def loadHistory(path: str) -> TrainHistory | None:
    """Training history sidecar of a weight file, None when absent."""
    history_path = path + HISTORY_SUFFIX
    if not os_path.exists(history_path):
        return None
    with open(history_path, "r", encoding="utf-8") as file:
        return TrainHistory.fromJson(json.load(file))
