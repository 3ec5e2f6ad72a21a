"""
Banded digital phantoms and the evaluation of estimators over them.

Each phantom holds one tissue parameter at five banded constants (horizontal
stripes of equal height) while the other three are drawn per pixel,
uniformly over the tissue ranges. Reports carry metrics in display units:
kmw in Hz, m0m in percent, t2m in microseconds and t1w in milliseconds.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .bloch import PARAM_NAMES, PoolConstants, TissueParams, simulateFingerprint
from .dataset import NoiseSpec, TissueRanges, sampleTissues
from .fit import FitConfig, fitVoxels
from .neural.models import Model, predict
from .schedule import Schedule
from ..utils.exceptions import ConfigError, DomainError
from ..utils.file import load, save
from ..utils.rng import Xoshiro256StarStar, deriveSeeds

_logger = logging.getLogger(__name__)

__all__ = ["BAND_VALUES", "REPORT_UNITS", "METHODS", "Phantom", "EvalReport", "buildPhantom", "buildPhantoms",
           "simulatePhantom", "buildReport", "evaluate", "compareReports", "maeTable", "saveReport", "loadReport"]

N_BANDS = 5
BAND_VALUES = {
    "kmw": (5.0, 25.0, 50.0, 75.0, 100.0),
    "m0m": (0.02, 0.06, 0.10, 0.14, 0.17),
    "t2m": (1e-6, 25e-6, 50e-6, 75e-6, 100e-6),
    "t1w": (0.2, 0.9, 1.6, 2.3, 3.0),
}
# name: (unit label, scale from SI)
REPORT_UNITS = {"kmw": ("Hz", 1.0), "m0m": ("pct", 100.0), "t2m": ("us", 1e6), "t1w": ("ms", 1e3)}
METHODS = ("otom", "otomT", "fcnn", "fit")
MODEL_METHODS = ("otom", "otomT", "fcnn")
MAE_COLUMNS = ("schedule", "method") + tuple(f"{name}_{REPORT_UNITS[name][0]}" for name in PARAM_NAMES)


@dataclass(frozen=True)
class Phantom:
    """Per-pixel tissue maps, shape (height, width, 4) in SI units."""
    swept: str
    maps: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.swept not in PARAM_NAMES:
            raise DomainError(f"Unknown swept parameter '{self.swept}', expected one of {PARAM_NAMES}")
        maps = np.array(self.maps, dtype=np.float64)
        if maps.ndim != 3 or maps.shape[2] != 4:
            raise DomainError(f"Phantom maps need shape (height, width, 4), got {maps.shape}")
        maps.setflags(write=False)
        object.__setattr__(self, "maps", maps)

    @property
    def height(self) -> int:
        return self.maps.shape[0]

    @property
    def width(self) -> int:
        return self.maps.shape[1]

    @property
    def band_values(self) -> tuple[float, ...]:
        return BAND_VALUES[self.swept]

    @property
    def pixels(self) -> np.ndarray:
        """(height * width, 4) row-major pixel table."""
        return self.maps.reshape(-1, 4)

    @property
    def tissue(self) -> TissueParams:
        return TissueParams.fromArray(self.pixels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Phantom):
            return NotImplemented
        return self.swept == other.swept and np.array_equal(self.maps, other.maps)

    def __hash__(self):
        return hash((self.swept, self.maps.tobytes()))


def bandRows(height: int) -> np.ndarray:
    """Band index of every row: five stripes of (nearly) equal height."""
    return np.arange(height) * N_BANDS // height


def buildPhantom(swept: str, seed: int = 0, width: int = 64, height: int = 64,
                 ranges: TissueRanges | None = None) -> Phantom:
    """
    One banded phantom.

    :param swept: Parameter held at the band values, should be one of PARAM_NAMES
    :param seed: Seed of the non-swept parameters, should be an int
    :return: phantom - Phantom
    """
    if swept not in PARAM_NAMES:
        raise DomainError(f"Unknown swept parameter '{swept}', expected one of {PARAM_NAMES}")
    if width < 1 or height < N_BANDS:
        raise DomainError(f"Phantoms need width >= 1 and height >= {N_BANDS}, got {width}x{height}")
    ranges = ranges or TissueRanges()
    swept_index = PARAM_NAMES.index(swept)
    n_pixels = width * height

    pixel_seeds = deriveSeeds(seed, swept_index * n_pixels + np.arange(n_pixels), 1)[:, 0]
    values = sampleTissues(pixel_seeds, ranges).reshape(height, width, 4)
    values[:, :, swept_index] = np.asarray(BAND_VALUES[swept])[bandRows(height)][:, None]
    return Phantom(swept, values, seed)


def buildPhantoms(seed: int = 0, width: int = 64, height: int = 64,
                  ranges: TissueRanges | None = None) -> dict[str, Phantom]:
    """The four phantoms, one per swept parameter, keyed by parameter name."""
    return {name: buildPhantom(name, seed, width, height, ranges) for name in PARAM_NAMES}


def simulatePhantom(phantom: Phantom, schedule: Schedule, noise: NoiseSpec | None = None, seed: int = 0,
                    consts: PoolConstants | None = None) -> np.ndarray:
    """
    Fingerprint of every pixel, shape (height, width, N). Pixel i gets the
    same noise as addNoise(clean_i, noise, deriveSeeds(seed, i)[0]).
    """
    consts = consts or PoolConstants()
    pixels = phantom.pixels
    tissue = TissueParams(*(pixels[:, i] for i in range(4)))
    fingerprints = simulateFingerprint(tissue, consts, schedule)
    if noise is not None and noise.sigma > 0:
        seeds = deriveSeeds(seed, np.arange(pixels.shape[0]), 1)[:, 0]
        fingerprints = fingerprints + noise.sigma * Xoshiro256StarStar(seeds).normal(len(schedule))
    return fingerprints.reshape(phantom.height, phantom.width, len(schedule))


def _nullable(values: dict) -> dict:
    return {name: None if math.isnan(value) else value for name, value in values.items()}


def _nan(values: dict) -> dict:
    return {name: math.nan if value is None else value for name, value in values.items()}


@dataclass
class EvalReport:
    method: str
    schedule: str
    phantom: str
    mae: dict[str, float] = field(default_factory=dict)
    nrmse: dict[str, float] = field(default_factory=dict)
    correlation: dict[str, float] = field(default_factory=dict)
    mean_difference: dict[str, float] = field(default_factory=dict)
    # Seconds spent estimating, never serialized
    runtime: float = 0.0
    estimates: np.ndarray | None = None
    truth: np.ndarray | None = None

    @property
    def differences(self) -> np.ndarray:
        """Estimate minus truth per pixel, SI units."""
        return self.estimates - self.truth

    def map(self, name: str) -> np.ndarray:
        """
        Display-unit map by name: '<param>' for the estimate, '<param>_truth'
        or '<param>_diff'.
        """
        param, _, kind = name.partition("_")
        if param not in PARAM_NAMES or kind not in ("", "truth", "diff"):
            raise DomainError(f"Unknown map '{name}'")
        source = {"": self.estimates, "truth": self.truth}[kind] if kind != "diff" else self.differences
        return source[:, :, PARAM_NAMES.index(param)] * REPORT_UNITS[param][1]

    def mapNames(self) -> list[str]:
        return [f"{name}{suffix}" for name in PARAM_NAMES for suffix in ("", "_truth", "_diff")]

    def toJson(self) -> dict:
        return {
            "method": self.method, "schedule": self.schedule, "phantom": self.phantom,
            "units": {name: unit for name, (unit, _) in REPORT_UNITS.items()},
            "mae": self.mae, "nrmse_pct": _nullable(self.nrmse), "mean_difference": self.mean_difference,
            "correlation": _nullable(self.correlation),
            "maps": {} if self.estimates is None else {name: self.map(name).tolist() for name in self.mapNames()},
        }

    @classmethod
    def fromJson(cls, data: dict) -> EvalReport:
        estimates = truth = None
        maps = data.get("maps") or {}
        if maps:
            estimates = np.stack([np.asarray(maps[name]) / REPORT_UNITS[name][1] for name in PARAM_NAMES], axis=2)
            truth = np.stack([np.asarray(maps[f"{name}_truth"]) / REPORT_UNITS[name][1] for name in PARAM_NAMES],
                             axis=2)
        return cls(data["method"], data["schedule"], data["phantom"], data["mae"], _nan(data.get("nrmse_pct", {})),
                   _nan(data["correlation"]), data.get("mean_difference", {}), estimates=estimates,
                   truth=truth)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return math.nan
    return float(np.clip(stats.pearsonr(a, b)[0], -1.0, 1.0))


def buildReport(estimates, phantom: Phantom, method: str, schedule_name: str = "", runtime: float = 0.0) -> EvalReport:
    """
    Metrics of an estimate against the phantom truth.

    :param estimates: SI estimates, should be an ndarray (height, width, 4) or (height * width, 4)
    :return: report - EvalReport
    """
    estimates = np.asarray(estimates, dtype=np.float64).reshape(phantom.maps.shape)
    report = EvalReport(method, schedule_name, phantom.swept, runtime=runtime, estimates=estimates,
                        truth=np.array(phantom.maps))
    for index, name in enumerate(PARAM_NAMES):
        scale = REPORT_UNITS[name][1]
        truth = phantom.maps[:, :, index].ravel()
        estimate = estimates[:, :, index].ravel()
        difference = (estimate - truth) * scale
        span = np.ptp(truth) * scale
        rmse = float(np.sqrt(np.mean(difference ** 2)))
        report.mae[name] = float(np.mean(np.abs(difference)))
        report.nrmse[name] = 100.0 * rmse / span if span > 0 else math.nan
        report.correlation[name] = _pearson(truth, estimate)
        report.mean_difference[name] = float(np.mean(difference))
    return report


def evaluate(method: str, phantom: Phantom, schedule: Schedule, model: Model | None = None,
             fit_config: FitConfig | None = None, noise: NoiseSpec | None = None, seed: int = 0,
             consts: PoolConstants | None = None, fingerprints=None, workers: int = 0,
             deterministic: bool = False) -> EvalReport:
    """
    Run one estimator over a phantom simulated on a schedule.

    :param method: One of 'otom', 'otomT', 'fcnn' (these need a model) or 'fit', should be a str
    :param phantom: Ground truth, should be a Phantom
    :param schedule: Acquisition schedule, should be a Schedule
    :param model: Trained estimator, should be a Model | None
    :param fit_config: Settings of the 'fit' method, should be a FitConfig | None
    :param noise: Image noise, None for noiseless, should be a NoiseSpec | None
    :param fingerprints: Pre-simulated (height, width, N) images, should be an ndarray | None
    :return: report - EvalReport
    """
    if method not in METHODS:
        raise ConfigError(f"Unknown evaluation method '{method}', expected one of {METHODS}")
    if method in MODEL_METHODS and model is None:
        raise ConfigError(f"Method '{method}' needs a trained model")

    if fingerprints is None:
        consts = consts or (fit_config.consts if fit_config is not None else PoolConstants())
        fingerprints = simulatePhantom(phantom, schedule, noise, seed, consts)
    fingerprints = np.asarray(fingerprints, dtype=np.float64).reshape(-1, len(schedule))

    started = time.perf_counter()
    if method == "fit":
        results = fitVoxels(fingerprints, schedule, fit_config, workers, deterministic)
        estimates = np.array([result.params.toArray() for result in results])
    else:
        estimates = predict(model, fingerprints, schedule)
    runtime = time.perf_counter() - started

    report = buildReport(estimates, phantom, method, schedule.name, runtime)
    _logger.info(f"Evaluated '{method}' on phantom '{phantom.swept}' with schedule '{schedule.name}' in "
                 f"{runtime:.2f} s: MAE " + ", ".join(f"{name} {report.mae[name]:.4g} {REPORT_UNITS[name][0]}"
                                                      for name in PARAM_NAMES))
    return report


def compareReports(a: EvalReport, b: EvalReport) -> dict[str, dict[str, float]]:
    """
    Agreement of two estimators on the same phantom: Pearson correlation and
    mean difference (a - b, display units) per parameter.
    """
    if a.estimates is None or b.estimates is None or a.estimates.shape != b.estimates.shape:
        raise DomainError("Reports must carry estimate maps of the same shape to be compared")
    if a.phantom != b.phantom:
        _logger.warning(f"Comparing reports of different phantoms '{a.phantom}' and '{b.phantom}'")
    agreement = {}
    for index, name in enumerate(PARAM_NAMES):
        first = a.estimates[:, :, index].ravel()
        second = b.estimates[:, :, index].ravel()
        agreement[name] = {"correlation": _pearson(first, second),
                           "mean_difference": float(np.mean(first - second)) * REPORT_UNITS[name][1]}
    return agreement


def maeTable(reports: list[EvalReport], path: str = "") -> str:
    """
    CSV of MAE per (schedule, method); the column of parameter p comes from
    the report on the phantom swept in p, empty when there is none.

    :param path: Write the table here too when given, should be a str
    :return: table - str
    """
    rows: dict[tuple[str, str], dict[str, float]] = {}
    for report in reports:
        rows.setdefault((report.schedule, report.method), {})[report.phantom] = report.mae[report.phantom]

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(MAE_COLUMNS)
    for (schedule, method), values in rows.items():
        writer.writerow([schedule, method] + [f"{values[name]:.6g}" if name in values else ""
                                              for name in PARAM_NAMES])
    table = buffer.getvalue()
    if path:
        save(path, table)
    return table


def saveReport(report: EvalReport, path: str):
    save(path, report.toJson())
    _logger.debug(f"Saved report '{report.method}/{report.phantom}/{report.schedule}' to '{path}'")


def loadReport(path: str) -> EvalReport:
    data = load(path)
    try:
        return EvalReport.fromJson(data)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"'{path}' is not an evaluation report: {e}")
