"""
Training data: seeded (schedule, noisy fingerprint, tissue label) records,
the OTOMDS1 binary file format and the normalization contract between
physical units and network inputs/targets.

Record i derives three seeds from (dataset seed, i): one for its schedule,
one for its tissue and one for its noise. Every record is therefore
reproducible on its own, and output bytes do not depend on block size or
worker count.
"""
from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import struct
import time
from dataclasses import dataclass, field, asdict
from multiprocessing import Pool

import numpy as np

from .bloch import PARAM_NAMES, PoolConstants, ScanPoint, TissueParams, transientSignal
from .schedule import Schedule, ScheduleRanges, sampleSchedules
from ..utils.exceptions import DomainError, DatasetFormatError
from ..utils.file import AtomicWriter, save
from ..utils.rng import Xoshiro256StarStar, deriveSeeds, splitMix64
from ..utils.utils import resolveWorkers

_logger = logging.getLogger(__name__)

__all__ = ["MAGIC", "FORMAT_VERSION", "SPLIT_SALT", "TissueRanges", "NoiseSpec", "Sample", "NormalizationSpec",
           "DatasetConfig", "Dataset", "DatasetReader", "sampleTissue", "sampleTissues", "addNoise",
           "simulateRecords", "generateSamples", "generateDataset", "regenerateSample", "readDataset",
           "readManifest", "exportDatasetCsv", "validationMask", "splitIndices", "empiricalSnrDb"]

MAGIC = b"OTOMDS1"
FORMAT_VERSION = 1
MANIFEST_SUFFIX = ".manifest.json"

# magic, version, n_samples, schedule bounds (4x2), n_min, n_max, tissue bounds (4x2), snr_db, manifest sha256
HEADER = struct.Struct("<7sHQ8dHH8dd32s")
RECORD_LENGTH = struct.Struct("<H")

SPLIT_SALT = 0x5EED5A17
VALIDATION_MODULUS = 10


@dataclass(frozen=True)
class TissueRanges:
    kmw: tuple[float, float] = (5.0, 100.0)
    m0m: tuple[float, float] = (0.02, 0.17)
    t2m: tuple[float, float] = (1e-6, 100e-6)
    t1w: tuple[float, float] = (0.2, 3.0)

    def __post_init__(self):
        for name in PARAM_NAMES:
            bounds = getattr(self, name)
            if len(bounds) != 2:
                raise DomainError(f"Range '{name}' needs [min, max], got: {bounds}")
            low, high = float(bounds[0]), float(bounds[1])
            if not (math.isfinite(low) and math.isfinite(high)) or low > high:
                raise DomainError(f"Inverted or non-finite range '{name}', got: [{low}, {high}]")
            if low < 0 or (name in ("t2m", "t1w") and low <= 0):
                raise DomainError(f"Range '{name}' must be positive, got: [{low}, {high}]")
            object.__setattr__(self, name, (low, high))

    @property
    def bounds(self) -> np.ndarray:
        """(4, 2) array of [min, max] per tissue parameter."""
        return np.array([getattr(self, name) for name in PARAM_NAMES], dtype=np.float64)

    @classmethod
    def fromConfig(cls, section: dict) -> TissueRanges:
        return cls(**{key: tuple(value) for key, value in section.items()})

    def toJson(self) -> dict:
        return {key: list(value) for key, value in asdict(self).items()}


@dataclass(frozen=True)
class NoiseSpec:
    """White Gaussian noise with sigma = 10^(-snr_db / 20) against a unit reference amplitude."""
    snr_db: float = 46.0

    @property
    def sigma(self) -> float:
        if math.isinf(self.snr_db) and self.snr_db > 0:
            return 0.0
        return 10.0 ** (-self.snr_db / 20.0)

    @classmethod
    def fromConfig(cls, section: dict) -> NoiseSpec:
        snr_db = section.get("snr_db", 46.0)
        return cls(math.inf if snr_db is None else float(snr_db))

    def toJson(self) -> dict:
        return {"snr_db": None if math.isinf(self.snr_db) else self.snr_db, "sigma": self.sigma}


@dataclass
class Sample:
    schedule: Schedule
    fingerprint: np.ndarray
    label: TissueParams
    seeds: tuple[int, int, int] | None = None
    clean: np.ndarray | None = None


def _affine(values, bounds: np.ndarray) -> np.ndarray:
    span = bounds[:, 1] - bounds[:, 0]
    return (np.asarray(values, dtype=np.float64) - bounds[:, 0]) / np.where(span > 0, span, 1.0)


def _warnExtrapolated(normalized: np.ndarray, names: tuple, kind: str, mask=None):
    outside = (normalized < -1e-12) | (normalized > 1.0 + 1e-12)
    if mask is not None:
        outside &= mask[..., None]
    if outside.any():
        columns = [names[i] for i in np.flatnonzero(outside.reshape(-1, len(names)).any(axis=0))]
        _logger.warning(f"{kind} values outside the normalization range are extrapolated: {columns}")


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-channel min-max maps from the sampling ranges onto [0, 1]."""
    schedule_ranges: ScheduleRanges = field(default_factory=ScheduleRanges)
    tissue_ranges: TissueRanges = field(default_factory=TissueRanges)

    def normalizeScans(self, points, mask=None) -> np.ndarray:
        normalized = _affine(points, self.schedule_ranges.bounds)
        _warnExtrapolated(normalized, ("b1", "omega", "ts", "td"), "Scan", mask)
        return normalized

    def normalizeInput(self, fingerprint, points, mask=None) -> np.ndarray:
        """
        Network inputs X_i = [S, b1, omega, ts, td]_i. The signal passes through
        unscaled; scan channels are mapped onto [0, 1].

        :param fingerprint: Signals, should be an ndarray (..., N)
        :param points: Scans, should be an ndarray (..., N, 4)
        :param mask: Valid steps of padded batches, should be a bool ndarray (..., N) | None
        :return: inputs - ndarray (..., N, 5)
        """
        fingerprint = np.asarray(fingerprint, dtype=np.float64)
        scans = self.normalizeScans(points, mask)
        if fingerprint.shape != scans.shape[:-1]:
            raise DomainError(f"Fingerprint shape {fingerprint.shape} does not match schedule {scans.shape[:-1]}")
        return np.concatenate([fingerprint[..., None], scans], axis=-1)

    def normalizeTarget(self, params) -> np.ndarray:
        """(..., 4) tissue values in physical units onto [0, 1]."""
        if isinstance(params, TissueParams):
            params = params.toArray()
        normalized = _affine(params, self.tissue_ranges.bounds)
        _warnExtrapolated(normalized, PARAM_NAMES, "Tissue")
        return normalized

    def denormalizeTarget(self, values) -> np.ndarray:
        bounds = self.tissue_ranges.bounds
        return bounds[:, 0] + (bounds[:, 1] - bounds[:, 0]) * np.asarray(values, dtype=np.float64)

    def toJson(self) -> dict:
        return {"schedule_ranges": self.schedule_ranges.toJson(), "tissue_ranges": self.tissue_ranges.toJson()}

    @classmethod
    def fromJson(cls, data: dict) -> NormalizationSpec:
        return cls(ScheduleRanges.fromConfig(data["schedule_ranges"]), TissueRanges.fromConfig(data["tissue_ranges"]))


@dataclass(frozen=True)
class DatasetConfig:
    n_samples: int = 0
    seed: int = 0
    schedule_ranges: ScheduleRanges = field(default_factory=ScheduleRanges)
    tissue_ranges: TissueRanges = field(default_factory=TissueRanges)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    consts: PoolConstants = field(default_factory=PoolConstants)
    block_size: int = 1024

    def __post_init__(self):
        if self.n_samples < 0:
            raise DomainError(f"Number of samples must be non-negative, got: {self.n_samples}")
        if self.block_size < 1:
            raise DomainError(f"Block size must be positive, got: {self.block_size}")

    @classmethod
    def fromConfig(cls, config, **overrides) -> DatasetConfig:
        """Build from the [dataset], [schedule], [tissue], [noise] and [bloch] sections."""
        dataset = config["dataset"]
        kwargs = {
            "n_samples": dataset["n_samples"],
            "seed": dataset["seed"],
            "schedule_ranges": ScheduleRanges.fromConfig(config["schedule"]),
            "tissue_ranges": TissueRanges.fromConfig(config["tissue"]),
            "noise": NoiseSpec.fromConfig(config["noise"]),
            "consts": PoolConstants.fromConfig(config["bloch"]),
            "block_size": dataset["block_size"],
        }
        kwargs.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**kwargs)

    @property
    def normalization(self) -> NormalizationSpec:
        return NormalizationSpec(self.schedule_ranges, self.tissue_ranges)

    def manifest(self) -> dict:
        """Generation settings that determine the file contents."""
        return {
            "format": MAGIC.decode("ascii"),
            "format_version": FORMAT_VERSION,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "schedule_ranges": self.schedule_ranges.toJson(),
            "tissue_ranges": self.tissue_ranges.toJson(),
            "noise": self.noise.toJson(),
            "pool_constants": self.consts.toJson(),
            "prng": "xoshiro256** lanes seeded by splitmix64; record seeds splitmix64(seed ^ i * 0xD1B54A32D192ED03)",
            "split": {"salt": SPLIT_SALT, "validation_modulus": VALIDATION_MODULUS},
            "record_layout": "n:u16, schedule:n*4*f32, fingerprint:n*f32, label:4*f32, seeds:3*u64",
        }

    def digest(self) -> bytes:
        canonical = json.dumps(self.manifest(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).digest()


@dataclass
class Dataset:
    """In-memory records, right-padded with zeros to the longest schedule."""
    lengths: np.ndarray
    points: np.ndarray
    fingerprints: np.ndarray
    labels: np.ndarray
    seeds: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return int(self.lengths.shape[0])

    @property
    def max_length(self) -> int:
        return int(self.points.shape[1])

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.max_length) < self.lengths[:, None]

    def subset(self, positions) -> Dataset:
        positions = np.asarray(positions, dtype=np.int64)
        width = int(self.lengths[positions].max()) if positions.size else 0
        return Dataset(self.lengths[positions], self.points[positions, :width], self.fingerprints[positions, :width],
                       self.labels[positions], self.seeds[positions], self.indices[positions])

    def sample(self, position: int) -> Sample:
        n = int(self.lengths[position])
        return Sample(Schedule(self.points[position, :n], name=f"record-{self.indices[position]}"),
                      self.fingerprints[position, :n].copy(), TissueParams.fromArray(self.labels[position]),
                      tuple(int(seed) for seed in self.seeds[position]))

    def __iter__(self):
        return (self.sample(i) for i in range(len(self)))

    @classmethod
    def empty(cls) -> Dataset:
        return cls(np.zeros(0, np.int64), np.zeros((0, 0, 4)), np.zeros((0, 0)), np.zeros((0, 4)),
                   np.zeros((0, 3), np.uint64), np.zeros(0, np.int64))

    @classmethod
    def concatenate(cls, parts: list[Dataset]) -> Dataset:
        parts = [part for part in parts if len(part)]
        if not parts:
            return cls.empty()
        width = max(part.max_length for part in parts)

        def pad(array, axis_width):
            widths = [(0, 0)] * array.ndim
            widths[1] = (0, axis_width - array.shape[1])
            return np.pad(array, widths)

        return cls(np.concatenate([part.lengths for part in parts]),
                   np.concatenate([pad(part.points, width) for part in parts]),
                   np.concatenate([pad(part.fingerprints, width) for part in parts]),
                   np.concatenate([part.labels for part in parts]),
                   np.concatenate([part.seeds for part in parts]),
                   np.concatenate([part.indices for part in parts]))


def sampleTissues(seeds, ranges: TissueRanges) -> np.ndarray:
    """One uniform draw per parameter and seed, in the order kmw, m0m, t2m, t1w; (M, 4)."""
    bounds = ranges.bounds
    uniforms = Xoshiro256StarStar(seeds).random(4)
    return bounds[:, 0] + (bounds[:, 1] - bounds[:, 0]) * uniforms


def sampleTissue(seed: int, ranges: TissueRanges | None = None) -> TissueParams:
    """Random tissue, deterministic given seed."""
    return TissueParams.fromArray(sampleTissues(seed, ranges or TissueRanges())[0])


def _noiseLanes(seeds, count: int, sigma: float) -> np.ndarray:
    return sigma * Xoshiro256StarStar(seeds).normal(count)


def addNoise(fingerprint, spec: NoiseSpec, seed: int) -> np.ndarray:
    """Fingerprint plus i.i.d. Gaussian noise of the spec's sigma; identity when sigma is 0."""
    fingerprint = np.asarray(fingerprint, dtype=np.float64)
    if spec.sigma == 0:
        return fingerprint.copy()
    return fingerprint + _noiseLanes(seed, fingerprint.shape[-1], spec.sigma)[0]


def _simulateFromSeeds(seeds: np.ndarray, indices: np.ndarray, config: DatasetConfig,
                       schedule: Schedule | None = None) -> tuple[Dataset, np.ndarray]:
    if schedule is None:
        lengths, points = sampleSchedules(seeds[:, 0], config.schedule_ranges)
    else:
        lengths = np.full(seeds.shape[0], len(schedule), dtype=np.int64)
        points = np.broadcast_to(schedule.points, (seeds.shape[0], *schedule.points.shape))
    labels = sampleTissues(seeds[:, 1], config.tissue_ranges)

    tissue = TissueParams(*(labels[:, i, None] for i in range(4)))
    scan = ScanPoint(*(points[..., i] for i in range(4)))
    clean = transientSignal(tissue, config.consts, scan)

    noisy = clean
    if config.noise.sigma > 0:
        noisy = clean + _noiseLanes(seeds[:, 2], points.shape[1], config.noise.sigma)

    mask = np.arange(points.shape[1]) < lengths[:, None]
    dataset = Dataset(lengths.astype(np.int64), np.where(mask[..., None], points, 0.0), np.where(mask, noisy, 0.0),
                      labels, seeds.astype(np.uint64), np.asarray(indices, dtype=np.int64))
    return dataset, np.where(mask, clean, 0.0)


def simulateRecords(indices, config: DatasetConfig, schedule: Schedule | None = None,
                    return_clean: bool = False):
    """
    Records for the given indices, vectorized over the indices.

    :param indices: Record indices, should be an Iterable[int] | ndarray
    :param config: Generation settings, should be a DatasetConfig
    :param schedule: Fixed schedule for every record instead of sampled ones, should be a Schedule | None
    :param return_clean: Whether noiseless fingerprints are returned too, should be a bool
    :return: dataset - Dataset, or (Dataset, ndarray) with return_clean
    """
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    if indices.size == 0:
        return (Dataset.empty(), np.zeros((0, 0))) if return_clean else Dataset.empty()
    dataset, clean = _simulateFromSeeds(deriveSeeds(config.seed, indices, 3), indices, config, schedule)
    return (dataset, clean) if return_clean else dataset


def generateSamples(config: DatasetConfig, schedule: Schedule | None = None, n_samples: int | None = None,
                    offset: int = 0) -> Dataset:
    """In-memory dataset of records offset .. offset + n_samples, built block by block."""
    n_samples = config.n_samples if n_samples is None else n_samples
    parts = [simulateRecords(np.arange(start, min(start + config.block_size, offset + n_samples)), config, schedule)
             for start in range(offset, offset + n_samples, config.block_size)]
    return Dataset.concatenate(parts)


def regenerateSample(seeds, config: DatasetConfig, schedule: Schedule | None = None) -> Sample:
    """Rebuild a record from its stored (schedule, tissue, noise) seeds."""
    seeds = np.asarray(seeds, dtype=np.uint64).reshape(1, 3)
    dataset, clean = _simulateFromSeeds(seeds, np.zeros(1, np.int64), config, schedule)
    sample = dataset.sample(0)
    sample.clean = clean[0, :len(sample.schedule)]
    return sample


def _packRecords(dataset: Dataset) -> bytes:
    buffer = io.BytesIO()
    for i in range(len(dataset)):
        n = int(dataset.lengths[i])
        buffer.write(RECORD_LENGTH.pack(n))
        buffer.write(dataset.points[i, :n].astype("<f4").tobytes())
        buffer.write(dataset.fingerprints[i, :n].astype("<f4").tobytes())
        buffer.write(dataset.labels[i].astype("<f4").tobytes())
        buffer.write(dataset.seeds[i].astype("<u8").tobytes())
    return buffer.getvalue()


def _generateBlock(task: tuple[int, int, DatasetConfig]) -> bytes:
    start, stop, config = task
    return _packRecords(simulateRecords(np.arange(start, stop), config))


def _packHeader(config: DatasetConfig) -> bytes:
    snr_db = config.noise.snr_db
    return HEADER.pack(MAGIC, FORMAT_VERSION, config.n_samples, *config.schedule_ranges.bounds.ravel(),
                       config.schedule_ranges.n_min, config.schedule_ranges.n_max,
                       *config.tissue_ranges.bounds.ravel(), snr_db, config.digest())


def generateDataset(config: DatasetConfig, out_path: str, workers: int = 0, deterministic: bool = False) -> dict:
    """
    Stream n_samples records into an OTOMDS1 file with a JSON manifest sidecar
    '<out_path>.manifest.json'. Blocks are generated in parallel and written
    in record order.

    :param config: Generation settings, should be a DatasetConfig
    :param out_path: Dataset file path, should be a str
    :param workers: Worker processes, 0 for automatic, should be an int
    :param deterministic: Whether a single worker is forced, should be a bool
    :return: manifest - dict
    """
    workers = resolveWorkers(workers, deterministic)
    tasks = [(start, min(start + config.block_size, config.n_samples), config)
             for start in range(0, config.n_samples, config.block_size)]
    _logger.info(f"Generating {config.n_samples} samples in {len(tasks)} block(s) with {workers} worker(s)")

    started = time.perf_counter()
    with AtomicWriter(out_path, "wb") as file:
        file.write(_packHeader(config))
        if workers == 1 or len(tasks) <= 1:
            for task in tasks:
                file.write(_generateBlock(task))
        else:
            with Pool(min(workers, len(tasks))) as pool:
                for block in pool.imap(_generateBlock, tasks):
                    file.write(block)

    manifest = {**config.manifest(), "digest": config.digest().hex()}
    save(out_path + MANIFEST_SUFFIX, manifest)
    _logger.info(f"Dataset written to '{out_path}' in {time.perf_counter() - started:.1f} s")
    return manifest


def _read(file, size: int, what: str) -> bytes:
    data = file.read(size)
    if len(data) != size:
        raise DatasetFormatError(f"Dataset file is truncated while reading {what}")
    return data


class DatasetReader:
    """
    Sequential reader of an OTOMDS1 file. Each iteration opens its own file
    handle, so several scans of one reader may run concurrently.
    """

    def __init__(self, path: str):
        self.path = path
        with open(path, "rb") as file:
            header = file.read(HEADER.size)
        if len(header) < len(MAGIC) or header[:len(MAGIC)] != MAGIC:
            raise DatasetFormatError(f"'{path}' is not an {MAGIC.decode('ascii')} dataset file")
        if len(header) != HEADER.size:
            raise DatasetFormatError(f"Dataset file '{path}' has a truncated header")

        values = HEADER.unpack(header)
        self.version = values[1]
        if self.version != FORMAT_VERSION:
            raise DatasetFormatError(f"Unsupported dataset format version {self.version}")
        self.n_samples = values[2]
        schedule_bounds = np.array(values[3:11]).reshape(4, 2)
        self.schedule_ranges = ScheduleRanges(*(tuple(row) for row in schedule_bounds), n_min=values[11],
                                              n_max=values[12])
        self.tissue_ranges = TissueRanges(*(tuple(row) for row in np.array(values[13:21]).reshape(4, 2)))
        self.noise = NoiseSpec(values[21])
        self.digest = values[22]

    def __len__(self) -> int:
        return self.n_samples

    @property
    def normalization(self) -> NormalizationSpec:
        return NormalizationSpec(self.schedule_ranges, self.tissue_ranges)

    def _records(self):
        with open(self.path, "rb") as file:
            file.seek(HEADER.size)
            for index in range(self.n_samples):
                n, = RECORD_LENGTH.unpack(_read(file, RECORD_LENGTH.size, f"record {index}"))
                points = np.frombuffer(_read(file, 16 * n, f"record {index}"), "<f4").reshape(n, 4)
                fingerprint = np.frombuffer(_read(file, 4 * n, f"record {index}"), "<f4")
                label = np.frombuffer(_read(file, 16, f"record {index}"), "<f4")
                seeds = np.frombuffer(_read(file, 24, f"record {index}"), "<u8")
                yield index, points, fingerprint, label, seeds
            if file.read(1):
                raise DatasetFormatError(f"Dataset file '{self.path}' has trailing bytes after "
                                         f"{self.n_samples} records")

    def __iter__(self):
        for index, points, fingerprint, label, seeds in self._records():
            yield Sample(Schedule(points.astype(np.float64), name=f"record-{index}"), fingerprint.astype(np.float64),
                         TissueParams.fromArray(label.astype(np.float64)), tuple(int(seed) for seed in seeds))

    def readAll(self) -> Dataset:
        """Every record as one padded in-memory Dataset (float64)."""
        records = list(self._records())
        if not records:
            return Dataset.empty()
        width = max(points.shape[0] for _, points, _, _, _ in records)
        count = len(records)
        dataset = Dataset(np.zeros(count, np.int64), np.zeros((count, width, 4)), np.zeros((count, width)),
                          np.zeros((count, 4)), np.zeros((count, 3), np.uint64), np.arange(count, dtype=np.int64))
        for position, (_, points, fingerprint, label, seeds) in enumerate(records):
            n = points.shape[0]
            dataset.lengths[position] = n
            dataset.points[position, :n] = points
            dataset.fingerprints[position, :n] = fingerprint
            dataset.labels[position] = label
            dataset.seeds[position] = seeds
        return dataset


def readDataset(path: str) -> Dataset:
    """Read a whole dataset file into memory."""
    dataset = DatasetReader(path).readAll()
    _logger.info(f"Read {len(dataset)} samples from '{path}'")
    return dataset


def readManifest(path: str, verify: bool = True) -> dict:
    """Load the manifest sidecar of a dataset and check its digest against the file header."""
    with open(path + MANIFEST_SUFFIX, "r", encoding="utf-8") as file:
        manifest = json.load(file)
    if verify:
        reader = DatasetReader(path)
        if manifest.get("digest") != reader.digest.hex():
            raise DatasetFormatError(f"Manifest digest does not match dataset header of '{path}'")
    return manifest


def exportDatasetCsv(path: str, out_path: str, limit: int | None = None) -> int:
    """
    Flatten a dataset into one CSV row per dynamic scan for inspection.

    :return: records - int
    """
    count = 0
    lines = ["record,point,b1_uT,omega_ppm,ts_s,td_s,signal,kmw_Hz,m0m,t2m_s,t1w_s"]
    for count, sample in enumerate(DatasetReader(path), start=1):
        label = ",".join(f"{value:.9g}" for value in sample.label.toArray())
        for point, (scan, signal) in enumerate(zip(sample.schedule.points, sample.fingerprint)):
            lines.append(f"{count - 1},{point}," + ",".join(f"{value:.9g}" for value in scan) + f",{signal:.9g},{label}")
        if limit is not None and count >= limit:
            break
    with AtomicWriter(out_path, "wb") as file:
        file.write(("\n".join(lines) + "\n").encode("utf-8"))
    return count


def validationMask(indices, salt: int = SPLIT_SALT) -> np.ndarray:
    """True for records in the validation split: splitmix64(i ^ salt) % 10 == 0."""
    state = np.atleast_1d(np.asarray(indices, dtype=np.uint64)) ^ np.uint64(salt)
    _, output = splitMix64(state)
    return output % np.uint64(VALIDATION_MODULUS) == 0


def splitIndices(indices, salt: int = SPLIT_SALT) -> tuple[np.ndarray, np.ndarray]:
    """Positions of the training and validation records (about 90/10)."""
    mask = validationMask(indices, salt)
    return np.flatnonzero(~mask), np.flatnonzero(mask)


def empiricalSnrDb(noisy, clean, reference: float = 1.0) -> float:
    """20 log10(reference / std(noisy - clean)) over every value."""
    residual = np.asarray(noisy, dtype=np.float64) - np.asarray(clean, dtype=np.float64)
    return float(20.0 * np.log10(reference / np.std(residual)))
