"""
MRF schedules: ordered (b1, omega, ts, td) dynamic scans, random sampling for
training and CSV fixtures for evaluation.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, asdict
from os import path as os_path

import numpy as np

from .bloch import ScanPoint
from ..utils.exceptions import DomainError, ScheduleParseError
from ..utils.file import AtomicWriter
from ..utils.rng import Xoshiro256StarStar

_logger = logging.getLogger(__name__)

__all__ = ["SCAN_FIELDS", "CSV_HEADER", "MAX_LENGTH", "FIXTURE_LENGTHS", "FIXTURES_DIR", "ScheduleRanges",
           "Schedule", "sampleSchedule", "sampleSchedules", "loadSchedule", "saveSchedule", "truncateSchedule",
           "checkScheduleRanges", "loadFixtureSchedule", "listFixtureSchedules"]

SCAN_FIELDS = ("b1", "omega", "ts", "td")
CSV_HEADER = ("index", "b1_uT", "omega_ppm", "ts_s", "td_s")
MAX_LENGTH = 4096
FIXTURE_LENGTHS = (10, 20, 30, 40)
FIXTURES_DIR = os_path.join(os_path.dirname(os_path.dirname(os_path.abspath(__file__))), "fixtures")


def _checkRange(name: str, bounds) -> tuple[float, float]:
    if len(bounds) != 2:
        raise DomainError(f"Range '{name}' needs [min, max], got: {bounds}")
    low, high = float(bounds[0]), float(bounds[1])
    if not (math.isfinite(low) and math.isfinite(high)) or low > high:
        raise DomainError(f"Inverted or non-finite range '{name}', got: [{low}, {high}]")
    return low, high


@dataclass(frozen=True)
class ScheduleRanges:
    b1: tuple[float, float] = (0.5, 2.0)
    omega: tuple[float, float] = (8.0, 50.0)
    ts: tuple[float, float] = (0.4, 2.0)
    td: tuple[float, float] = (3.5, 5.0)
    n_min: int = 10
    n_max: int = 40

    def __post_init__(self):
        for name in SCAN_FIELDS:
            object.__setattr__(self, name, _checkRange(name, getattr(self, name)))
        if self.b1[0] < 0 or self.ts[0] < 0 or self.td[0] < 0:
            raise DomainError("Ranges of b1, ts and td must be non-negative")
        if not 1 <= self.n_min <= self.n_max <= MAX_LENGTH:
            raise DomainError(f"Schedule lengths need 1 <= n_min <= n_max <= {MAX_LENGTH}, "
                              f"got: [{self.n_min}, {self.n_max}]")

    @property
    def bounds(self) -> np.ndarray:
        """(4, 2) array of [min, max] per scan channel."""
        return np.array([getattr(self, name) for name in SCAN_FIELDS], dtype=np.float64)

    @classmethod
    def fromConfig(cls, section: dict) -> ScheduleRanges:
        return cls(**{key: tuple(value) if isinstance(value, list) else value for key, value in section.items()})

    def toJson(self) -> dict:
        data = asdict(self)
        return {key: list(value) if isinstance(value, tuple) else value for key, value in data.items()}


class Schedule:
    """Ordered dynamic scans held as an (N, 4) float64 array of (b1, omega, ts, td)."""

    def __init__(self, points, name: str = ""):
        points = np.array(points, dtype=np.float64, ndmin=2)
        if points.size == 0:
            raise DomainError("Schedule must contain at least one scan")
        if points.ndim != 2 or points.shape[1] != 4:
            raise DomainError(f"Schedule points must have shape (N, 4), got {points.shape}")
        if points.shape[0] > MAX_LENGTH:
            raise DomainError(f"Schedule length {points.shape[0]} exceeds {MAX_LENGTH}")
        points.setflags(write=False)
        self.points = points
        self.name = name

    def __len__(self) -> int:
        return self.points.shape[0]

    def __getitem__(self, index: int) -> ScanPoint:
        return ScanPoint.fromArray(self.points[index])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Schedule):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def __repr__(self) -> str:
        return f"Schedule(name='{self.name}', n={len(self)})"

    @property
    def b1(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def omega(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def ts(self) -> np.ndarray:
        return self.points[:, 2]

    @property
    def td(self) -> np.ndarray:
        return self.points[:, 3]

    def toJson(self) -> dict:
        return {"name": self.name, "points": self.points.tolist()}

    @classmethod
    def fromJson(cls, data: dict) -> Schedule:
        return cls(data["points"], name=data.get("name", ""))


def sampleSchedules(seeds, ranges: ScheduleRanges) -> tuple[np.ndarray, np.ndarray]:
    """
    Sample one schedule per seed, vectorized over seeds.

    Each stream draws 1 + 4 n_max uniforms: the first picks N uniformly in
    [n_min, n_max], the rest fill (b1, omega, ts, td) point by point, so the
    first k points never depend on N.

    :param seeds: Schedule seeds, should be an int | Iterable[int] | uint64 ndarray
    :param ranges: Sampling ranges, should be a ScheduleRanges
    :return: lengths, points - tuple[ndarray (M,), ndarray (M, n_max, 4)]
    """
    generator = Xoshiro256StarStar(seeds)
    lengths = generator.integers(ranges.n_min, ranges.n_max)

    bounds = ranges.bounds
    points = generator.random(4 * ranges.n_max).reshape(-1, ranges.n_max, 4)
    points = bounds[:, 0] + (bounds[:, 1] - bounds[:, 0]) * points
    return lengths, points


def sampleSchedule(seed: int, ranges: ScheduleRanges | None = None, name: str = "") -> Schedule:
    """Random schedule, deterministic given seed."""
    ranges = ranges or ScheduleRanges()
    lengths, points = sampleSchedules(seed, ranges)
    return Schedule(points[0, :lengths[0]], name=name or f"random-{seed}")


def truncateSchedule(schedule: Schedule, n: int) -> Schedule:
    """First n scans of a schedule."""
    if not 1 <= n <= len(schedule):
        raise DomainError(f"Truncation length must be in [1, {len(schedule)}], got: {n}")
    return Schedule(schedule.points[:n], name=schedule.name)


def checkScheduleRanges(schedule: Schedule, ranges: ScheduleRanges) -> bool:
    """Warn about scans outside the sampling ranges; returns True when all are inside."""
    bounds = ranges.bounds
    outside = (schedule.points < bounds[:, 0]) | (schedule.points > bounds[:, 1])
    if not outside.any():
        return True
    for column, name in enumerate(SCAN_FIELDS):
        count = int(outside[:, column].sum())
        if count:
            _logger.warning(f"Schedule '{schedule.name}': {count} scan(s) have {name} outside "
                            f"{tuple(bounds[column])}")
    return False


def _parseRow(row: list[str], line_number: int, expected_index: int) -> list[float]:
    if len(row) != len(CSV_HEADER):
        raise ScheduleParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", line_number)
    try:
        index = int(row[0])
    except ValueError:
        raise ScheduleParseError(f"field 'index' is not an integer: '{row[0]}'", line_number)
    if index != expected_index:
        raise ScheduleParseError(f"field 'index' should be {expected_index}, got {index}", line_number)

    values = []
    for header, text in zip(CSV_HEADER[1:], row[1:]):
        try:
            value = float(text)
        except ValueError:
            raise ScheduleParseError(f"field '{header}' is not a number: '{text}'", line_number)
        if not math.isfinite(value):
            raise ScheduleParseError(f"field '{header}' is not finite: '{text}'", line_number)
        if value < 0 and header != "omega_ppm":
            raise ScheduleParseError(f"field '{header}' must be non-negative, got {value}", line_number)
        values.append(value)
    return values


def loadSchedule(path: str, ranges: ScheduleRanges | None = None) -> Schedule:
    """
    Load a schedule CSV (header 'index,b1_uT,omega_ppm,ts_s,td_s').

    :param path: CSV file path, should be a str
    :param ranges: Ranges to warn against, defaults to the sampling ranges, should be a ScheduleRanges
    :return: schedule - Schedule
    """
    with open(path, "r", encoding="utf-8", newline="") as file:
        rows = list(csv.reader(file))

    rows = [(line_number, row) for line_number, row in enumerate(rows, start=1) if row]
    if not rows:
        raise ScheduleParseError("missing header", 1)
    line_number, header = rows[0]
    if tuple(field.strip() for field in header) != CSV_HEADER:
        raise ScheduleParseError(f"expected header '{','.join(CSV_HEADER)}'", line_number)
    if len(rows) == 1:
        raise DomainError(f"Schedule file '{path}' has no scans")

    points = [_parseRow([field.strip() for field in row], line_number, i)
              for i, (line_number, row) in enumerate(rows[1:])]
    name = os_path.splitext(os_path.basename(path))[0]
    schedule = Schedule(points, name=name)
    checkScheduleRanges(schedule, ranges or ScheduleRanges())
    _logger.debug(f"Loaded schedule '{name}' with {len(schedule)} scans")
    return schedule


def saveSchedule(schedule: Schedule, path: str):
    """Write a schedule CSV with 17 significant digits and LF line endings."""
    buffer = io.StringIO(newline="")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for index, point in enumerate(schedule.points):
        writer.writerow([index, *(f"{value:.17g}" for value in point)])
    with AtomicWriter(path, "wb") as file:
        file.write(buffer.getvalue().encode("utf-8"))
    _logger.debug(f"Saved schedule '{schedule.name}' to '{path}'")


def listFixtureSchedules() -> dict[str, str]:
    """Bundled pseudo-random evaluation schedules, name -> path."""
    return {f"pr{n}": os_path.join(FIXTURES_DIR, f"pr{n}.csv") for n in FIXTURE_LENGTHS}


def loadFixtureSchedule(n: int) -> Schedule:
    """Bundled PR schedule with n dynamic scans (10, 20, 30 or 40)."""
    if n not in FIXTURE_LENGTHS:
        raise DomainError(f"No fixture schedule with {n} scans, expected one of {FIXTURE_LENGTHS}")
    return loadSchedule(listFixtureSchedules()[f"pr{n}"])
