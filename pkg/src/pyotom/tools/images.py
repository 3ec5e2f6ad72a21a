"""
8-bit grayscale export of parameter and difference maps as binary PGM (P5).
The display window is written both as a header comment and into a
'<image>.window.json' sidecar.
"""
from __future__ import annotations

import logging
import math
import re

import numpy as np

from .phantom import REPORT_UNITS, EvalReport
from ..utils.exceptions import DomainError
from ..utils.file import AtomicWriter, save

_logger = logging.getLogger(__name__)

__all__ = ["WINDOW_SUFFIX", "windowMap", "writePgm", "readPgm", "exportMap"]

WINDOW_SUFFIX = ".window.json"
MAX_GRAY = 255
_HEADER = re.compile(rb"P5\n# window (\S+) (\S+)\n(\d+) (\d+)\n(\d+)\n")


def windowMap(values, window: tuple[float, float]) -> np.ndarray:
    """
    Linear mapping of [low, high] onto 0..255, clipped; NaN pixels and a
    zero-width window give 0.
    """
    low, high = float(window[0]), float(window[1])
    if not (math.isfinite(low) and math.isfinite(high)) or high < low:
        raise DomainError(f"Invalid display window [{low}, {high}]")
    values = np.asarray(values, dtype=np.float64)
    if high == low:
        return np.zeros(values.shape, dtype=np.uint8)
    scaled = np.clip((values - low) / (high - low), 0.0, 1.0) * MAX_GRAY
    return np.rint(np.nan_to_num(scaled, nan=0.0)).astype(np.uint8)


def writePgm(path: str, gray: np.ndarray, window: tuple[float, float]):
    gray = np.asarray(gray, dtype=np.uint8)
    if gray.ndim != 2:
        raise DomainError(f"Images must be 2-D, got shape {gray.shape}")
    header = f"P5\n# window {float(window[0])!r} {float(window[1])!r}\n{gray.shape[1]} {gray.shape[0]}\n{MAX_GRAY}\n"
    with AtomicWriter(path, "wb") as file:
        file.write(header.encode("ascii"))
        file.write(np.ascontiguousarray(gray).tobytes())


def readPgm(path: str) -> tuple[np.ndarray, tuple[float, float]]:
    """Read a PGM written by writePgm: (gray, window)."""
    with open(path, "rb") as file:
        data = file.read()
    match = _HEADER.match(data)
    if match is None:
        raise DomainError(f"'{path}' is not a windowed PGM image")
    width, height = int(match.group(3)), int(match.group(4))
    gray = np.frombuffer(data, np.uint8, width * height, match.end()).reshape(height, width)
    return gray, (float(match.group(1)), float(match.group(2)))


def exportMap(source, name: str, out_path: str, window: tuple[float, float] | None = None) -> tuple[float, float]:
    """
    Render one map of a report (or a bare 2-D array) as a grayscale image.

    :param source: Report holding the map, or the map itself, should be an EvalReport | ndarray
    :param name: Map name such as 'kmw', 't1w_truth' or 'm0m_diff', should be a str
    :param out_path: Image path, should be a str
    :param window: Display range in the map's units, None for its min/max, should be a tuple | None
    :return: window - tuple[float, float]
    """
    values = source.map(name) if isinstance(source, EvalReport) else np.asarray(source, dtype=np.float64)
    if window is None:
        finite = values[np.isfinite(values)]
        window = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 0.0)
    window = (float(window[0]), float(window[1]))

    writePgm(out_path, windowMap(values, window), window)
    param = name.partition("_")[0]
    sidecar = {"map": name, "window": list(window), "width": values.shape[1], "height": values.shape[0],
               "units": REPORT_UNITS[param][0] if param in REPORT_UNITS else ""}
    save(out_path + WINDOW_SUFFIX, sidecar)
    _logger.info(f"Exported map '{name}' to '{out_path}' with window [{window[0]:.6g}, {window[1]:.6g}]")
    return window
