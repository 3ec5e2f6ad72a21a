"""
Two-pool (free water / semisolid) longitudinal magnetization transfer model.

The closed-form transient signal of one dynamic scan is

    S = [m0w (1 - exp(-td / t1w)) - mssW] exp(-lambda ts) + mssW

where mssW is the water fixed point of the coupled longitudinal system under
continuous saturation and lambda its slow eigenrate. Every function accepts
floats or broadcastable numpy arrays, so a whole block of records or a whole
phantom is evaluated in one call.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields, asdict
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from ..utils.exceptions import DomainError, NumericError, SingularityError, PrecisionError

_logger = logging.getLogger(__name__)

__all__ = ["PARAM_NAMES", "LINESHAPES", "TissueParams", "PoolConstants", "ScanPoint", "SaturationResponse",
           "rfAmplitude", "offsetRadPerSec", "lineshape", "superLorentzianFactor", "waterSaturationRate",
           "semisolidSaturationRate", "saturationRates", "steadyStateAndLambda", "transientSignal",
           "simulateFingerprint", "odeSignal"]

PARAM_NAMES = ("kmw", "m0m", "t2m", "t1w")
LINESHAPES = ("superLorentzian", "lorentzian", "gaussian")

HZ_PER_PPM_PER_TESLA = 42.5756
MAGIC_ANGLE = math.acos(1.0 / math.sqrt(3.0))
MAX_ODE_STEP = 1e-4

# Super-Lorentzian quadrature: Gauss-Legendre nodes per side of the magic angle,
# placed in log(|theta - magic angle|) and truncated where exp(-2 (x/u)^2) < e^-89
QUADRATURE_NODES = 128
_CUTOFF_RATIO = 20.0

# Memo table over x = |dw| t2, interpolated linearly in (log x, log G)
MEMO_KNOTS = 4096
MEMO_RANGE = (1e-4, 10.0)


@dataclass(frozen=True)
class TissueParams:
    """kmw (Hz), m0m (fraction of m0w), t2m (s), t1w (s). Fields may be arrays."""
    kmw: float | np.ndarray
    m0m: float | np.ndarray
    t2m: float | np.ndarray
    t1w: float | np.ndarray

    @classmethod
    def fromArray(cls, values) -> TissueParams:
        """Build from an array whose last axis is (kmw, m0m, t2m, t1w)."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != 4:
            raise DomainError(f"Tissue arrays need 4 channels in the last axis, got shape {values.shape}")
        if values.ndim == 1:
            return cls(*(float(value) for value in values))
        return cls(*(values[..., i] for i in range(4)))

    def toArray(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(*(np.asarray(getattr(self, name), dtype=np.float64)
                                              for name in PARAM_NAMES)), axis=-1)

    def kwm(self, consts: PoolConstants):
        """Reverse exchange rate from detailed balance."""
        return np.asarray(self.kmw, dtype=np.float64) * np.asarray(self.m0m, dtype=np.float64) / consts.m0w

    def toJson(self) -> dict:
        return {name: np.asarray(getattr(self, name)).tolist() for name in PARAM_NAMES}


@dataclass(frozen=True)
class PoolConstants:
    m0w: float = 1.0
    t2w: float = 0.04
    t1m: float = 1.0
    b0: float = 3.0
    gamma: float = 267.522
    lineshape: str = "superLorentzian"

    def __post_init__(self):
        for name in ("m0w", "t2w", "t1m", "b0", "gamma"):
            if not getattr(self, name) > 0:
                raise DomainError(f"Pool constant '{name}' must be positive, got: {getattr(self, name)}")
        if self.lineshape not in LINESHAPES:
            raise DomainError(f"Unknown lineshape '{self.lineshape}', expected one of {LINESHAPES}")

    @property
    def hz_per_ppm(self) -> float:
        return HZ_PER_PPM_PER_TESLA * self.b0

    @classmethod
    def fromConfig(cls, section: dict) -> PoolConstants:
        known = {field.name for field in fields(cls)}
        return cls(**{key: value for key, value in section.items() if key in known})

    def toJson(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScanPoint:
    """One dynamic scan: b1 (uT), omega (ppm), ts (s), td (s)."""
    b1: float | np.ndarray
    omega: float | np.ndarray
    ts: float | np.ndarray
    td: float | np.ndarray

    @classmethod
    def fromArray(cls, values) -> ScanPoint:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            return cls(*(float(value) for value in values))
        return cls(*(values[..., i] for i in range(4)))


@dataclass(frozen=True)
class SaturationResponse:
    rrf_w: float | np.ndarray
    rrf_m: float | np.ndarray
    mss_w: float | np.ndarray
    mss_m: float | np.ndarray
    lambda_: float | np.ndarray


def rfAmplitude(b1, consts: PoolConstants):
    """RF amplitude w1 = gamma b1 in rad/s."""
    b1 = np.asarray(b1, dtype=np.float64)
    if np.any(b1 < 0):
        raise DomainError(f"Saturation power b1 must be non-negative, got minimum {b1.min()}")
    return consts.gamma * b1


def offsetRadPerSec(omega, consts: PoolConstants):
    """Frequency offset in rad/s from ppm."""
    return 2.0 * np.pi * np.asarray(omega, dtype=np.float64) * consts.hz_per_ppm


@lru_cache(maxsize=1)
def _superLorentzianNodes() -> tuple[np.ndarray, np.ndarray]:
    return leggauss(QUADRATURE_NODES)


def _superLorentzianQuadrature(x: np.ndarray) -> np.ndarray:
    """G(x) for x > 0 by graded Gauss-Legendre quadrature on both sides of the magic angle."""
    nodes, weights = _superLorentzianNodes()
    x = x[..., None]
    total = np.zeros(x.shape[:-1])
    for side, span in ((-1.0, MAGIC_ANGLE), (1.0, np.pi / 2.0 - MAGIC_ANGLE)):
        lower = np.log(np.minimum(x / _CUTOFF_RATIO, span))
        upper = math.log(span)
        half = (upper - lower) / 2.0
        s = np.exp(half * nodes + (upper + lower) / 2.0)
        theta = MAGIC_ANGLE + side * s
        # 3 cos^2(theta) - 1 = -3 sin(theta + magic) sin(theta - magic), exact near the magic angle
        u = np.abs(3.0 * np.sin(theta + MAGIC_ANGLE) * np.sin(side * s))
        integrand = np.sin(theta) / u * np.exp(-2.0 * (x / u) ** 2) * s
        total += np.sum(half * weights * integrand, axis=-1)
    return math.sqrt(2.0 / math.pi) * total


@lru_cache(maxsize=1)
def _superLorentzianTable() -> tuple[np.ndarray, np.ndarray]:
    log_x = np.linspace(math.log(MEMO_RANGE[0]), math.log(MEMO_RANGE[1]), MEMO_KNOTS)
    log_g = np.log(_superLorentzianQuadrature(np.exp(log_x)))
    log_x.setflags(write=False)
    log_g.setflags(write=False)
    _logger.debug(f"Super-Lorentzian memo table built with {MEMO_KNOTS} knots over {MEMO_RANGE}")
    return log_x, log_g


def superLorentzianFactor(x, memo: bool = False) -> np.ndarray:
    """
    Dimensionless super-Lorentzian G(x) with g(dw, t2) = t2 G(|dw| t2).

    :param x: |dw| t2, should be positive, float | ndarray
    :param memo: Whether to interpolate the memo table inside its range, should be a bool
    :return: G - ndarray
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise SingularityError("Super-Lorentzian lineshape is singular at zero offset")

    if not memo:
        return _superLorentzianQuadrature(x)

    log_x, log_g = _superLorentzianTable()
    inside = (x >= MEMO_RANGE[0]) & (x <= MEMO_RANGE[1])
    out = np.empty(x.shape)
    out[inside] = np.exp(np.interp(np.log(x[inside]), log_x, log_g))
    if not np.all(inside):
        out[~inside] = _superLorentzianQuadrature(x[~inside])
    return out


def lineshape(kind: str, delta_omega, t2, memo: bool = False) -> np.ndarray:
    """
    Absorption lineshape g(dw) in seconds.

    :param kind: 'superLorentzian', 'lorentzian' or 'gaussian', should be a str
    :param delta_omega: Offset in rad/s, should be a float | ndarray
    :param t2: Transverse relaxation in s, should be a float | ndarray
    :param memo: Whether the super-Lorentzian uses the memo table, should be a bool
    :return: g - ndarray
    """
    t2 = np.asarray(t2, dtype=np.float64)
    if np.any(t2 <= 0):
        raise DomainError(f"Lineshape t2 must be positive, got minimum {t2.min()}")
    x = np.abs(np.asarray(delta_omega, dtype=np.float64)) * t2

    if kind == "lorentzian":
        return (t2 / np.pi) / (1.0 + x ** 2)
    if kind == "gaussian":
        return t2 / math.sqrt(2.0 * math.pi) * np.exp(-x ** 2 / 2.0)
    if kind == "superLorentzian":
        return t2 * superLorentzianFactor(x, memo=memo)
    raise DomainError(f"Unknown lineshape '{kind}', expected one of {LINESHAPES}")


def waterSaturationRate(w1, delta_omega, consts: PoolConstants):
    """Lorentzian direct water saturation w1^2 t2w / (1 + (dw t2w)^2)."""
    return w1 ** 2 * consts.t2w / (1.0 + (delta_omega * consts.t2w) ** 2)


def semisolidSaturationRate(w1, delta_omega, t2m, consts: PoolConstants, memo: bool = True):
    """Semisolid saturation pi w1^2 g(dw, t2m)."""
    return np.pi * w1 ** 2 * lineshape(consts.lineshape, delta_omega, t2m, memo=memo)


def saturationRates(tissue: TissueParams, consts: PoolConstants, scan: ScanPoint, memo: bool = True):
    """
    Continuous-wave saturation rates of both pools.

    :return: rrf_w, rrf_m - tuple[ndarray, ndarray]
    """
    w1 = rfAmplitude(scan.b1, consts)
    delta_omega = offsetRadPerSec(scan.omega, consts)
    rrf_w = waterSaturationRate(w1, delta_omega, consts)
    rrf_m = semisolidSaturationRate(w1, delta_omega, tissue.t2m, consts, memo=memo)
    return rrf_w, rrf_m


def _systemMatrix(tissue: TissueParams, consts: PoolConstants, rrf_w, rrf_m):
    """Entries of A and c for dM/dt = A M + c."""
    r1w = 1.0 / np.asarray(tissue.t1w, dtype=np.float64)
    r1m = 1.0 / consts.t1m
    kmw = np.asarray(tissue.kmw, dtype=np.float64)
    m0m = np.asarray(tissue.m0m, dtype=np.float64)
    kwm = tissue.kwm(consts)
    a = -(r1w + kwm + rrf_w)
    b = kmw
    c = kwm
    d = -(r1m + kmw + rrf_m)
    return (a, b, c, d), (r1w * consts.m0w, r1m * m0m)


def steadyStateAndLambda(tissue: TissueParams, consts: PoolConstants, scan: ScanPoint,
                         memo: bool = True) -> SaturationResponse:
    """
    Fixed point and slow eigenrate of the saturated coupled system.

    With m0m = 0 the water row decouples and exactly R1w m0w / (R1w + rrfW) and
    R1w + rrfW are used, so the result cannot depend on kmw or t2m.
    """
    rrf_w, rrf_m = saturationRates(tissue, consts, scan, memo=memo)
    (a, b, c, d), (c_w, c_m) = _systemMatrix(tissue, consts, rrf_w, rrf_m)

    det = a * d - b * c
    if np.any(~(det > 0)):
        raise NumericError("Saturated two-pool system matrix is singular")

    mss_w = -(d * c_w - b * c_m) / det
    mss_m = -(a * c_m - c * c_w) / det

    # slow rate = det / fast rate, avoiding cancellation in (-tr - sqrt(disc)) / 2
    trace = a + d
    fast = (-trace + np.sqrt((a - d) ** 2 + 4.0 * b * c)) / 2.0
    lambda_ = det / fast

    decoupled = np.asarray(tissue.m0m) == 0
    if np.any(decoupled):
        r1w = 1.0 / np.asarray(tissue.t1w, dtype=np.float64)
        mss_w = np.where(decoupled, r1w * consts.m0w / (r1w + rrf_w), mss_w)
        mss_m = np.where(decoupled, 0.0, mss_m)
        lambda_ = np.where(decoupled, r1w + rrf_w, lambda_)

    return SaturationResponse(rrf_w, rrf_m, mss_w, mss_m, lambda_)


def transientSignal(tissue: TissueParams, consts: PoolConstants, scan: ScanPoint,
                    response: SaturationResponse | None = None, memo: bool = True):
    """Closed-form normalized water signal at the end of one saturation block."""
    if response is None:
        response = steadyStateAndLambda(tissue, consts, scan, memo=memo)
    recovered = -consts.m0w * np.expm1(-np.asarray(scan.td) / np.asarray(tissue.t1w))
    return (recovered - response.mss_w) * np.exp(-response.lambda_ * np.asarray(scan.ts)) + response.mss_w


def _schedulePoints(schedule) -> np.ndarray:
    points = np.asarray(getattr(schedule, "points", schedule), dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 4:
        raise DomainError(f"Schedule points must have shape (N, 4), got {points.shape}")
    if points.shape[0] == 0:
        raise DomainError("Cannot simulate an empty schedule")
    return points


def simulateFingerprint(tissue: TissueParams, consts: PoolConstants, schedule, memo: bool = True) -> np.ndarray:
    """
    Noiseless fingerprint, one value per dynamic scan. Scans are independent:
    every Td recovery starts from zero water magnetization.

    :param tissue: Scalar tissue or tissue with (M,) arrays, should be a TissueParams
    :param consts: Pool constants, should be a PoolConstants
    :param schedule: Schedule or (N, 4) array of (b1, omega, ts, td)
    :param memo: Whether the super-Lorentzian uses the memo table, should be a bool
    :return: fingerprint - ndarray (N,) or (M, N)
    """
    points = _schedulePoints(schedule)
    scan = ScanPoint(*(points[:, i] for i in range(4)))
    if all(np.ndim(getattr(tissue, name)) == 0 for name in PARAM_NAMES):
        return transientSignal(tissue, consts, scan, memo=memo)
    tissue = TissueParams(*(np.asarray(getattr(tissue, name), dtype=np.float64)[..., None] for name in PARAM_NAMES))
    return transientSignal(tissue, consts, scan, memo=memo)


def odeSignal(tissue: TissueParams, consts: PoolConstants, scan: ScanPoint, dt: float = 1e-5,
              memo: bool = False):
    """
    Water magnetization after ts of saturation by RK4 integration of the full
    coupled longitudinal system. Inputs broadcast; each element takes
    ceil(max(ts) / dt) equal steps of ts / steps.

    The system is linear and autonomous, so one RK4 step is the affine map
    I + hB + (hB)^2/2 + (hB)^3/6 + (hB)^4/24 of the augmented matrix
    B = [[A, c], [0, 0]]; the steps are applied by repeated squaring.

    :param dt: Largest allowed step in s, should be a float <= 1e-4
    :return: Mzw(ts) - ndarray
    """
    if dt > MAX_ODE_STEP:
        raise PrecisionError(f"ODE step must be at most {MAX_ODE_STEP} s, got: {dt}")
    if dt <= 0:
        raise DomainError(f"ODE step must be positive, got: {dt}")

    rrf_w, rrf_m = saturationRates(tissue, consts, scan, memo=memo)
    (a, b, c, d), (c_w, c_m) = _systemMatrix(tissue, consts, rrf_w, rrf_m)
    ts = np.asarray(scan.ts, dtype=np.float64)
    td = np.asarray(scan.td, dtype=np.float64)
    a, b, c, d, c_w, c_m, ts, td, t1w, m0m = np.broadcast_arrays(
        a, b, c, d, c_w, c_m, ts, td, np.asarray(tissue.t1w, dtype=np.float64),
        np.asarray(tissue.m0m, dtype=np.float64))

    state = np.stack([-consts.m0w * np.expm1(-td / t1w), -m0m * np.expm1(-td / consts.t1m), np.ones(td.shape)],
                     axis=-1)
    if np.any(ts < 0):
        raise DomainError("Saturation time must be non-negative")
    t_max = float(np.max(ts)) if ts.size else 0.0
    if t_max == 0:
        return state[..., 0]

    steps = math.ceil(t_max / dt)
    h = (ts / steps)[..., None, None]
    zeros = np.zeros(a.shape)
    augmented = np.stack([np.stack([a, b, c_w], axis=-1),
                          np.stack([c, d, c_m], axis=-1),
                          np.stack([zeros, zeros, zeros], axis=-1)], axis=-2)
    hb = h * augmented
    identity = np.broadcast_to(np.eye(3), hb.shape)
    hb2 = hb @ hb
    hb3 = hb2 @ hb
    step = identity + hb + hb2 / 2.0 + hb3 / 6.0 + (hb3 @ hb) / 24.0
    propagator = np.linalg.matrix_power(step, steps)
    _logger.debug(f"RK4 integration with {steps} steps over up to {t_max} s")
    return (propagator @ state[..., None])[..., 0, 0]
