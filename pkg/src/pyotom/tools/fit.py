"""
Bloch-fitting baseline: bounded nonlinear least squares of the four tissue
parameters against a fingerprint, by projected Levenberg-Marquardt in the
[0, 1]-normalized parameter space with multi-start.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from multiprocessing import Pool

import numpy as np
from scipy.stats import qmc

from .bloch import PoolConstants, TissueParams, simulateFingerprint
from .dataset import TissueRanges
from ..utils.exceptions import DomainError
from ..utils.rng import deriveSeeds
from ..utils.utils import resolveWorkers

_logger = logging.getLogger(__name__)

__all__ = ["MIN_SCANS", "FitConfig", "FitResult", "residual", "fitBloch", "fitVoxels"]

MIN_SCANS = 4
START_BLOCK = 10
MAX_DAMPING = 1e12
MIN_DAMPING = 1e-12
COST_FLOOR = 1e-30


@dataclass(frozen=True)
class FitConfig:
    bounds: TissueRanges = field(default_factory=TissueRanges)
    n_starts: int = 10
    max_iterations: int = 200
    cost_tolerance: float = 1e-12
    step_tolerance: float = 1e-10
    jacobian_step: float = 1e-6
    seed: int = 0
    consts: PoolConstants = field(default_factory=PoolConstants)

    def __post_init__(self):
        if self.n_starts < 1 or self.max_iterations < 1:
            raise DomainError(f"Fit needs at least one start and one iteration, got n_starts={self.n_starts}, "
                              f"max_iterations={self.max_iterations}")
        if not 0 < self.jacobian_step < 0.5:
            raise DomainError(f"Jacobian step must be in (0, 0.5), got: {self.jacobian_step}")

    @classmethod
    def fromConfig(cls, config, **overrides) -> FitConfig:
        """Build from the [fit], [tissue] and [bloch] sections."""
        known = {item.name for item in fields(cls)} - {"bounds", "consts"}
        kwargs = {key: value for key, value in config["fit"].items() if key in known}
        kwargs["bounds"] = TissueRanges.fromConfig(config["tissue"])
        kwargs["consts"] = PoolConstants.fromConfig(config["bloch"])
        kwargs.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**kwargs)


@dataclass
class FitResult:
    params: TissueParams
    residual_rms: float
    iterations: int
    converged: bool
    start_index: int
    cost: float = 0.0
    start_costs: list[float] = field(default_factory=list)

    def toJson(self) -> dict:
        return {"params": self.params.toJson(), "residual_rms": self.residual_rms, "iterations": self.iterations,
                "converged": self.converged, "start_index": self.start_index, "cost": self.cost,
                "start_costs": self.start_costs}


def _points(fingerprint, schedule) -> tuple[np.ndarray, np.ndarray]:
    fingerprint = np.asarray(fingerprint, dtype=np.float64)
    points = np.asarray(getattr(schedule, "points", schedule), dtype=np.float64)
    if fingerprint.ndim != 1 or fingerprint.shape[0] != points.shape[0]:
        raise DomainError(f"Fingerprint length {fingerprint.shape} does not match schedule length {points.shape[0]}")
    return fingerprint, points


def residual(params: TissueParams, fingerprint, schedule, consts: PoolConstants | None = None) -> np.ndarray:
    """simulate(params) - fingerprint, one entry per scan."""
    fingerprint, points = _points(fingerprint, schedule)
    return simulateFingerprint(params, consts or PoolConstants(), points) - fingerprint


class _Problem:
    """Residuals in normalized parameter space z in [0, 1]^4."""

    def __init__(self, fingerprint: np.ndarray, points: np.ndarray, config: FitConfig):
        self.fingerprint = fingerprint
        self.points = points
        self.config = config
        self.low = config.bounds.bounds[:, 0]
        self.span = config.bounds.bounds[:, 1] - config.bounds.bounds[:, 0]

    def physical(self, z: np.ndarray) -> np.ndarray:
        return self.low + self.span * z

    def residuals(self, z: np.ndarray) -> np.ndarray:
        """(K, 4) parameter rows -> (K, N) residual rows."""
        params = self.physical(np.atleast_2d(z))
        tissue = TissueParams(*(params[:, i] for i in range(4)))
        return simulateFingerprint(tissue, self.config.consts, self.points) - self.fingerprint

    def residualAndJacobian(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Forward differences (backward at the upper bound) in one vectorized simulation."""
        h = self.config.jacobian_step
        steps = np.where(z + h > 1.0, -h, h)
        rows = np.vstack([z, z + np.diag(steps)])
        values = self.residuals(rows)
        return values[0], ((values[1:] - values[0]) / steps[:, None]).T


def _cost(r: np.ndarray) -> float:
    return float(np.mean(r ** 2))


def _levenbergMarquardt(problem: _Problem, z: np.ndarray) -> tuple[np.ndarray, float, int, bool]:
    """
    Damped Gauss-Newton with diagonal Marquardt scaling and projection onto
    the box. Cost is the mean squared residual.

    :return: z, cost, iterations, converged
    """
    config = problem.config
    r, jacobian = problem.residualAndJacobian(z)
    cost = _cost(r)
    initial_cost = cost
    damping = 1e-3
    iterations = 0
    converged = cost <= COST_FLOOR

    while iterations < config.max_iterations and not converged:
        iterations += 1
        normal = jacobian.T @ jacobian
        gradient = jacobian.T @ r
        scale = np.maximum(np.diag(normal), 1e-10)

        improved = False
        while damping <= MAX_DAMPING:
            try:
                step = np.linalg.solve(normal + damping * np.diag(scale), -gradient)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            z_new = np.clip(z + step, 0.0, 1.0)
            r_new = problem.residuals(z_new)[0]
            cost_new = _cost(r_new)
            if cost_new < cost:
                improved = True
                break
            damping *= 10.0

        if not improved:
            converged = cost < initial_cost
            break

        moved = float(np.linalg.norm(z_new - z))
        decrease = cost - cost_new
        z, cost = z_new, cost_new
        damping = max(damping / 10.0, MIN_DAMPING)
        if cost <= COST_FLOOR or moved <= config.step_tolerance * (np.linalg.norm(z) + config.step_tolerance) \
                or decrease <= config.cost_tolerance * cost:
            converged = True
            break
        r, jacobian = problem.residualAndJacobian(z)

    return z, cost, iterations, converged


def _startPoints(config: FitConfig) -> np.ndarray:
    """
    Latin-hypercube starts in [0, 1]^4, drawn in blocks of START_BLOCK from one
    seeded generator so that more starts extend the list of fewer starts.
    """
    rng = np.random.default_rng(config.seed)
    blocks = [qmc.LatinHypercube(d=4, seed=rng).random(START_BLOCK)
              for _ in range(math.ceil(config.n_starts / START_BLOCK))]
    return np.vstack(blocks)[:config.n_starts]


def fitBloch(fingerprint, schedule, config: FitConfig | None = None) -> FitResult:
    """
    Multi-start projected Levenberg-Marquardt fit of (kmw, m0m, t2m, t1w).

    :param fingerprint: Measured fingerprint, should be an ndarray (N,)
    :param schedule: Its schedule, should be a Schedule | ndarray (N, 4)
    :param config: Bounds, starts and tolerances, should be a FitConfig
    :return: best result over the starts - FitResult
    """
    config = config or FitConfig()
    fingerprint, points = _points(fingerprint, schedule)
    if points.shape[0] < MIN_SCANS:
        raise DomainError(f"Fitting four parameters needs at least {MIN_SCANS} scans, got {points.shape[0]}")

    problem = _Problem(fingerprint, points, config)
    best = None
    start_costs = []
    progressed = False
    for index, start in enumerate(_startPoints(config)):
        z, cost, iterations, converged = _levenbergMarquardt(problem, start)
        start_costs.append(cost)
        progressed = progressed or converged or cost < _cost(problem.residuals(start)[0])
        _logger.debug(f"Start {index}: cost {cost:.3e} after {iterations} iteration(s), converged={converged}")
        if best is None or cost < best[1]:
            best = (z, cost, iterations, converged, index)

    z, cost, iterations, converged, index = best
    if not progressed:
        _logger.warning(f"Bloch fit improved on none of its {len(start_costs)} start(s); best cost {cost:.3e}")
    return FitResult(TissueParams.fromArray(problem.physical(z)), math.sqrt(cost), iterations, converged, index,
                     cost, start_costs)


def _fitTask(task) -> FitResult:
    fingerprint, points, config = task
    return fitBloch(fingerprint, points, config)


def fitVoxels(fingerprints, schedule, config: FitConfig | None = None, workers: int = 0,
              deterministic: bool = False) -> list[FitResult]:
    """
    Fit every row of an (M, N) fingerprint array; voxel i starts from its own
    seed derived from (config.seed, i).

    :return: results in voxel order - list[FitResult]
    """
    config = config or FitConfig()
    fingerprints = np.asarray(fingerprints, dtype=np.float64).reshape(-1, len(schedule))
    points = np.asarray(getattr(schedule, "points", schedule), dtype=np.float64)
    seeds = deriveSeeds(config.seed, np.arange(fingerprints.shape[0]), 1)[:, 0]
    tasks = [(fingerprint, points, replace(config, seed=int(seed))) for fingerprint, seed in zip(fingerprints, seeds)]

    workers = resolveWorkers(workers, deterministic)
    _logger.info(f"Fitting {len(tasks)} voxel(s) with {workers} worker(s)")
    if workers == 1 or len(tasks) <= 1:
        return [_fitTask(task) for task in tasks]
    with Pool(min(workers, len(tasks))) as pool:
        return list(pool.imap(_fitTask, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
