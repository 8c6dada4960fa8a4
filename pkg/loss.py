"""Cavity loss budget and per-mode photon-loss statistics for two distributed W8 photons."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
import pandas as pd

from models import CavityParams
from thirdq import PatternReport
from utils import InvalidInputError, ModelError, make_rng, spawn_seeds, substream

logger = logging.getLogger(__name__)

PARTIES = 8
MODES = 2 * PARTIES
CHUNK = 100_000
IDEAL_SUCCESS = 0.875
LOSS_KINDS = ('uniform', 'normal', 'interval')
SWEEP_COLUMNS = ['param', 'analytic_rate', 'mc_rate', 'mc_stderr', 'distance_from_uniformity', 'trials', 'seed',
                 'normalized_analytic', 'normalized_mc', 'mc_distance']


@dataclass(frozen=True)
class CavityBudget:
    kappa_internal: float
    kappa_coupling: float
    gamma_bath: float
    gamma_port: float
    loss_fraction: float
    success_fraction: float
    success_db: float


def cavity_budget(cavity: CavityParams):
    """Rates in MHz; success_db is the magnitude of 10*log10(success)."""
    if min(cavity.omega_c, cavity.g, cavity.q_internal, cavity.q_coupling) <= 0:
        raise InvalidInputError('cavity parameters must be positive')
    omega_mhz = cavity.omega_c * 1e3
    kappa_i = omega_mhz / cavity.q_internal
    kappa_c = omega_mhz / cavity.q_coupling
    gamma_bath = cavity.g * kappa_i / (cavity.g + kappa_i)
    gamma_port = cavity.g * kappa_c / (cavity.g + kappa_c)
    loss = gamma_bath / (gamma_bath + gamma_port)
    success = gamma_port / (gamma_bath + gamma_port)
    return CavityBudget(kappa_i, kappa_c, gamma_bath, gamma_port, loss, success, abs(10 * math.log10(success)))


@dataclass(frozen=True)
class LossModel:
    kind: str
    per_mode: np.ndarray
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        per_mode = np.asarray(self.per_mode, dtype=float)
        if per_mode.shape != (MODES,):
            raise InvalidInputError(f"loss model needs {MODES} per-mode probabilities, got shape {per_mode.shape}")
        if np.any(per_mode < 0) or np.any(per_mode > 1):
            raise InvalidInputError('per-mode loss probabilities must lie in [0, 1]')
        object.__setattr__(self, 'per_mode', per_mode)

    @classmethod
    def uniform(cls, p):
        return cls('uniform', np.full(MODES, float(p)), {'p': float(p)})

    @classmethod
    def normal_per_mode(cls, mean, sd=0.005, seed=0):
        """Normal per-mode losses; draws outside [0, 1] are resampled."""
        if sd < 0:
            raise InvalidInputError('sd must be non-negative')
        rng = make_rng(seed)
        values = rng.normal(mean, sd, MODES)
        for _ in range(1000):
            bad = (values < 0) | (values > 1)
            if not bad.any():
                break
            values[bad] = rng.normal(mean, sd, int(bad.sum()))
        else:
            raise InvalidInputError(f"cannot draw losses in [0, 1] around mean {mean}")
        return cls('normal', values, {'mean': float(mean), 'sd': float(sd)})

    @classmethod
    def interval_random(cls, lo, hi, seed=0):
        if not 0 <= lo <= hi <= 1:
            raise InvalidInputError(f"interval must satisfy 0 <= lo <= hi <= 1, got ({lo}, {hi})")
        values = make_rng(seed).uniform(lo, hi, MODES) if hi > lo else np.full(MODES, float(lo))
        return cls('interval', values, {'lo': float(lo), 'hi': float(hi)})

    @classmethod
    def from_per_mode(cls, values):
        return cls('per_mode', np.asarray(values, dtype=float))

    @property
    def photon0(self):
        return self.per_mode[:PARTIES]

    @property
    def photon1(self):
        return self.per_mode[PARTIES:]


def analytic_pattern_report(model: LossModel):
    """Exact ordered-pattern probabilities: mode choice 1/8 each, survival 1 - p per photon."""
    survive = np.outer(1 - model.photon0, 1 - model.photon1) / PARTIES ** 2
    patterns = {(i, j): float(survive[i, j]) for i in range(PARTIES) for j in range(PARTIES)}
    return PatternReport(photons=2, parties=PARTIES, patterns=patterns, lost=1.0 - float(survive.sum()))


def analytic_success_under_loss(model: LossModel):
    return analytic_pattern_report(model).success_mass


def distance_from_uniformity(report: PatternReport):
    """sum_i (q_i - 1/n)^2 over the n all-distinct patterns."""
    q = report.normalized()
    n = len(q)
    return float(sum((value - 1 / n) ** 2 for value in q.values()))


@dataclass(frozen=True)
class MonteCarloResult:
    report: PatternReport
    rate: float
    stderr: float
    trials: int
    seed: int
    counts: np.ndarray = field(compare=False, repr=False)


def _chunk_counts(per_mode, size, seed, chunk):
    rng = substream(seed, chunk)
    i = rng.integers(PARTIES, size=size)
    j = rng.integers(PARTIES, size=size)
    alive = (rng.random(size) >= per_mode[i]) & (rng.random(size) >= per_mode[PARTIES + j])
    return np.bincount(i[alive] * PARTIES + j[alive], minlength=PARTIES ** 2)


def monte_carlo_success(model: LossModel, trials, rng_seed, workers=None):
    """Sample photon modes and survivals; chunk c uses its own counter-based stream."""
    if trials < 1:
        raise InvalidInputError('trials must be positive')
    sizes = [min(CHUNK, trials - start) for start in range(0, trials, CHUNK)]
    jobs = [(model.per_mode, size, int(rng_seed), c) for c, size in enumerate(sizes)]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _chunk_counts(*job), jobs))
    else:
        parts = [_chunk_counts(*job) for job in jobs]
    counts = np.sum(parts, axis=0).reshape(PARTIES, PARTIES)

    patterns = {(i, j): counts[i, j] / trials for i in range(PARTIES) for j in range(PARTIES)}
    report = PatternReport(photons=2, parties=PARTIES, patterns=patterns,
                           lost=1.0 - counts.sum() / trials, trials=trials)
    rate = report.success_mass
    stderr = math.sqrt(rate * (1 - rate) / trials)
    logger.debug(f"Monte Carlo {model.kind}: rate {rate:.6f} +/- {stderr:.2g} over {trials} trials")
    return MonteCarloResult(report, rate, stderr, trials, int(rng_seed), counts)


def _model_for(kind, point, seed, sd):
    if kind == 'uniform':
        return LossModel.uniform(point), float(point)
    if kind == 'normal':
        return LossModel.normal_per_mode(point, sd, seed), float(point)
    lo, hi = point
    return LossModel.interval_random(lo, hi, seed), float(hi - lo)


def loss_sweep(kind, grid, trials, rng_seed, sd=0.005, workers=None):
    """One row per grid point: analytic and Monte Carlo success with distance from uniformity.

    ``grid`` holds loss probabilities for 'uniform'/'normal' and (lo, hi) pairs for 'interval'.
    """
    if kind not in LOSS_KINDS:
        raise InvalidInputError(f"unknown loss kind {kind!r}; expected one of {', '.join(LOSS_KINDS)}")
    grid = list(grid)
    if not grid:
        raise InvalidInputError('sweep grid is empty')
    seeds = spawn_seeds(rng_seed, 2 * len(grid))
    rows = []
    for index, point in enumerate(grid):
        model, param = _model_for(kind, point, seeds[2 * index], sd)
        exact = analytic_pattern_report(model)
        mc = monte_carlo_success(model, trials, seeds[2 * index + 1], workers)
        try:
            mc_distance = distance_from_uniformity(mc.report)
        except ModelError:
            mc_distance = float('nan')
        rows.append({
            'param': param,
            'analytic_rate': exact.success_mass,
            'mc_rate': mc.rate,
            'mc_stderr': mc.stderr,
            'distance_from_uniformity': distance_from_uniformity(exact) if exact.success_mass > 0 else float('nan'),
            'trials': trials,
            'seed': mc.seed,
            'normalized_analytic': exact.success_mass / IDEAL_SUCCESS,
            'normalized_mc': mc.rate / IDEAL_SUCCESS,
            'mc_distance': mc_distance,
        })
        logger.info(f"Sweep {kind} {param:g}: analytic {exact.success_mass:.6f}, MC {mc.rate:.6f}")
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)
