# Module: trajectories.py
# Purpose: Stochastic pure-state unraveling of covariant channels and
#          ensemble averages of the resulting trajectories

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from channels.covariant import CovariantChannel, apply
from lattice.box import MomentumIndex
from states.density import DensityMatrix, PureState, trace_distance
from utils.errors import DegenerateSamplingError, LatticeMismatchError, ValidationError
from utils.helpers import make_rng

logger = logging.getLogger(__name__)

PROBABILITY_TOL = 1e-10
RESAMPLE_ATTEMPTS = 8

Outcome = Tuple[int, MomentumIndex]


@dataclass(frozen=True)
class TrajectoryConfig:
    seed: int
    n_steps: int
    n_trajectories: int
    channel: CovariantChannel

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValidationError(f"n_trajectories must be at least 1, got {self.n_trajectories}")
        if self.n_steps < 0:
            raise ValidationError(f"n_steps must be non-negative, got {self.n_steps}")


@dataclass(frozen=True)
class OutcomeRecord:
    trajectory: int
    step: int
    kraus_id: int
    q: MomentumIndex

    def row(self) -> list:
        return [self.trajectory, self.step, self.kraus_id] + list(self.q)


def trajectory_stream(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent Philox stream per (seed, trajectory index)"""
    if stream == 0:
        return make_rng(seed, index)
    return make_rng(seed, index, stream)


def outcome_probabilities(psi: PureState, ch: CovariantChannel) -> np.ndarray:
    """||A_k^(q) psi||^2 for every block, in block order"""
    return np.abs(ch.gain_matrix) ** 2 @ np.abs(psi.amplitudes) ** 2


def _draw(cdf: np.ndarray, probs: np.ndarray, rng: np.random.Generator) -> int:
    for _ in range(RESAMPLE_ATTEMPTS):
        i = int(np.searchsorted(cdf, rng.random(), side="right"))
        if i < probs.size and probs[i] > 0:
            return i
    raise DegenerateSamplingError(f"No outcome with positive probability after {RESAMPLE_ATTEMPTS} draws")


def step(psi: PureState, ch: CovariantChannel, rng: np.random.Generator) -> Tuple[PureState, Outcome]:
    """
    Sample block (k, q) with probability ||A_k^(q) psi||^2 by inverse CDF over
    the blocks in fixed order and return the normalized post-measurement state.
    """
    if psi.lattice != ch.lattice:
        raise LatticeMismatchError("State and channel live on different lattices")

    probs = outcome_probabilities(psi, ch)
    total = float(probs.sum())
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateSamplingError(f"Outcome probabilities sum to {total!r}")
    if abs(total - 1.0) > PROBABILITY_TOL:
        logger.warning(f"Outcome probabilities sum to {total!r}, renormalizing")

    cdf = np.cumsum(probs) / total
    i = _draw(cdf, probs, rng)
    block = ch.blocks[i]

    src, tgt = ch.lattice.shift_map(block.q)
    out = np.zeros(ch.lattice.size, dtype=complex)
    out[tgt] = block.gains[src] * psi.amplitudes[src]
    out /= np.linalg.norm(out)
    return PureState(ch.lattice, out, validate=False), (block.kraus_id, block.q)


@dataclass
class EnsembleResult:
    state: DensityMatrix
    standard_errors: np.ndarray
    error_estimate: float
    n_trajectories: int
    outcomes: List[OutcomeRecord] = field(default_factory=list)


def _pick_member(weights: np.ndarray, rng: np.random.Generator) -> int:
    if weights.size == 1:
        return 0
    cdf = np.cumsum(weights) / weights.sum()
    return min(int(np.searchsorted(cdf, rng.random(), side="right")), weights.size - 1)


def ensemble_average(cfg: TrajectoryConfig, initial: Sequence[Tuple[float, PureState]],
                     record_outcomes: bool = False, stream: int = 0) -> EnsembleResult:
    """
    Run cfg.n_trajectories trajectories of cfg.n_steps steps, each starting from a
    member of the initial ensemble drawn by weight, and average |psi><psi|.

    The error estimate 1/2 sqrt(size) ||se||_F, built from per-entry standard
    errors, is a heuristic scale for the trace distance to the exact result.
    """
    if not initial:
        raise ValidationError("Initial ensemble is empty")
    lat = cfg.channel.lattice
    weights = np.array([float(w) for w, _ in initial])
    if np.any(weights < 0) or weights.sum() <= 0:
        raise ValidationError("Initial ensemble weights must be non-negative and not all zero")
    for _, psi in initial:
        if psi.lattice != lat:
            raise LatticeMismatchError("Initial ensemble and channel live on different lattices")

    total = np.zeros((lat.size, lat.size), dtype=complex)
    total_sq = np.zeros((lat.size, lat.size))
    outcomes: List[OutcomeRecord] = []

    for index in range(cfg.n_trajectories):
        rng = trajectory_stream(cfg.seed, index, stream)
        psi = initial[_pick_member(weights, rng)][1]
        for n in range(cfg.n_steps):
            psi, (k, q) = step(psi, cfg.channel, rng)
            if record_outcomes:
                outcomes.append(OutcomeRecord(index, n, k, q))
        a = psi.amplitudes
        projector = np.outer(a, a.conj())
        total += projector
        total_sq += np.abs(projector) ** 2

    n = cfg.n_trajectories
    mean = total / n
    if n > 1:
        variance = np.clip(total_sq / n - np.abs(mean) ** 2, 0.0, None) * n / (n - 1)
        se = np.sqrt(variance / n)
    else:
        se = np.zeros((lat.size, lat.size))
    estimate = 0.5 * np.sqrt(lat.size) * float(np.linalg.norm(se))

    logger.info(f"Averaged {n} trajectories of {cfg.n_steps} steps, error estimate {estimate:.3e}")
    return EnsembleResult(state=DensityMatrix(lat, 0.5 * (mean + mean.conj().T), validate=False),
                          standard_errors=se, error_estimate=estimate,
                          n_trajectories=n, outcomes=outcomes)


def exact_evolution(ch: CovariantChannel, rho: DensityMatrix, n_steps: int) -> DensityMatrix:
    """Phi^n_steps[rho]"""
    for _ in range(n_steps):
        rho = apply(ch, rho)
    return rho


@dataclass
class EquivalenceCheck:
    distance: float
    bound: float
    passed: bool


def equivalence_check(cfg: TrajectoryConfig, first: Sequence[Tuple[float, PureState]],
                      second: Sequence[Tuple[float, PureState]],
                      factor: float = 5.0) -> Tuple[EquivalenceCheck, EnsembleResult, EnsembleResult]:
    """
    Averages of two ensembles of the same density matrix must agree within
    factor * max(error estimates); the second ensemble uses its own streams.
    """
    one = ensemble_average(cfg, first, stream=0)
    two = ensemble_average(cfg, second, stream=1)
    distance = trace_distance(one.state, two.state)
    bound = factor * max(one.error_estimate, two.error_estimate)
    return EquivalenceCheck(distance, bound, distance <= bound), one, two
