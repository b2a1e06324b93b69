# Module: classify.py
# Purpose: Sort covariant channels into momentum-diagonal, pure boost or
#          diffusive and cross-check the label against measured spread changes

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from channels.covariant import CovariantChannel
from diagnostics.diffusion import PATHS, transfer_sums
from lattice.box import BoxLattice
from states.sampling import random_density
from utils.errors import ValidationError
from utils.helpers import make_rng

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9


class ChannelClass(str, Enum):
    MOMENTUM_DIAGONAL = "MomentumDiagonal"
    PURE_BOOST = "PureBoost"
    DIFFUSIVE = "Diffusive"


@dataclass(frozen=True)
class Probe:
    """A probe state only needs its momentum populations: Delta depends on nothing else"""
    state_id: str
    populations: np.ndarray


@dataclass
class ChannelClassification:
    label: ChannelClass
    boost_transfers: Optional[np.ndarray] = None   # gamma(n) per source, PureBoost only
    branches: Optional[List[str]] = None           # "constant" / "reflecting" per axis
    max_abs_delta: float = 0.0
    delta_tol: float = 0.0
    consistent: bool = True
    message: str = ""


def probe_suite(lat: BoxLattice, seed: int = 0, n_random: int = 20) -> List[Probe]:
    """Every plane wave, every adjacent two-mode equal superposition, and n_random random states"""
    probes = []
    for i, n in enumerate(lat.indices):
        pops = np.zeros(lat.size)
        pops[i] = 1.0
        probes.append(Probe(f"plane{tuple(int(v) for v in n)}", pops))

    for axis in range(lat.dim):
        src, tgt = lat.shift_map(tuple(1 if j == axis else 0 for j in range(lat.dim)))
        for s, t in zip(src, tgt):
            pops = np.zeros(lat.size)
            pops[s] = pops[t] = 0.5
            n = tuple(int(v) for v in lat.indices[s])
            probes.append(Probe(f"pair{n}+e{axis}", pops))

    rng = make_rng(seed, 1)
    for r in range(n_random):
        probes.append(Probe(f"random{r}", random_density(lat, rng).populations()))
    return probes


def probe_reports(ch: CovariantChannel, probes: Sequence[Probe],
                  path: str = "general") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    d, D and Delta for every probe at once.

    Returns: three arrays of shape (len(probes), dim)
    """
    lat = ch.lattice
    if path not in PATHS:
        raise ValidationError(f"path must be one of {PATHS}, got {path!r}")
    pops = np.array([p.populations for p in probes]).reshape(len(probes), lat.size)
    d = np.zeros((len(probes), lat.dim))
    big_d = np.zeros_like(d)
    delta = np.zeros_like(d)
    for axis in range(lat.dim):
        first, second = transfer_sums(ch, axis)
        n_tilde = lat.momenta[:, axis]
        mean = pops @ n_tilde
        d[:, axis] = pops @ first
        big_d[:, axis] = pops @ second
        if path == "general":
            big_d[:, axis] += 2.0 * pops @ (first * n_tilde)
        delta[:, axis] = big_d[:, axis] - d[:, axis] ** 2 - 2.0 * mean * d[:, axis]
    return d, big_d, delta


def measure_probe_deltas(ch: CovariantChannel, probes: Sequence[Probe], path: str = "general") -> np.ndarray:
    """Spread change per probe and axis, shape (len(probes), dim)"""
    return probe_reports(ch, probes, path)[2]


def delta_tolerance(lat: BoxLattice, tol: float) -> float:
    """tol scaled by the largest p^2 of the window"""
    p_max = float(np.max(np.abs(lat.momenta), initial=0.0))
    return tol * max(1.0, p_max * p_max)


def _is_momentum_diagonal(ch: CovariantChannel, tol: float) -> bool:
    """Total mass moved off q=0 stays within tol for every source"""
    zero = tuple([0] * ch.lattice.dim)
    moved = np.zeros(ch.lattice.size)
    for block in ch.blocks:
        if block.q != zero:
            moved += block.mass()
    return float(np.max(moved, initial=0.0)) <= tol


def boost_pattern(ch: CovariantChannel, tol: float):
    """
    Single transfer gamma(n) carrying mass >= 1 - tol for every source, with
    gamma_j constant or gamma_j + 2 n_j constant on each axis.

    Returns: (gamma table, branches) or None
    """
    lat = ch.lattice
    transfers, probs = ch.transfer_table()
    if transfers.shape[0] == 0:
        return None
    best = np.argmax(probs, axis=0)
    if np.any(probs[best, np.arange(lat.size)] < 1.0 - tol):
        return None

    gamma = transfers[best]
    branches = []
    for axis in range(lat.dim):
        g = gamma[:, axis]
        if np.all(g == g[0]):
            branches.append("constant")
        elif np.all(g + 2 * lat.indices[:, axis] == g[0] + 2 * lat.indices[0, axis]):
            branches.append("reflecting")
        else:
            return None
    return gamma, branches


def classify_channel(ch: CovariantChannel, tol: float = DEFAULT_TOL,
                     probes: Optional[Sequence[Probe]] = None,
                     check_consistency: bool = True,
                     delta_tol: Optional[float] = None) -> ChannelClassification:
    """
    Label the channel from its transfer structure, then measure Delta on the
    probe suite: zero for the first two classes, non-zero on some probe for
    Diffusive.
    """
    if _is_momentum_diagonal(ch, tol):
        result = ChannelClassification(ChannelClass.MOMENTUM_DIAGONAL)
    else:
        pattern = boost_pattern(ch, tol)
        if pattern is not None:
            result = ChannelClassification(ChannelClass.PURE_BOOST, boost_transfers=pattern[0],
                                           branches=pattern[1])
        else:
            result = ChannelClassification(ChannelClass.DIFFUSIVE)

    if not check_consistency:
        return result

    lat = ch.lattice
    if probes is None:
        probes = probe_suite(lat)
    deltas = measure_probe_deltas(ch, probes)
    result.delta_tol = delta_tolerance(lat, tol) if delta_tol is None else delta_tol
    result.max_abs_delta = float(np.max(np.abs(deltas), initial=0.0))

    if result.label == ChannelClass.DIFFUSIVE:
        result.consistent = result.max_abs_delta > result.delta_tol
    else:
        result.consistent = result.max_abs_delta <= result.delta_tol

    if not result.consistent:
        result.message = (f"{result.label.value} channel has max |Delta| = {result.max_abs_delta:.3e} "
                          f"against tolerance {result.delta_tol:.3e}")
        logger.warning(result.message)
    return result
