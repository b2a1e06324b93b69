# Module: diffusion.py
# Purpose: Mean shift d, second-moment change D and spread change of a channel

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from channels.covariant import CovariantChannel, apply, apply_populations
from diagnostics.transfer import transfer_distribution
from lattice.box import flat_index
from states.density import DensityMatrix, from_pure, mean_momentum, second_moment, superposition
from utils.errors import LatticeMismatchError, ValidationError

logger = logging.getLogger(__name__)

PATHS = ("general", "conserving")


@dataclass(frozen=True)
class AxisMoments:
    """Transfer sums along one axis for a given momentum population"""
    mean_p: float
    d: float
    main: float   # sum P m~^2 rho_nn
    cross: float  # 2 sum P m~ n~ rho_nn


def _populations(ch: CovariantChannel, rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        if rho.lattice != ch.lattice:
            raise LatticeMismatchError("Channel and state live on different lattices")
        return rho.populations()
    pops = np.asarray(rho, dtype=float).reshape(-1)
    if pops.shape != (ch.lattice.size,):
        raise ValidationError(f"Expected {ch.lattice.size} populations, got {pops.shape[0]}")
    return pops


def transfer_sums(ch: CovariantChannel, axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """(sum_m P(m, n) m~_j, sum_m P(m, n) m~_j^2) for every source n"""
    lat = ch.lattice
    lat.check_axis(axis)
    transfers, probs = ch.transfer_table()
    m_tilde = lat.momentum_quantum * transfers[:, axis].astype(float)
    return m_tilde @ probs, (m_tilde ** 2) @ probs


def axis_moments(ch: CovariantChannel, rho, axis: int) -> AxisMoments:
    """rho may be a DensityMatrix or its population vector"""
    pops = _populations(ch, rho)
    first, second = transfer_sums(ch, axis)
    n_tilde = ch.lattice.momenta[:, axis]

    return AxisMoments(mean_p=float(pops @ n_tilde),
                       d=float(first @ pops),
                       main=float(second @ pops),
                       cross=float(2.0 * first @ (n_tilde * pops)))


def momentum_shift(ch: CovariantChannel, rho, axis: int) -> float:
    """d_j = Tr(p_j Phi[rho]) - Tr(p_j rho) from the transfer table"""
    return axis_moments(ch, rho, axis).d


def spread_change_main(ch: CovariantChannel, rho, axis: int) -> float:
    """sum_{m,n} P(m, n) m~_j^2 <n|rho|n>, exact when the channel conserves mean momentum"""
    return axis_moments(ch, rho, axis).main


@dataclass(frozen=True)
class DiffusionEntry:
    axis: int
    d: float
    D: float
    delta: float


def spread_change_full(ch: CovariantChannel, rho, axis: int, path: str = "general") -> DiffusionEntry:
    """
    D_j with the cross term 2 sum P m~ <n|p rho|n> ("general") or without it
    ("conserving"); delta = D - d^2 - 2 <p> d.
    """
    if path not in PATHS:
        raise ValidationError(f"path must be one of {PATHS}, got {path!r}")
    m = axis_moments(ch, rho, axis)
    big_d = m.main + m.cross if path == "general" else m.main
    return DiffusionEntry(axis=axis, d=m.d, D=big_d,
                          delta=big_d - m.d * m.d - 2.0 * m.mean_p * m.d)


@dataclass
class DiffusionReport:
    d: List[float]
    D: List[float]
    delta: List[float]
    path: str = "general"
    label: Optional[str] = None

    def consistency_error(self, mean_p: Sequence[float]) -> float:
        """max_j |delta_j - (D_j - d_j^2 - 2 <p_j> d_j)|"""
        return max(abs(self.delta[j] - (self.D[j] - self.d[j] ** 2 - 2.0 * mean_p[j] * self.d[j]))
                   for j in range(len(self.d)))

    def max_abs_delta(self) -> float:
        return max(abs(v) for v in self.delta)


def diffusion_report(ch: CovariantChannel, rho, path: str = "general",
                     label: Optional[str] = None) -> DiffusionReport:
    entries = [spread_change_full(ch, rho, axis, path) for axis in range(ch.lattice.dim)]
    return DiffusionReport(d=[e.d for e in entries], D=[e.D for e in entries],
                           delta=[e.delta for e in entries], path=path, label=label)


def bulk_transfer_variance(ch: CovariantChannel, tol: float) -> Optional[List[float]]:
    """
    Transfer variance Var_P(0) per axis when the channel conserves the mean
    everywhere and every source with |n_j| <= n_max/2 sees the same variance
    as the centre. None otherwise.
    """
    lat = ch.lattice
    centre = flat_index(lat, tuple([0] * lat.dim))
    bulk = np.all(np.abs(lat.indices) <= lat.n_max // 2, axis=1)
    variances = []
    for axis in range(lat.dim):
        first, second = transfer_sums(ch, axis)
        if np.max(np.abs(first), initial=0.0) > tol:
            return None
        per_source = second - first ** 2
        if np.max(np.abs(per_source[bulk] - per_source[centre]), initial=0.0) > tol:
            return None
        variances.append(float(per_source[centre]))
    return variances


def direct_moments_change(ch: CovariantChannel, rho: DensityMatrix, axis: int) -> Tuple[float, float]:
    """(d, D) from dense traces of Phi[rho] and rho"""
    out = apply(ch, rho)
    return (mean_momentum(out, axis) - mean_momentum(rho, axis),
            second_moment(out, axis) - second_moment(rho, axis))


def direct_spread_change(ch: CovariantChannel, rho, axis: int) -> float:
    """Variance change computed from the output populations"""
    lat = ch.lattice
    pops = _populations(ch, rho)
    out = apply_populations(ch, pops)
    p = lat.momenta[:, axis]

    def variance(w):
        mean = float(w @ p)
        return float(w @ p ** 2) - mean * mean

    return variance(out) - variance(pops)


@dataclass
class InheritanceReport:
    source: Tuple[int, ...]
    second_moments: List[float]
    mean_conserving: bool
    precondition_met: bool
    rows: List[Dict] = field(default_factory=list)
    message: str = ""

    @property
    def holds(self) -> bool:
        return all(row["holds"] for row in self.rows)


def diffusion_inheritance(ch: CovariantChannel, n0: Sequence[int],
                          rho_suite: Sequence[DensityMatrix], slack: float = 1e-12) -> InheritanceReport:
    """
    Check D_j[rho] >= (sum_m P(m, n0) m~_j^2) <n0|rho|n0> for every axis and every
    state of the suite that overlaps n0. D_j is the main transfer sum; it equals
    the full second-moment change whenever the channel conserves mean momentum.
    Precondition failures are reported, not raised.
    """
    lat = ch.lattice
    td = transfer_distribution(ch, n0)
    moments = [td.second_moment(axis) for axis in range(lat.dim)]

    transfers, probs = ch.transfer_table()
    drift = np.abs((lat.momentum_quantum * transfers.astype(float)).T @ probs)
    mean_conserving = bool(np.max(drift, initial=0.0) <= 1e-10)

    report = InheritanceReport(source=tuple(td.source), second_moments=moments,
                               mean_conserving=mean_conserving,
                               precondition_met=max(moments) > 0.0)
    if not report.precondition_met:
        report.message = f"sum_m P(m, n0) m~^2 vanishes on every axis for n0={td.source}"
        logger.warning(report.message)
        return report

    i0 = flat_index(lat, n0)
    for index, rho in enumerate(rho_suite):
        weight = float(rho.populations()[i0])
        for axis in range(lat.dim):
            value = spread_change_main(ch, rho, axis)
            bound = moments[axis] * weight
            report.rows.append({"state": index, "axis": axis, "overlap": weight, "D": value,
                                "bound": bound, "vacuous": weight <= 0.0,
                                "holds": value >= bound - slack})
    return report


def two_mode_delta_formula(ch: CovariantChannel, n0: Sequence[int], m0: Sequence[int],
                           a: complex, b: complex, axis: int) -> float:
    """
    Spread change for a|n0> + b|m0> under a channel whose plane-wave marginals
    along axis are sharp: delta = w1 w2 [(x1 - x2)^2 - (n~0 - m~0)^2] with
    x = n~ + gamma~(n).
    """
    lat = ch.lattice
    lat.check_axis(axis)
    if tuple(n0) == tuple(m0):
        raise ValidationError("Two-mode formula needs two distinct plane waves")

    positions = []
    for n in (n0, m0):
        td = transfer_distribution(ch, n)
        if td.variance(axis) > 1e-14:
            raise ValidationError(f"Transfer marginal of n={tuple(n)} along axis {axis} is not sharp")
        positions.append(lat.momentum_quantum * n[axis] + td.mean(axis))

    w1, w2 = abs(a) ** 2, abs(b) ** 2
    w1, w2 = w1 / (w1 + w2), w2 / (w1 + w2)
    before = lat.momentum_quantum * (n0[axis] - m0[axis])
    return w1 * w2 * ((positions[0] - positions[1]) ** 2 - before ** 2)


def two_mode_state(ch: CovariantChannel, n0: Sequence[int], m0: Sequence[int],
                   a: complex, b: complex) -> DensityMatrix:
    return from_pure(superposition(ch.lattice, [(a, n0), (b, m0)]))
