# Module: density.py
# Purpose: Pure states and density matrices in the momentum eigenbasis

import logging
from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg

from lattice.box import BoxLattice, flat_index
from utils.errors import LatticeMismatchError, ValidationError

logger = logging.getLogger(__name__)

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = -1e-10


class PureState:
    """Normalized amplitude vector over the flat momentum basis"""

    def __init__(self, lattice: BoxLattice, amplitudes: np.ndarray, validate: bool = True):
        self.lattice = lattice
        self.amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)
        self.amplitudes.setflags(write=False)
        if validate:
            ok, message = self.check_invariants()
            if not ok:
                raise ValidationError(message)

    def check_invariants(self) -> Tuple[bool, str]:
        if self.amplitudes.shape != (self.lattice.size,):
            return False, f"Expected {self.lattice.size} amplitudes, got {self.amplitudes.shape[0]}"
        norm = float(np.linalg.norm(self.amplitudes))
        if abs(norm - 1.0) > NORM_TOL:
            return False, f"State not normalized: norm={norm!r}"
        return True, ""

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


class DensityMatrix:
    """
    Statistical operator in the momentum eigenbasis.
    Hermitian, unit trace and positive semidefinite (checked by eigendecomposition).
    """

    def __init__(self, lattice: BoxLattice, matrix: np.ndarray, validate: bool = True):
        self.lattice = lattice
        self.matrix = np.asarray(matrix, dtype=complex)
        self.matrix.setflags(write=False)
        if validate:
            ok, message = self.check_invariants()
            if not ok:
                raise ValidationError(message)

    def check_invariants(self) -> Tuple[bool, str]:
        size = self.lattice.size
        if self.matrix.shape != (size, size):
            return False, f"Expected a {size}x{size} matrix, got {self.matrix.shape}"
        asym = float(np.max(np.abs(self.matrix - self.matrix.conj().T)))
        if asym > HERMITIAN_TOL:
            return False, f"Not Hermitian: max |rho - rho^dag| = {asym!r}"
        trace = complex(np.trace(self.matrix))
        if abs(trace - 1.0) > TRACE_TOL:
            return False, f"Trace {trace!r} differs from 1"
        min_eig = self.min_eigenvalue()
        if min_eig < POSITIVITY_TOL:
            return False, f"Not positive semidefinite: min eigenvalue {min_eig!r}"
        return True, ""

    def min_eigenvalue(self) -> float:
        hermitian = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(linalg.eigvalsh(hermitian)[0])

    def populations(self) -> np.ndarray:
        """Diagonal <n|rho|n> (real part)"""
        return np.real(np.diag(self.matrix)).copy()

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


def plane_wave(lat: BoxLattice, n: Sequence[int]) -> PureState:
    amplitudes = np.zeros(lat.size, dtype=complex)
    amplitudes[flat_index(lat, n)] = 1.0
    return PureState(lat, amplitudes)


def superposition(lat: BoxLattice, terms: Sequence[Tuple[complex, Sequence[int]]],
                  normalize: bool = True) -> PureState:
    """Sum of amp*|n> over terms; repeated indices add up"""
    amplitudes = np.zeros(lat.size, dtype=complex)
    for amp, n in terms:
        amplitudes[flat_index(lat, n)] += complex(amp)

    norm = float(np.linalg.norm(amplitudes))
    if norm == 0.0:
        raise ValidationError("Superposition has zero norm")
    if normalize:
        amplitudes = amplitudes / norm
    return PureState(lat, amplitudes)


def from_pure(psi: PureState) -> DensityMatrix:
    """rho = |psi><psi|"""
    a = psi.amplitudes
    return DensityMatrix(psi.lattice, np.outer(a, a.conj()), validate=False)


def mix(ensemble: Sequence[Tuple[float, PureState]]) -> DensityMatrix:
    """
    Statistical mixture sum_k p_k |psi_k><psi_k|
    Raises ValidationError for negative weights or weights not summing to 1.
    """
    if len(ensemble) == 0:
        raise ValidationError("Empty ensemble")

    lat = ensemble[0][1].lattice
    weights = np.array([float(w) for w, _ in ensemble])
    if np.any(weights < 0):
        raise ValidationError(f"Negative ensemble weight: {weights.min()!r}")
    if abs(weights.sum() - 1.0) > NORM_TOL:
        raise ValidationError(f"Ensemble weights sum to {weights.sum()!r}, expected 1")

    matrix = np.zeros((lat.size, lat.size), dtype=complex)
    for w, psi in ensemble:
        if psi.lattice != lat:
            raise LatticeMismatchError("Ensemble members live on different lattices")
        a = psi.amplitudes
        matrix += w * np.outer(a, a.conj())
    return DensityMatrix(lat, matrix, validate=False)


def _check_axis_and_pops(rho: DensityMatrix, axis: int) -> np.ndarray:
    rho.lattice.check_axis(axis)
    return rho.populations()


def mean_momentum(rho: DensityMatrix, axis: int) -> float:
    """Tr(p_axis rho)"""
    pops = _check_axis_and_pops(rho, axis)
    return float(pops @ rho.lattice.momenta[:, axis])


def second_moment(rho: DensityMatrix, axis: int) -> float:
    """Tr(p_axis^2 rho)"""
    pops = _check_axis_and_pops(rho, axis)
    return float(pops @ rho.lattice.momenta[:, axis] ** 2)


def momentum_spread(rho: DensityMatrix, axis: int, clamp: bool = False) -> float:
    """
    Variance Tr(p^2 rho) - Tr(p rho)^2 along axis.
    With clamp=True tiny negative values are reported as 0.
    """
    mean = mean_momentum(rho, axis)
    variance = second_moment(rho, axis) - mean * mean
    if clamp and variance < 0.0:
        return 0.0
    return variance


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """0.5 * ||rho - sigma||_1"""
    if rho.lattice != sigma.lattice:
        raise LatticeMismatchError("Trace distance between states on different lattices")
    diff = rho.matrix - sigma.matrix
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(linalg.eigvalsh(diff))))


def fidelity_with_pure(rho: DensityMatrix, psi: PureState) -> float:
    """<psi|rho|psi>"""
    a = psi.amplitudes
    return float(np.real(a.conj() @ rho.matrix @ a))


def momentum_moments(rho: DensityMatrix, clamp: bool = True) -> Tuple[List[float], List[float]]:
    """(mean_p per axis, spread_p per axis) as written to reports"""
    means = [mean_momentum(rho, axis) for axis in range(rho.lattice.dim)]
    spreads = [momentum_spread(rho, axis, clamp) for axis in range(rho.lattice.dim)]
    return means, spreads
