# Module: sampling.py
# Purpose: Random states and equivalent pure-state ensembles

from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.stats import unitary_group

from lattice.box import BoxLattice
from states.density import DensityMatrix, PureState
from utils.errors import ValidationError


def random_pure(lat: BoxLattice, rng: np.random.Generator) -> PureState:
    a = rng.normal(size=lat.size) + 1j * rng.normal(size=lat.size)
    return PureState(lat, a / np.linalg.norm(a))


def random_density(lat: BoxLattice, rng: np.random.Generator, rank: Optional[int] = None) -> DensityMatrix:
    """Ginibre ensemble: G G^dag / Tr(G G^dag) with G of shape (size, rank)"""
    rank = rank or lat.size
    g = rng.normal(size=(lat.size, rank)) + 1j * rng.normal(size=(lat.size, rank))
    m = g @ g.conj().T
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(lat, m / np.real(np.trace(m)), validate=False)


def random_diagonal_density(lat: BoxLattice, rng: np.random.Generator) -> DensityMatrix:
    """Incoherent mixture of plane waves with Dirichlet-distributed weights"""
    p = rng.dirichlet(np.ones(lat.size))
    return DensityMatrix(lat, np.diag(p).astype(complex), validate=False)


def equivalent_ensemble(rho: DensityMatrix, rng: np.random.Generator,
                        n_members: Optional[int] = None,
                        cutoff: float = 1e-15) -> List[Tuple[float, PureState]]:
    """
    Pure-state ensemble of rho obtained by remixing its eigen-ensemble with a
    Haar-random unitary (Hughston-Jozsa-Wootters). Members with weight below
    cutoff are dropped and the remaining weights renormalized.
    """
    lat = rho.lattice
    hermitian = 0.5 * (rho.matrix + rho.matrix.conj().T)
    eigvals, eigvecs = linalg.eigh(hermitian)
    eigvals = np.clip(eigvals, 0.0, None)

    n_members = n_members or lat.size
    if n_members < int(np.count_nonzero(eigvals > cutoff)):
        raise ValidationError(f"{n_members} members cannot represent a state of rank "
                              f"{int(np.count_nonzero(eigvals > cutoff))}")

    # Pad the eigen-ensemble with zero-weight vectors up to n_members
    k = max(n_members, lat.size)
    sqrt_weighted = np.zeros((lat.size, k), dtype=complex)
    sqrt_weighted[:, :lat.size] = eigvecs * np.sqrt(eigvals)
    u = unitary_group.rvs(k, random_state=rng)

    unnormalized = sqrt_weighted @ u.T
    weights = np.sum(np.abs(unnormalized) ** 2, axis=0)

    keep = [j for j in range(k) if weights[j] > cutoff]
    total = float(np.sum(weights[keep]))
    ensemble = []
    for j in keep:
        psi = PureState(lat, unnormalized[:, j] / np.sqrt(weights[j]), validate=False)
        ensemble.append((float(weights[j]) / total, psi))
    return ensemble


def eigen_ensemble(rho: DensityMatrix, cutoff: float = 1e-15) -> List[Tuple[float, PureState]]:
    hermitian = 0.5 * (rho.matrix + rho.matrix.conj().T)
    eigvals, eigvecs = linalg.eigh(hermitian)
    keep = [j for j in range(len(eigvals)) if eigvals[j] > cutoff]
    total = float(np.sum(eigvals[keep]))
    return [(float(eigvals[j]) / total, PureState(rho.lattice, eigvecs[:, j], validate=False))
            for j in keep]
