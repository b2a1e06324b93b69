# Module: sampling.py
# Purpose: Random covariant channels for scans and property tests

import itertools
from typing import List

import numpy as np

from channels.covariant import CovariantChannel, TransferBlock
from channels.families import build_momentum_diagonal
from lattice.box import BoxLattice
from utils.errors import ValidationError


def random_momentum_diagonal(lat: BoxLattice, n_kraus: int, rng: np.random.Generator) -> CovariantChannel:
    """Dirichlet weights c_k(n) and uniform phases phi_k(n)"""
    if n_kraus < 1:
        raise ValidationError(f"n_kraus must be at least 1, got {n_kraus}")
    c = rng.dirichlet(np.ones(n_kraus), size=lat.size).T
    # Dirichlet rows sum to 1 only up to rounding
    c = c / c.sum(axis=0, keepdims=True)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=(n_kraus, lat.size))
    return build_momentum_diagonal(lat, c, phi)


def random_covariant(lat: BoxLattice, n_kraus: int, max_transfer: int,
                     rng: np.random.Generator, symmetric: bool = False) -> CovariantChannel:
    """
    Random complete channel with transfers |q_i| <= max_transfer.

    Every source keeps a fraction s(n) ~ U(0.2, 0.9) of its mass on q != 0, so
    each interior plane wave is genuinely spread. With symmetric=True the
    magnitudes of q and -q agree and only transfers with n+q and n-q both in
    the window are used, which makes the mean shift vanish.
    """
    if n_kraus < 1:
        raise ValidationError(f"n_kraus must be at least 1, got {n_kraus}")
    if not 1 <= max_transfer <= 2 * lat.n_max:
        raise ValidationError(f"max_transfer must lie in [1, {2 * lat.n_max}], got {max_transfer}")

    values = range(-max_transfer, max_transfer + 1)
    transfers = list(itertools.product(values, repeat=lat.dim))
    zero = tuple([0] * lat.dim)

    raw = {}
    for k in range(n_kraus):
        for q in transfers:
            g = rng.normal(size=lat.size) + 1j * rng.normal(size=lat.size)
            raw[(k, q)] = g

    if symmetric:
        for k in range(n_kraus):
            for q in transfers:
                mirror = tuple(-v for v in q)
                if q < mirror:
                    phase = np.exp(1j * np.angle(raw[(k, mirror)]))
                    raw[(k, mirror)] = np.abs(raw[(k, q)]) * phase

    # valid[q][n]: transfer usable from source n
    valid = {}
    for q in transfers:
        qa = np.asarray(q)
        ok = np.all(np.abs(lat.indices + qa) <= lat.n_max, axis=1)
        if symmetric:
            ok &= np.all(np.abs(lat.indices - qa) <= lat.n_max, axis=1)
        valid[q] = ok

    z0 = np.zeros(lat.size)
    z1 = np.zeros(lat.size)
    for (k, q), g in raw.items():
        g[~valid[q]] = 0.0
        if q == zero:
            z0 += np.abs(g) ** 2
        else:
            z1 += np.abs(g) ** 2

    s = rng.uniform(0.2, 0.9, size=lat.size)
    # sources with no usable transfer keep all their mass at q=0
    s = np.where(z1 > 0, s, 0.0)
    scale0 = np.sqrt((1.0 - s) / z0)
    scale1 = np.sqrt(np.divide(s, z1, out=np.zeros(lat.size), where=z1 > 0))

    blocks: List[TransferBlock] = []
    for (k, q), g in raw.items():
        scale = scale0 if q == zero else scale1
        blocks.append(TransferBlock.build(lat, k, q, g * scale))
    return CovariantChannel(lat, blocks)
