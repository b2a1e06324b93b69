# Module: families.py
# Purpose: Named channel families (identity, translations, free evolution,
#          momentum-diagonal maps, GRW-type localization, boosts)

import logging
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from channels.covariant import DenseKrausChannel, CovariantChannel, TransferBlock
from lattice.box import BoxLattice
from utils.errors import ValidationError

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-12
BOOST_MODES = ("constant", "reflecting")
OUT_OF_WINDOW_POLICIES = ("reject", "hold")


def _zero(lat: BoxLattice) -> tuple:
    return tuple([0] * lat.dim)


def _single_diagonal(lat: BoxLattice, gains: np.ndarray) -> CovariantChannel:
    return CovariantChannel(lat, [TransferBlock.build(lat, 0, _zero(lat), gains)])


def build_identity(lat: BoxLattice) -> CovariantChannel:
    return _single_diagonal(lat, np.ones(lat.size, dtype=complex))


def build_boost(lat: BoxLattice, a: Sequence[float]) -> CovariantChannel:
    """Spatial translation by a: single Kraus exp(-i p.a / hbar)"""
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.shape != (lat.dim,):
        raise ValidationError(f"Translation vector needs {lat.dim} components, got {a.shape[0]}")
    return _single_diagonal(lat, np.exp(-1j * (lat.momenta @ a) / lat.hbar))


def build_free_evolution(lat: BoxLattice, t: float, mass: float) -> CovariantChannel:
    """exp(-i p^2 t / (2 m hbar))"""
    if not mass > 0:
        raise ValidationError(f"mass must be positive, got {mass}")
    energy = np.sum(lat.momenta ** 2, axis=1) / (2.0 * mass)
    return _single_diagonal(lat, np.exp(-1j * energy * float(t) / lat.hbar))


def build_momentum_diagonal(lat: BoxLattice, c: np.ndarray,
                            phi: Optional[np.ndarray] = None) -> CovariantChannel:
    """
    Kraus operators sqrt(c_k(p)) exp(i phi_k(p)), functions of momentum only.
    c has shape (K, size) with non-negative entries summing to 1 over k.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim == 1:
        c = c.reshape(1, -1)
    if c.ndim != 2 or c.shape[1] != lat.size or c.shape[0] == 0:
        raise ValidationError(f"c must have shape (K, {lat.size}), got {c.shape}")
    if np.any(c < 0):
        raise ValidationError(f"c has a negative entry: {c.min()!r}")

    deviation = float(np.max(np.abs(c.sum(axis=0) - 1.0)))
    if deviation > NORMALIZATION_TOL:
        raise ValidationError(f"sum_k c_k(n) deviates from 1 by {deviation!r}")

    phi = np.zeros_like(c) if phi is None else np.asarray(phi, dtype=float).reshape(c.shape)
    zero = _zero(lat)
    blocks = [TransferBlock.build(lat, k, zero, np.sqrt(c[k]) * np.exp(1j * phi[k]))
              for k in range(c.shape[0])]
    return CovariantChannel(lat, blocks)


def grw_weights(lat: BoxLattice, r_c: float) -> Dict[tuple, np.ndarray]:
    """
    Per-source transfer amplitudes of the averaged localization operator.

    The Fourier coefficients of the box-periodized Gaussian exp(-x^2/(4 r_c^2))
    (all images included) are the continuum Gaussian sampled at the lattice
    transfers: w(q) = exp(-q~^2 r_c^2 / (2 hbar^2)). For each source n only
    transfers with n+q and n-q both inside the window are kept, then the
    amplitudes are renormalized so sum_q |w|^2 = 1.

    Returns: {q: amplitudes over sources}, zero where q is not kept
    """
    if not r_c > 0:
        raise ValidationError(f"r_c must be positive, got {r_c}")

    reach = lat.n_max - np.abs(lat.indices)  # largest |q_i| allowed per source and axis
    amplitudes: Dict[tuple, np.ndarray] = {}
    norm = np.zeros(lat.size)
    for q in lat.indices:
        q_tilde = lat.momentum_quantum * q.astype(float)
        w = np.exp(-float(q_tilde @ q_tilde) * r_c ** 2 / (2.0 * lat.hbar ** 2))
        kept = np.all(np.abs(q) <= reach, axis=1)
        values = np.where(kept, w, 0.0)
        amplitudes[tuple(int(v) for v in q)] = values
        norm += values ** 2

    # q=0 is always kept and w(0)=1, so norm >= 1
    scale = 1.0 / np.sqrt(norm)
    return {q: values * scale for q, values in amplitudes.items()}


def build_grw(lat: BoxLattice, r_c: float, strength: float = 1.0) -> CovariantChannel:
    """
    GRW-type localization averaged over the localization center.
    strength lambda mixes the identity (1 - lambda) with one collapse (lambda).
    """
    if not 0.0 <= strength <= 1.0:
        raise ValidationError(f"strength must lie in [0, 1], got {strength}")
    weights = grw_weights(lat, r_c)

    blocks: List[TransferBlock] = []
    if strength < 1.0:
        blocks.append(TransferBlock.build(lat, 0, _zero(lat),
                                          np.full(lat.size, np.sqrt(1.0 - strength), dtype=complex)))
    if strength > 0.0:
        for q, values in weights.items():
            if np.any(values > 0):
                blocks.append(TransferBlock.build(lat, 1, q, np.sqrt(strength) * values))

    ch = CovariantChannel(lat, blocks)
    logger.debug(f"GRW channel r_c={r_c} strength={strength}: {len(ch.blocks)} blocks")
    return ch


def boost_shifts(lat: BoxLattice, gamma: Sequence[int],
                 mode: Union[str, Sequence[str]] = "constant") -> np.ndarray:
    """Transfer gamma(n) for every source: gamma_j or gamma_j - 2 n_j per axis"""
    gamma = np.asarray([int(g) for g in gamma], dtype=np.int64)
    if gamma.shape != (lat.dim,):
        raise ValidationError(f"gamma needs {lat.dim} components, got {gamma.shape[0]}")

    modes = [mode] * lat.dim if isinstance(mode, str) else list(mode)
    if len(modes) != lat.dim or any(m not in BOOST_MODES for m in modes):
        raise ValidationError(f"mode must be one of {BOOST_MODES} (or one per axis), got {mode!r}")

    shifts = np.tile(gamma, (lat.size, 1))
    for axis, m in enumerate(modes):
        if m == "reflecting":
            shifts[:, axis] -= 2 * lat.indices[:, axis]
    return shifts


def build_boost_family(lat: BoxLattice, gamma: Sequence[int],
                       mode: Union[str, Sequence[str]] = "constant",
                       out_of_window: str = "reject",
                       phases: Optional[np.ndarray] = None) -> CovariantChannel:
    """
    Map |n><n| -> |n + gamma(n)><n + gamma(n)| with optional phases e^{i phi(n)}.

    out_of_window="reject" raises when a target leaves the window; "hold"
    keeps those sources in place, so the result is only a boost on the sources
    whose target fits.
    """
    if out_of_window not in OUT_OF_WINDOW_POLICIES:
        raise ValidationError(f"out_of_window must be one of {OUT_OF_WINDOW_POLICIES}")

    shifts = boost_shifts(lat, gamma, mode)
    targets = lat.indices + shifts
    outside = np.any(np.abs(targets) > lat.n_max, axis=1)
    if np.any(outside):
        first = tuple(int(v) for v in lat.indices[np.argmax(outside)])
        if out_of_window == "reject":
            raise ValidationError(f"Boost moves {int(outside.sum())} sources out of the window "
                                  f"(first: n={first})")
        logger.warning(f"Boost holds {int(outside.sum())} edge sources at zero transfer")
        shifts[outside] = 0

    phase = np.ones(lat.size, dtype=complex)
    if phases is not None:
        phase = np.exp(1j * np.asarray(phases, dtype=float).reshape(lat.size))

    blocks = []
    for q in sorted({tuple(int(v) for v in s) for s in shifts}):
        mask = np.all(shifts == np.asarray(q), axis=1)
        blocks.append(TransferBlock.build(lat, 0, q, np.where(mask, phase, 0.0)))
    return CovariantChannel(lat, blocks)


def half_box_matrix(lat: BoxLattice, axis: int = 0, side: str = "left") -> np.ndarray:
    """
    Position projector onto one half of the box along axis, in the momentum basis:
    <m|P|n> = 1/2 for m = n, +-i/(pi (m-n)) for odd m-n on axis (same other components).
    """
    lat.check_axis(axis)
    if side not in ("left", "right"):
        raise ValidationError(f"side must be left or right, got {side!r}")

    idx = lat.indices
    k = idx[:, None, axis] - idx[None, :, axis]
    same_rest = np.all(np.delete(idx[:, None, :] == idx[None, :, :], axis, axis=2), axis=2)

    off = np.zeros(k.shape, dtype=complex)
    odd = (k % 2) != 0
    off[odd] = 1j / (np.pi * k[odd])
    if side == "right":
        off = -off
    matrix = np.where(k == 0, 0.5, off)
    return np.where(same_rest, matrix, 0.0)


def half_box_projectors(lat: BoxLattice, axis: int = 0) -> DenseKrausChannel:
    """Left/right half-box measurement; truncation breaks completeness, so it is restored"""
    ops = [half_box_matrix(lat, axis, "left"), half_box_matrix(lat, axis, "right")]
    return DenseKrausChannel.completed(lat, ops)
