# Module: covariant.py
# Purpose: Translation-covariant quantum channels stored by momentum transfer

import logging
from dataclasses import dataclass
from functools import cached_property, partial
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from lattice.box import BoxLattice, MomentumIndex
from states.density import DensityMatrix, from_pure
from states.sampling import random_density, random_pure
from utils.errors import LatticeMismatchError, ValidationError
from utils.helpers import make_rng

logger = logging.getLogger(__name__)

COMPLETENESS_TOL = 1e-10
PRUNE_THRESHOLD = 1e-14


@dataclass(frozen=True)
class TransferBlock:
    """
    Fixed-transfer part of one Kraus operator: gains[n] = <n+q|A_k|n>.
    Sources whose target n+q leaves the window carry a zero gain.
    """
    kraus_id: int
    q: MomentumIndex
    gains: np.ndarray

    @classmethod
    def build(cls, lat: BoxLattice, kraus_id: int, q: Sequence[int], gains: np.ndarray) -> "TransferBlock":
        q = lat.check_transfer(q)
        values = np.zeros(lat.size, dtype=complex)
        src, _ = lat.shift_map(q)
        values[src] = np.asarray(gains, dtype=complex).reshape(-1)[src]
        values.setflags(write=False)
        return cls(kraus_id=int(kraus_id), q=q, gains=values)

    def mass(self) -> np.ndarray:
        return np.abs(self.gains) ** 2


class CovariantChannel:
    """
    Covariant Kraus map Phi[rho] = sum_{k,q} A_k^(q) rho A_k^(q)^dag where
    A_k^(q) only shifts momentum by q. The x-average over translations has
    already been carried out, so cross-transfer terms never appear.
    """

    def __init__(self, lattice: BoxLattice, blocks: Sequence[TransferBlock],
                 validate: bool = True, prune: bool = True):
        self.lattice = lattice
        self.logger = logging.getLogger(__name__)
        self.pruned_mass = 0.0
        self._table: Optional[Tuple[np.ndarray, np.ndarray]] = None
        blocks = list(blocks)
        if prune:
            blocks = self._prune(blocks)
        self.blocks: Tuple[TransferBlock, ...] = tuple(blocks)

        if validate:
            ok, message = self.check_invariants()
            if not ok:
                raise ValidationError(message)

    def _prune(self, blocks: List[TransferBlock]) -> List[TransferBlock]:
        """Drop negligible blocks and move their mass onto the q=0 block"""
        kept = [b for b in blocks if np.max(np.abs(b.gains), initial=0.0) >= PRUNE_THRESHOLD]
        dropped = [b for b in blocks if np.max(np.abs(b.gains), initial=0.0) < PRUNE_THRESHOLD]
        if not dropped:
            return kept

        deficit = np.sum([b.mass() for b in dropped], axis=0)
        self.pruned_mass = float(np.max(deficit))
        zero = tuple([0] * self.lattice.dim)

        for i, block in enumerate(kept):
            if block.q == zero:
                g = block.gains
                magnitude = np.sqrt(np.abs(g) ** 2 + deficit)
                phase = np.where(np.abs(g) > 0, g / np.where(np.abs(g) > 0, np.abs(g), 1.0), 1.0)
                kept[i] = TransferBlock.build(self.lattice, block.kraus_id, zero, magnitude * phase)
                break
        else:
            if np.max(deficit) > 0.0:
                next_id = max([b.kraus_id for b in kept], default=-1) + 1
                kept.append(TransferBlock.build(self.lattice, next_id, zero, np.sqrt(deficit)))

        self.logger.debug(f"Pruned {len(dropped)} transfer blocks, max moved mass {self.pruned_mass:.3e}")
        return kept

    def check_invariants(self) -> Tuple[bool, str]:
        for block in self.blocks:
            if block.gains.shape != (self.lattice.size,):
                return False, f"Block {block.kraus_id}/{block.q} has wrong gain length"
        deviation = self.completeness_deviation()
        if deviation > COMPLETENESS_TOL:
            return False, f"Completeness violated: max_n |sum |g|^2 - 1| = {deviation!r}"
        return True, ""

    def completeness(self) -> np.ndarray:
        """sum_{k,q} |g_{k,q}(n)|^2 for every source n"""
        total = np.zeros(self.lattice.size)
        for block in self.blocks:
            total += block.mass()
        return total

    def completeness_deviation(self) -> float:
        return float(np.max(np.abs(self.completeness() - 1.0)))

    def transfer_table(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Returns: (transfers, probs) where transfers has shape (Q, dim) in
        lexicographic order and probs[i, n] = P(transfers[i], n)
        """
        if self._table is not None:
            return self._table
        table: Dict[MomentumIndex, np.ndarray] = {}
        for block in self.blocks:
            if block.q in table:
                table[block.q] = table[block.q] + block.mass()
            else:
                table[block.q] = block.mass()
        transfers = sorted(table)
        probs = np.array([table[q] for q in transfers]).reshape(len(transfers), self.lattice.size)
        self._table = (np.array(transfers, dtype=np.int64).reshape(len(transfers), self.lattice.dim), probs)
        return self._table

    @cached_property
    def gain_matrix(self) -> np.ndarray:
        """Gains of every block stacked in block order, shape (B, size)"""
        return np.array([b.gains for b in self.blocks]).reshape(len(self.blocks), self.lattice.size)


class DenseKrausChannel:
    """Kraus family given as full matrices; needed for non-covariant inputs"""

    def __init__(self, lattice: BoxLattice, operators: Sequence[np.ndarray], validate: bool = True):
        self.lattice = lattice
        self.operators = [np.asarray(a, dtype=complex) for a in operators]
        if validate:
            ok, message = self.check_invariants()
            if not ok:
                raise ValidationError(message)

    def check_invariants(self) -> Tuple[bool, str]:
        if not self.operators:
            return False, "Kraus family is empty"
        size = self.lattice.size
        for a in self.operators:
            if a.shape != (size, size):
                return False, f"Kraus operator shape {a.shape}, expected {(size, size)}"
        deviation = float(np.max(np.abs(self.effect() - np.eye(size))))
        if deviation > COMPLETENESS_TOL:
            return False, f"sum_k A_k^dag A_k deviates from identity by {deviation!r}"
        return True, ""

    def effect(self) -> np.ndarray:
        return sum(a.conj().T @ a for a in self.operators)

    @classmethod
    def completed(cls, lattice: BoxLattice, operators: Sequence[np.ndarray]) -> "DenseKrausChannel":
        """Renormalize A_k -> A_k S^{-1/2} with S = sum_k A_k^dag A_k"""
        ops = [np.asarray(a, dtype=complex) for a in operators]
        if not ops:
            raise ValidationError("Kraus family is empty")
        s = sum(a.conj().T @ a for a in ops)
        w, v = linalg.eigh(0.5 * (s + s.conj().T))
        if np.min(w) <= 0:
            raise ValidationError("Kraus family has a null direction and cannot be completed")
        inv_sqrt = (v * (1.0 / np.sqrt(w))) @ v.conj().T
        return cls(lattice, [a @ inv_sqrt for a in ops])

    def apply_matrix(self, x: np.ndarray) -> np.ndarray:
        return sum(a @ x @ a.conj().T for a in self.operators)


def _check_lattice(ch, rho: DensityMatrix):
    if ch.lattice != rho.lattice:
        raise LatticeMismatchError("Channel and state live on different lattices")


def apply_matrix(ch: CovariantChannel, x: np.ndarray) -> np.ndarray:
    """Linear action on an arbitrary matrix, accumulated in fixed block order"""
    out = np.zeros((ch.lattice.size, ch.lattice.size), dtype=complex)
    for block in ch.blocks:
        src, tgt = ch.lattice.shift_map(block.q)
        if src.size == 0:
            continue
        g = block.gains[src]
        out[np.ix_(tgt, tgt)] += g[:, None] * x[np.ix_(src, src)] * g.conj()[None, :]
    return out


def apply(ch: CovariantChannel, rho: DensityMatrix) -> DensityMatrix:
    """Phi[rho]; the output keeps the trace and positivity of the input"""
    _check_lattice(ch, rho)
    return DensityMatrix(ch.lattice, apply_matrix(ch, rho.matrix), validate=False)


def apply_populations(ch: CovariantChannel, populations: np.ndarray) -> np.ndarray:
    """Momentum populations of Phi[rho] from those of rho (they depend on nothing else)"""
    out = np.zeros(ch.lattice.size)
    for block in ch.blocks:
        src, tgt = ch.lattice.shift_map(block.q)
        out[tgt] += block.mass()[src] * populations[src]
    return out


def covariant_average(dense: DenseKrausChannel) -> CovariantChannel:
    """
    Average A_k(x) rho A_k(x)^dag over all box translations x. The integral
    is done analytically: it keeps each fixed-transfer diagonal of A_k and
    discards the coherences between different transfers.
    """
    if not dense.operators:
        raise ValidationError("Cannot average an empty Kraus family")

    lat = dense.lattice
    blocks = []
    for k, a in enumerate(dense.operators):
        for q in lat.transfer_range():
            src, tgt = lat.shift_map(q)
            if src.size == 0:
                continue
            gains = np.zeros(lat.size, dtype=complex)
            gains[src] = a[tgt, src]
            blocks.append(TransferBlock.build(lat, k, q, gains))
    return CovariantChannel(lat, blocks)


def block_operator(lat: BoxLattice, block: TransferBlock) -> np.ndarray:
    """Dense matrix of A_k^(q)"""
    op = np.zeros((lat.size, lat.size), dtype=complex)
    src, tgt = lat.shift_map(block.q)
    op[tgt, src] = block.gains[src]
    return op


def densify(ch: CovariantChannel) -> DenseKrausChannel:
    """One dense operator per transfer block; the dense map equals Phi"""
    return DenseKrausChannel(ch.lattice, [block_operator(ch.lattice, b) for b in ch.blocks],
                             validate=False)


def translation_operator(lat: BoxLattice, x: Sequence[float]) -> np.ndarray:
    """Diagonal of exp(-i p.x / hbar)"""
    x = np.asarray(x, dtype=float).reshape(lat.dim)
    return np.exp(-1j * (lat.momenta @ x) / lat.hbar)


def covariance_check(channel: Union[DenseKrausChannel, CovariantChannel],
                     displacements: Sequence[Sequence[float]],
                     probes: Optional[Sequence[DensityMatrix]] = None) -> float:
    """
    Max over displacements x and probe states of
    max|T(x) Phi[rho] T(x)^dag - Phi[T(x) rho T(x)^dag]|, T(x) = exp(-i p.x/hbar)
    """
    lat = channel.lattice
    half = 0.5 * lat.box_length
    if isinstance(channel, CovariantChannel):
        act = partial(apply_matrix, channel)
    else:
        act = channel.apply_matrix
    if probes is None:
        rng = make_rng(0, 2)
        probes = [random_density(lat, rng) for _ in range(2)]
        probes += [from_pure(random_pure(lat, rng)) for _ in range(2)]

    deviation = 0.0
    for x in displacements:
        x = np.asarray(x, dtype=float).reshape(lat.dim)
        if np.any(np.abs(x) > half * (1 + 1e-12)):
            raise ValidationError(f"Displacement {x.tolist()} outside [-L/2, L/2]^d")
        t = translation_operator(lat, x)
        for rho in probes:
            lhs = t[:, None] * act(rho.matrix) * t.conj()[None, :]
            rhs = act(t[:, None] * rho.matrix * t.conj()[None, :])
            deviation = max(deviation, float(np.max(np.abs(lhs - rhs))))
    return deviation


def uniform_displacements(lat: BoxLattice, count: int) -> List[np.ndarray]:
    """count displacements spread over [-L/2, L/2)^d along the diagonal and the axes"""
    half = 0.5 * lat.box_length
    steps = np.linspace(-half, half, count, endpoint=False)
    out = []
    for i, s in enumerate(steps):
        x = np.zeros(lat.dim)
        x[i % lat.dim] = s
        if i % 2 == 1:
            x[:] = s
        out.append(x)
    return out


def choi_matrix(ch: CovariantChannel) -> np.ndarray:
    """J = sum_ij |i><j| (x) Phi(|i><j|), shape (size^2, size^2)"""
    size = ch.lattice.size
    j = np.zeros((size, size, size, size), dtype=complex)
    unit = np.zeros((size, size), dtype=complex)
    for a in range(size):
        for b in range(size):
            unit[a, b] = 1.0
            j[a, :, b, :] = apply_matrix(ch, unit)
            unit[a, b] = 0.0
    return j.reshape(size * size, size * size)


def ancilla_min_eigenvalue(ch: CovariantChannel, ancilla_dim: int,
                           rng: np.random.Generator, n_probes: int = 4) -> float:
    """
    Smallest eigenvalue of (I_M (x) Phi)[|Psi><Psi|] over random entangled
    Psi on C^M (x) C^size. Non-negative for a completely positive Phi.
    """
    size = ch.lattice.size
    worst = np.inf
    for _ in range(n_probes):
        psi = rng.normal(size=(ancilla_dim, size)) + 1j * rng.normal(size=(ancilla_dim, size))
        psi /= np.linalg.norm(psi)
        out = np.zeros((ancilla_dim, size, ancilla_dim, size), dtype=complex)
        for a in range(ancilla_dim):
            for b in range(ancilla_dim):
                out[a, :, b, :] = apply_matrix(ch, np.outer(psi[a], psi[b].conj()))
        m = out.reshape(ancilla_dim * size, ancilla_dim * size)
        worst = min(worst, float(linalg.eigvalsh(0.5 * (m + m.conj().T))[0]))
    return worst


def completeness_deviation(ch: CovariantChannel) -> float:
    """max_n |sum_{k,q} |g_{k,q}(n)|^2 - 1|"""
    return ch.completeness_deviation()
