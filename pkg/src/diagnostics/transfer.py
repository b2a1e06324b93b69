# Module: transfer.py
# Purpose: Momentum-transfer probabilities P(m, n) of a covariant channel

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from channels.covariant import CovariantChannel
from lattice.box import BoxLattice, MomentumIndex, flat_index

NORMALIZATION_TOL = 1e-10


@dataclass(frozen=True)
class TransferDistribution:
    """P(m, n) over transfers m for one fixed source n"""
    lattice: BoxLattice
    source: MomentumIndex
    transfers: np.ndarray  # (Q, dim) integer transfers
    probs: np.ndarray      # (Q,)

    def check_invariants(self) -> Tuple[bool, str]:
        if np.any(self.probs < 0):
            return False, f"Negative transfer probability {self.probs.min()!r}"
        total = float(self.probs.sum())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            return False, f"Transfer probabilities sum to {total!r}"
        return True, ""

    def _tilde(self, axis: int) -> np.ndarray:
        self.lattice.check_axis(axis)
        return self.lattice.momentum_quantum * self.transfers[:, axis].astype(float)

    def mean(self, axis: int) -> float:
        """sum_m P(m, n) m~_axis"""
        return float(self.probs @ self._tilde(axis))

    def second_moment(self, axis: int) -> float:
        return float(self.probs @ self._tilde(axis) ** 2)

    def variance(self, axis: int) -> float:
        mean = self.mean(axis)
        return self.second_moment(axis) - mean * mean

    def off_center_mass(self) -> float:
        """Probability of any non-zero transfer"""
        nonzero = np.any(self.transfers != 0, axis=1)
        return float(self.probs[nonzero].sum())

    def support(self, threshold: float = 0.0) -> np.ndarray:
        return self.transfers[self.probs > threshold]


def transfer_distribution(ch: CovariantChannel, n: Sequence[int]) -> TransferDistribution:
    transfers, probs = ch.transfer_table()
    column = probs[:, flat_index(ch.lattice, n)].copy()
    return TransferDistribution(ch.lattice, ch.lattice.check_index(n), transfers, column)


def marginal(td: TransferDistribution, axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sum of P over all other axes.

    Returns: (values, probs) with values = -2*n_max ... +2*n_max along axis
    """
    td.lattice.check_axis(axis)
    span = 2 * td.lattice.n_max
    values = np.arange(-span, span + 1)
    probs = np.zeros(values.size)
    np.add.at(probs, td.transfers[:, axis] + span, td.probs)
    return values, probs
