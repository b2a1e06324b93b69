# Module: box.py
# Purpose: Discrete momentum lattice of a particle in a periodic box

import itertools
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Dict, Sequence, Tuple

import numpy as np

from utils.errors import LatticeRangeError, ValidationError

MomentumIndex = Tuple[int, ...]


@dataclass(frozen=True)
class BoxLattice:
    """
    Momentum eigenbasis |n> of a particle in a box of length L with periodic
    boundary conditions, truncated to n_i in [-n_max, +n_max].

    Flat ordering is row-major over components, each running -n_max ... +n_max.
    """
    dim: int
    n_max: int
    box_length: float
    hbar: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValidationError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n_max < 0:
            raise ValidationError(f"n_max must be non-negative, got {self.n_max}")
        if not self.box_length > 0:
            raise ValidationError(f"box_length must be positive, got {self.box_length}")
        if not self.hbar > 0:
            raise ValidationError(f"hbar must be positive, got {self.hbar}")

    @property
    def side(self) -> int:
        return 2 * self.n_max + 1

    @property
    def size(self) -> int:
        return self.side ** self.dim

    @property
    def momentum_quantum(self) -> float:
        return 2.0 * math.pi * self.hbar / self.box_length

    @property
    def measure(self) -> float:
        """(2*pi*hbar/L)^dim, the volume of one momentum cell"""
        return self.momentum_quantum ** self.dim

    @cached_property
    def indices(self) -> np.ndarray:
        values = range(-self.n_max, self.n_max + 1)
        grid = np.array(list(itertools.product(values, repeat=self.dim)), dtype=np.int64)
        grid.setflags(write=False)
        return grid

    @cached_property
    def momenta(self) -> np.ndarray:
        p = self.momentum_quantum * self.indices.astype(float)
        p.setflags(write=False)
        return p

    @cached_property
    def _strides(self) -> np.ndarray:
        return np.array([self.side ** (self.dim - 1 - i) for i in range(self.dim)], dtype=np.int64)

    def check_index(self, n: Sequence[int]) -> MomentumIndex:
        n = tuple(int(c) for c in n)
        if len(n) != self.dim:
            raise LatticeRangeError(f"Index {n} has {len(n)} components, lattice dim is {self.dim}")
        if any(abs(c) > self.n_max for c in n):
            raise LatticeRangeError(f"Index {n} outside cutoff n_max={self.n_max}")
        return n

    def check_transfer(self, q: Sequence[int]) -> MomentumIndex:
        q = tuple(int(c) for c in q)
        if len(q) != self.dim:
            raise LatticeRangeError(f"Transfer {q} has {len(q)} components, lattice dim is {self.dim}")
        if any(abs(c) > 2 * self.n_max for c in q):
            raise LatticeRangeError(f"Transfer {q} can never connect two lattice sites")
        return q

    def check_axis(self, axis: int) -> int:
        if not 0 <= axis < self.dim:
            raise LatticeRangeError(f"Axis {axis} out of range for dim {self.dim}")
        return axis

    def contains(self, n: Sequence[int]) -> bool:
        return len(n) == self.dim and all(abs(int(c)) <= self.n_max for c in n)

    def transfer_range(self) -> np.ndarray:
        """All transfers with |q_i| <= 2*n_max, row-major"""
        values = range(-2 * self.n_max, 2 * self.n_max + 1)
        return np.array(list(itertools.product(values, repeat=self.dim)), dtype=np.int64)

    def shift_map(self, q: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        """Flat indices (src, tgt) of every source n with n+q inside the window"""
        return _shift_map(self, self.check_transfer(q))

    def to_dict(self) -> Dict[str, float]:
        return {"dim": self.dim, "n_max": self.n_max,
                "box_length": self.box_length, "hbar": self.hbar}

    @classmethod
    def from_dict(cls, data: Dict) -> "BoxLattice":
        return cls(dim=int(data["dim"]), n_max=int(data["n_max"]),
                   box_length=float(data["box_length"]), hbar=float(data.get("hbar", 1.0)))


@lru_cache(maxsize=8192)
def _shift_map(lat: BoxLattice, q: MomentumIndex) -> Tuple[np.ndarray, np.ndarray]:
    shifted = lat.indices + np.asarray(q, dtype=np.int64)
    valid = np.all(np.abs(shifted) <= lat.n_max, axis=1)
    src = np.nonzero(valid)[0]
    tgt = (shifted[valid] + lat.n_max) @ lat._strides
    src.setflags(write=False)
    tgt.setflags(write=False)
    return src, tgt


def momentum_value(lat: BoxLattice, n: Sequence[int]) -> np.ndarray:
    """Momentum (2*pi*hbar/L)*n of the plane wave |n>"""
    n = lat.check_index(n)
    return lat.momentum_quantum * np.asarray(n, dtype=float)


def flat_index(lat: BoxLattice, n: Sequence[int]) -> int:
    n = lat.check_index(n)
    return int((np.asarray(n, dtype=np.int64) + lat.n_max) @ lat._strides)


def unflatten(lat: BoxLattice, i: int) -> MomentumIndex:
    i = int(i)
    if not 0 <= i < lat.size:
        raise LatticeRangeError(f"Flat index {i} outside [0, {lat.size})")
    return tuple(int(c) for c in lat.indices[i])
