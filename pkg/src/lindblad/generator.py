# Module: generator.py
# Purpose: Translation-covariant Lindblad generators built from momentum-transfer
#          jump operators, with moment rates and the zero-diffusion reduction

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from lattice.box import BoxLattice, MomentumIndex, unflatten
from states.density import DensityMatrix
from utils.errors import LatticeMismatchError, ValidationError

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class LindbladTerm:
    """Jump operator sum_n values[n] |n+q><n| (zero where n+q leaves the window)"""
    label: str
    q: MomentumIndex
    values: np.ndarray

    @classmethod
    def build(cls, lat: BoxLattice, label: str, q: Sequence[int], values: np.ndarray) -> "LindbladTerm":
        q = lat.check_transfer(q)
        out = np.zeros(lat.size, dtype=complex)
        src, _ = lat.shift_map(q)
        out[src] = np.asarray(values, dtype=complex).reshape(-1)[src]
        out.setflags(write=False)
        return cls(label=str(label), q=q, values=out)


class LindbladGenerator:
    """
    L[rho] = mu sum_t (L_t rho L_t^dag - 1/2 {L_t^dag L_t, rho}), mu = (2 pi hbar / L)^dim,
    plus an optional Hamiltonian applied by the integrator.
    """

    def __init__(self, lattice: BoxLattice, terms: Sequence[LindbladTerm],
                 hamiltonian: Optional[np.ndarray] = None):
        self.lattice = lattice
        self.logger = logging.getLogger(__name__)
        self.terms: Tuple[LindbladTerm, ...] = tuple(terms)
        self.hamiltonian = None if hamiltonian is None else np.asarray(hamiltonian, dtype=complex)

        ok, message = self.check_invariants()
        if not ok:
            raise ValidationError(message)

    def check_invariants(self) -> Tuple[bool, str]:
        size = self.lattice.size
        for term in self.terms:
            if term.values.shape != (size,):
                return False, f"Term {term.label} has {term.values.shape[0]} values, expected {size}"
            if not np.all(np.isfinite(term.values)):
                return False, f"Term {term.label} has non-finite values"
        if self.hamiltonian is not None:
            h = self.hamiltonian
            if h.shape != (size, size):
                return False, f"Hamiltonian shape {h.shape}, expected {(size, size)}"
            if float(np.max(np.abs(h - h.conj().T))) > HERMITIAN_TOL:
                return False, "Hamiltonian is not Hermitian"
        return True, ""

    @property
    def measure(self) -> float:
        return self.lattice.measure

    def decay_rates(self) -> np.ndarray:
        """Gamma(n) = mu sum_t |values_t(n)|^2, the diagonal of sum L^dag L"""
        total = np.zeros(self.lattice.size)
        for term in self.terms:
            total += np.abs(term.values) ** 2
        return self.measure * total


def _check_lattice(gen: LindbladGenerator, rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        if rho.lattice != gen.lattice:
            raise LatticeMismatchError("Generator and state live on different lattices")
        return rho.matrix
    return np.asarray(rho, dtype=complex)


def generator_apply(gen: LindbladGenerator, rho) -> np.ndarray:
    """Dissipative part L[rho]; traceless and Hermitian for Hermitian rho"""
    x = _check_lattice(gen, rho)
    lat = gen.lattice
    out = np.zeros((lat.size, lat.size), dtype=complex)
    for term in gen.terms:
        src, tgt = lat.shift_map(term.q)
        if src.size == 0:
            continue
        v = term.values[src]
        out[np.ix_(tgt, tgt)] += v[:, None] * x[np.ix_(src, src)] * v.conj()[None, :]
    out *= gen.measure

    gamma = gen.decay_rates()
    out -= 0.5 * (gamma[:, None] * x + x * gamma[None, :])
    return out


def hamiltonian_apply(gen: LindbladGenerator, rho) -> np.ndarray:
    """-(i / hbar) [H, rho], zero without a Hamiltonian"""
    x = _check_lattice(gen, rho)
    if gen.hamiltonian is None:
        return np.zeros_like(x)
    h = gen.hamiltonian
    return (-1j / gen.lattice.hbar) * (h @ x - x @ h)


def total_apply(gen: LindbladGenerator, rho) -> np.ndarray:
    return hamiltonian_apply(gen, rho) + generator_apply(gen, rho)


def jump_operator(lat: BoxLattice, term: LindbladTerm) -> np.ndarray:
    op = np.zeros((lat.size, lat.size), dtype=complex)
    src, tgt = lat.shift_map(term.q)
    op[tgt, src] = term.values[src]
    return op


def dense_generator_apply(gen: LindbladGenerator, rho) -> np.ndarray:
    """Elementwise evaluation with full jump matrices"""
    x = _check_lattice(gen, rho)
    out = np.zeros_like(x, dtype=complex)
    for term in gen.terms:
        op = jump_operator(gen.lattice, term)
        effect = op.conj().T @ op
        out += op @ x @ op.conj().T - 0.5 * (effect @ x + x @ effect)
    return gen.measure * out


def rate_table(gen: LindbladGenerator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns: (transfers (Q, dim), f (Q, size)) with f(q, n) = mu sum_{t: q_t = q} |values_t(n)|^2
    """
    table: Dict[MomentumIndex, np.ndarray] = {}
    for term in gen.terms:
        mass = gen.measure * np.abs(term.values) ** 2
        table[term.q] = table[term.q] + mass if term.q in table else mass
    transfers = sorted(table)
    rates = np.array([table[q] for q in transfers]).reshape(len(transfers), gen.lattice.size)
    return np.array(transfers, dtype=np.int64).reshape(len(transfers), gen.lattice.dim), rates


def moment_rates(gen: LindbladGenerator, rho) -> Tuple[List[float], List[float]]:
    """
    (d/dt Tr p_j rho, d/dt Tr p_j^2 rho) per axis from the rate table:
    sum f q~_j rho_nn and sum f (q~_j^2 + 2 n~_j q~_j) rho_nn.
    The Hamiltonian is not included.
    """
    x = _check_lattice(gen, rho)
    lat = gen.lattice
    pops = np.real(np.diag(x))
    transfers, rates = rate_table(gen)

    dp, dp2 = [], []
    for axis in range(lat.dim):
        q_tilde = lat.momentum_quantum * transfers[:, axis].astype(float)
        n_tilde = lat.momenta[:, axis]
        first = q_tilde @ rates
        dp.append(float(first @ pops))
        dp2.append(float((q_tilde ** 2) @ rates @ pops + 2.0 * first @ (n_tilde * pops)))
    return dp, dp2


@dataclass
class ZeroDiffusionResult:
    is_momentum_diagonal: bool
    witness: Optional[Tuple[MomentumIndex, MomentumIndex, float]]  # (q, n, rate mass)


def zero_diffusion_reduce(gen: LindbladGenerator, tol: float = 1e-12) -> ZeroDiffusionResult:
    """True iff every non-zero transfer carries rate mass below tol"""
    transfers, rates = rate_table(gen)
    off = np.any(transfers != 0, axis=1)
    if not np.any(off):
        return ZeroDiffusionResult(True, None)

    sub = rates[off]
    i, n = np.unravel_index(int(np.argmax(sub)), sub.shape)
    q = tuple(int(v) for v in transfers[off][i])
    mass = float(sub[i, n])
    return ZeroDiffusionResult(mass < tol, (q, unflatten(gen.lattice, n), mass))


def zero_generator(lat: BoxLattice) -> LindbladGenerator:
    return LindbladGenerator(lat, [])


def csl_like(lat: BoxLattice, r_c: float, rate: float,
             hamiltonian: Optional[np.ndarray] = None) -> LindbladGenerator:
    """
    Gaussian transfer rates f(q~) = rate (r_c / (hbar sqrt(pi)))^dim exp(-q~^2 r_c^2 / hbar^2).
    A transfer q is kept for source n only if n+q and n-q both fit in the window.
    """
    if not r_c > 0:
        raise ValidationError(f"r_c must be positive, got {r_c}")
    if rate < 0:
        raise ValidationError(f"rate must be non-negative, got {rate}")

    prefactor = rate * (r_c / (lat.hbar * np.sqrt(np.pi))) ** lat.dim
    reach = lat.n_max - np.abs(lat.indices)
    terms = []
    for q in lat.indices:
        q_tilde = lat.momentum_quantum * q.astype(float)
        f = prefactor * np.exp(-float(q_tilde @ q_tilde) * r_c ** 2 / lat.hbar ** 2)
        kept = np.all(np.abs(q) <= reach, axis=1)
        if f == 0.0:
            continue
        terms.append(LindbladTerm.build(lat, "csl", q, np.where(kept, np.sqrt(f), 0.0)))
    return LindbladGenerator(lat, terms, hamiltonian)


def momentum_diagonal_generator(lat: BoxLattice, rates: np.ndarray,
                                phases: Optional[np.ndarray] = None,
                                hamiltonian: Optional[np.ndarray] = None) -> LindbladGenerator:
    """q=0 jump operators sqrt(lambda_k(p)) e^{i phi_k(p)}"""
    rates = np.asarray(rates, dtype=float)
    if rates.ndim == 1:
        rates = rates.reshape(1, -1)
    if rates.shape[1] != lat.size or np.any(rates < 0):
        raise ValidationError(f"rates must be non-negative with shape (K, {lat.size})")
    phases = np.zeros_like(rates) if phases is None else np.asarray(phases, dtype=float).reshape(rates.shape)

    zero = tuple([0] * lat.dim)
    terms = [LindbladTerm.build(lat, f"diag{k}", zero, np.sqrt(rates[k]) * np.exp(1j * phases[k]))
             for k in range(rates.shape[0])]
    return LindbladGenerator(lat, terms, hamiltonian)


def free_hamiltonian(lat: BoxLattice, mass: float) -> np.ndarray:
    """p^2 / 2m"""
    if not mass > 0:
        raise ValidationError(f"mass must be positive, got {mass}")
    return np.diag(np.sum(lat.momenta ** 2, axis=1) / (2.0 * mass)).astype(complex)
