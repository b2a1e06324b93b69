# Module: evolve.py
# Purpose: Fixed-step RK4 integration of drho/dt = -(i/hbar)[H, rho] + L[rho]

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

from lindblad.generator import LindbladGenerator, total_apply
from states.density import DensityMatrix
from utils.errors import InvariantError, LatticeMismatchError, PositivityError, ValidationError

logger = logging.getLogger(__name__)

POSITIVITY_ABORT = -1e-6
INVARIANT_TOL = 1e-8


@dataclass
class Trajectory:
    """Recorded samples of one integration run"""
    dim: int
    times: List[float] = field(default_factory=list)
    traces: List[float] = field(default_factory=list)
    min_eigs: List[float] = field(default_factory=list)
    mean_p: List[List[float]] = field(default_factory=list)
    spread_p: List[List[float]] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    final: Optional[DensityMatrix] = None

    def header(self) -> List[str]:
        return (["t", "trace", "min_eig"] + [f"mean_p_{j}" for j in range(self.dim)]
                + [f"spread_p_{j}" for j in range(self.dim)])

    def rows(self) -> List[list]:
        return [[t, tr, me] + list(mp) + list(sp)
                for t, tr, me, mp, sp in zip(self.times, self.traces, self.min_eigs,
                                              self.mean_p, self.spread_p)]

    def second_moment(self, axis: int) -> np.ndarray:
        """<p_j^2>(t) = spread + mean^2"""
        means = np.array([m[axis] for m in self.mean_p])
        spreads = np.array([s[axis] for s in self.spread_p])
        return spreads + means ** 2


def _record(traj: Trajectory, gen: LindbladGenerator, t: float, x: np.ndarray, keep_states: bool) -> float:
    lat = gen.lattice
    pops = np.real(np.diag(x))
    min_eig = float(linalg.eigvalsh(x)[0])
    traj.times.append(t)
    traj.traces.append(float(np.real(np.trace(x))))
    traj.min_eigs.append(min_eig)
    means = [float(pops @ lat.momenta[:, j]) for j in range(lat.dim)]
    traj.mean_p.append(means)
    spreads = [float(pops @ lat.momenta[:, j] ** 2) - means[j] ** 2 for j in range(lat.dim)]
    traj.spread_p.append([max(s, 0.0) for s in spreads])
    if keep_states:
        traj.states.append(x.copy())
    return min_eig


def rk4_step(gen: LindbladGenerator, x: np.ndarray, h: float) -> np.ndarray:
    k1 = total_apply(gen, x)
    k2 = total_apply(gen, x + 0.5 * h * k1)
    k3 = total_apply(gen, x + 0.5 * h * k2)
    k4 = total_apply(gen, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def evolve(gen: LindbladGenerator, rho0: DensityMatrix, t_final: float, dt: float,
           record_every: int = 1, keep_states: bool = False) -> Trajectory:
    """
    Integrate from t=0 to t_final with step dt (the last step is shortened to
    land on t_final). Raises PositivityError when the smallest eigenvalue
    drops below -1e-6 and InvariantError when a step moves the trace or the
    Hermiticity by more than 1e-8.
    """
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    if t_final < 0:
        raise ValidationError(f"t_final must be non-negative, got {t_final}")
    if rho0.lattice != gen.lattice:
        raise LatticeMismatchError("Generator and initial state live on different lattices")

    n_steps = max(0, math.ceil(t_final / dt - 1e-9))
    traj = Trajectory(dim=gen.lattice.dim)
    x = np.array(rho0.matrix, dtype=complex)
    t = 0.0
    _record(traj, gen, t, x, keep_states)

    for step in range(1, n_steps + 1):
        h = min(dt, t_final - t)
        x = rk4_step(gen, x, h)
        deviation = max(float(np.max(np.abs(x - x.conj().T))), abs(complex(np.trace(x)) - 1.0))
        x = 0.5 * (x + x.conj().T)
        t = t_final if step == n_steps else t + h

        if step % record_every == 0 or step == n_steps:
            min_eig = _record(traj, gen, t, x, keep_states)
        else:
            min_eig = float(linalg.eigvalsh(x)[0])
        if min_eig < POSITIVITY_ABORT:
            raise PositivityError(f"Minimum eigenvalue {min_eig:.3e} at t={t:.6g} below {POSITIVITY_ABORT}",
                                  time=t, min_eigenvalue=min_eig)
        if deviation > INVARIANT_TOL:
            raise InvariantError(f"Trace or Hermiticity off by {deviation:.3e} at t={t:.6g}",
                                 time=t, deviation=deviation)
        logger.debug(f"RK4 step {step}/{n_steps} t={t:.6g} min_eig={min_eig:.3e}")

    traj.final = DensityMatrix(gen.lattice, x, validate=False)
    return traj


def fit_second_moment_slope(traj: Trajectory, axis: int) -> Tuple[float, float, float]:
    """
    Least-squares line through <p_j^2>(t).

    Returns: (slope, intercept, max residual relative to the largest |<p^2>| change)
    """
    times = np.asarray(traj.times)
    values = traj.second_moment(axis)
    if times.size < 2:
        raise ValidationError("Need at least two recorded samples to fit a slope")
    slope, intercept = np.polyfit(times, values, 1)
    residual = np.max(np.abs(values - (slope * times + intercept)))
    scale = max(float(np.max(np.abs(values - values[0]))), 1e-300)
    return float(slope), float(intercept), float(residual / scale)
