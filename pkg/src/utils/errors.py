# Module: errors.py
# Purpose: Exception hierarchy shared by the numerical packages and the runner


class CollapseLabError(Exception):
    """Root of all errors raised by collapse-lab"""


class LatticeRangeError(CollapseLabError, IndexError):
    """Momentum index, flat index or axis outside the lattice window"""


class ValidationError(CollapseLabError, ValueError):
    """A state, channel or generator violates one of its invariants"""


class LatticeMismatchError(ValidationError):
    """Two objects built on different lattices were combined"""


class PositivityError(CollapseLabError):
    """Time evolution drifted below the positivity tolerance"""

    def __init__(self, message: str, time: float = 0.0, min_eigenvalue: float = 0.0):
        super().__init__(message)
        self.time = time
        self.min_eigenvalue = min_eigenvalue


class DegenerateSamplingError(CollapseLabError):
    """Outcome probabilities of a stochastic step could not be sampled"""


class ConfigError(CollapseLabError):
    """Malformed experiment configuration (usage error, exit code 2)"""


class InvariantError(CollapseLabError):
    """An integrated state lost unit trace or Hermiticity"""

    def __init__(self, message: str, time: float = 0.0, deviation: float = 0.0):
        super().__init__(message)
        self.time = time
        self.deviation = deviation
