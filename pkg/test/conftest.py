import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'src')))

from lattice.box import BoxLattice  # noqa: E402

TWO_PI = 2.0 * np.pi
CONFIG_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'config', 'experiments'))
GOLDEN_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'data', 'golden'))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def lat1():
    return BoxLattice(dim=1, n_max=4, box_length=TWO_PI)


@pytest.fixture
def lat2():
    return BoxLattice(dim=2, n_max=2, box_length=TWO_PI)


@pytest.fixture
def lat_wide():
    return BoxLattice(dim=1, n_max=16, box_length=TWO_PI)
