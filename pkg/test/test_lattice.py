import numpy as np
import pytest

from lattice.box import BoxLattice, flat_index, momentum_value, unflatten
from utils.errors import LatticeRangeError, ValidationError


def test_momentum_value_scales_with_quantum():
    lat = BoxLattice(dim=1, n_max=3, box_length=2.0, hbar=1.0)
    assert np.allclose(momentum_value(lat, (2,)), [2.0 * np.pi])
    lat3 = BoxLattice(dim=3, n_max=1, box_length=2.0 * np.pi)
    assert np.allclose(momentum_value(lat3, (1, 0, -1)), [1.0, 0.0, -1.0])


def test_momentum_value_out_of_cutoff_raises():
    lat = BoxLattice(dim=1, n_max=3, box_length=1.0)
    with pytest.raises(LatticeRangeError):
        momentum_value(lat, (4,))


def test_flat_index_round_trip_and_order():
    lat = BoxLattice(dim=2, n_max=2, box_length=1.0)
    assert flat_index(lat, (-2, -2)) == 0
    assert flat_index(lat, (-2, -1)) == 1
    assert flat_index(lat, (2, 2)) == lat.size - 1
    for i in range(lat.size):
        assert flat_index(lat, unflatten(lat, i)) == i


def test_flat_index_errors():
    lat = BoxLattice(dim=2, n_max=1, box_length=1.0)
    with pytest.raises(LatticeRangeError):
        flat_index(lat, (0, 2))
    with pytest.raises(LatticeRangeError):
        flat_index(lat, (0,))
    with pytest.raises(LatticeRangeError):
        unflatten(lat, lat.size)


def test_size_and_zero_cutoff():
    assert BoxLattice(dim=3, n_max=2, box_length=1.0).size == 125
    lat = BoxLattice(dim=1, n_max=0, box_length=1.0)
    assert lat.size == 1 and unflatten(lat, 0) == (0,)


def test_invalid_parameters():
    with pytest.raises(ValidationError):
        BoxLattice(dim=4, n_max=1, box_length=1.0)
    with pytest.raises(ValidationError):
        BoxLattice(dim=1, n_max=-1, box_length=1.0)
    with pytest.raises(ValidationError):
        BoxLattice(dim=1, n_max=1, box_length=0.0)


def test_shift_map_keeps_targets_in_window():
    lat = BoxLattice(dim=1, n_max=2, box_length=1.0)
    src, tgt = lat.shift_map((1,))
    assert list(src) == [0, 1, 2, 3]
    assert list(tgt) == [1, 2, 3, 4]
    src, _ = lat.shift_map((4,))
    assert list(src) == [0]
    with pytest.raises(LatticeRangeError):
        lat.shift_map((5,))


def test_lattice_dict_round_trip():
    lat = BoxLattice(dim=2, n_max=3, box_length=1.5, hbar=0.5)
    assert BoxLattice.from_dict(lat.to_dict()) == lat


def test_momentum_value_literal_examples():
    lat = BoxLattice(dim=1, n_max=4, box_length=2.0 * np.pi)
    assert np.allclose(momentum_value(lat, (3,)), [3.0])
    assert np.allclose(momentum_value(lat, (0,)), [0.0])
    lat3 = BoxLattice(dim=3, n_max=2, box_length=1.0)
    assert np.allclose(momentum_value(lat3, (1, -2, 0)), [2.0 * np.pi, -4.0 * np.pi, 0.0])


def test_momentum_value_is_odd():
    lat = BoxLattice(dim=3, n_max=2, box_length=1.7, hbar=0.3)
    for n in lat.indices:
        assert np.array_equal(momentum_value(lat, -n), -momentum_value(lat, n))


def test_one_dimensional_index_order():
    lat = BoxLattice(dim=1, n_max=2, box_length=1.0)
    assert flat_index(lat, (-2,)) == 0
    assert flat_index(lat, (0,)) == 2
    assert [unflatten(lat, i) for i in range(lat.size)] == [(-2,), (-1,), (0,), (1,), (2,)]


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("n_max", [0, 1, 2, 3, 4])
def test_flat_index_is_a_bijection(dim, n_max):
    lat = BoxLattice(dim=dim, n_max=n_max, box_length=1.0)
    assert lat.size == (2 * n_max + 1) ** dim
    seen = set()
    for i in range(lat.size):
        n = unflatten(lat, i)
        assert flat_index(lat, n) == i
        seen.add(n)
    assert len(seen) == lat.size
