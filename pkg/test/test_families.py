import os

import numpy as np
import pytest

from channels.covariant import apply
from channels.families import (boost_shifts, build_boost, build_boost_family, build_free_evolution, build_grw,
                               build_identity, build_momentum_diagonal, grw_weights, half_box_matrix)
from channels.sampling import random_covariant, random_momentum_diagonal
from conftest import GOLDEN_DIR, TWO_PI
from diagnostics.transfer import transfer_distribution
from files.formats import load_golden_table
from lattice.box import BoxLattice, flat_index
from states.density import from_pure, plane_wave
from states.sampling import random_density
from utils.errors import ValidationError


def same_action(ch, other, lat, rng, count=5):
    for _ in range(count):
        rho = random_density(lat, rng)
        if not np.allclose(apply(ch, rho).matrix, apply(other, rho).matrix, atol=1e-12):
            return False
    return True


def test_zero_boost_and_zero_time_are_identity(lat2, rng):
    identity = build_identity(lat2)
    assert same_action(build_boost(lat2, [0.0, 0.0]), identity, lat2, rng)
    assert same_action(build_free_evolution(lat2, 0.0, 1.0), identity, lat2, rng)


def test_boost_multiplies_coherences_by_phase(lat1, rng):
    rho = random_density(lat1, rng)
    out = apply(build_boost(lat1, [0.4]), rho).matrix
    p = lat1.momenta[:, 0]
    expected = np.exp(-1j * (p[:, None] - p[None, :]) * 0.4) * rho.matrix
    assert np.allclose(out, expected, atol=1e-12)


def test_boost_and_free_evolution_validate_arguments(lat2):
    with pytest.raises(ValidationError):
        build_boost(lat2, [1.0])
    with pytest.raises(ValidationError):
        build_free_evolution(lat2, 1.0, 0.0)


def test_single_unit_momentum_diagonal_is_identity(lat1, rng):
    ch = build_momentum_diagonal(lat1, np.ones((1, lat1.size)), np.zeros((1, lat1.size)))
    assert same_action(ch, build_identity(lat1), lat1, rng)


def test_momentum_diagonal_rejects_bad_tables(lat1):
    with pytest.raises(ValidationError):
        build_momentum_diagonal(lat1, np.full((2, lat1.size), 0.6))
    bad = np.vstack([np.full(lat1.size, 1.5), np.full(lat1.size, -0.5)])
    with pytest.raises(ValidationError):
        build_momentum_diagonal(lat1, bad)
    with pytest.raises(ValidationError):
        build_momentum_diagonal(lat1, np.ones((1, lat1.size + 1)))


def test_plane_waves_are_stationary_under_momentum_diagonal(lat2, rng):
    ch = random_momentum_diagonal(lat2, 3, rng)
    for n in lat2.indices:
        rho = from_pure(plane_wave(lat2, n))
        assert np.allclose(apply(ch, rho).matrix, rho.matrix, atol=1e-12)


def test_grw_zero_strength_is_identity(lat1, rng):
    ch = build_grw(lat1, 1.0, strength=0.0)
    assert same_action(ch, build_identity(lat1), lat1, rng)


def test_grw_rejects_bad_parameters(lat1):
    with pytest.raises(ValidationError):
        build_grw(lat1, 0.0)
    with pytest.raises(ValidationError):
        build_grw(lat1, -1.0)
    with pytest.raises(ValidationError):
        build_grw(lat1, 1.0, strength=1.5)


def test_very_wide_localizer_does_nothing(lat1):
    ch = build_grw(lat1, 10.0 * lat1.box_length)
    for n in lat1.indices:
        td = transfer_distribution(ch, n)
        zero = np.all(td.transfers == 0, axis=1)
        assert td.probs[zero].sum() >= 1.0 - 1e-6


def test_grw_matches_golden_table():
    lat = BoxLattice(dim=1, n_max=8, box_length=TWO_PI)
    golden = load_golden_table(os.path.join(GOLDEN_DIR, "grw_rc1_nmax8_source0.json"))
    td = transfer_distribution(build_grw(lat, 1.0, strength=1.0), (0,))
    table = {tuple(int(v) for v in q): p for q, p in zip(td.transfers, td.probs)}
    for q, p in golden.items():
        assert np.isclose(table.get(q, 0.0), p, atol=1e-12)
    assert np.isclose(sum(golden.values()), 1.0, atol=1e-12)


def test_grw_weights_are_symmetric_and_normalized(lat2):
    weights = grw_weights(lat2, 0.8)
    norm = sum(values ** 2 for values in weights.values())
    assert np.allclose(norm, 1.0, atol=1e-12)
    for q, values in weights.items():
        mirror = tuple(-v for v in q)
        assert np.allclose(values, weights[mirror])


def test_grw_edge_sources_only_use_in_window_transfers(lat1):
    weights = grw_weights(lat1, 0.5)
    edge = flat_index(lat1, (4,))
    assert all(values[edge] == 0 for q, values in weights.items() if q != (0,))


def test_zero_boost_family_is_identity(lat2, rng):
    ch = build_boost_family(lat2, [0, 0], "constant")
    assert same_action(ch, build_identity(lat2), lat2, rng)


def test_constant_boost_family_rejects_window_exit(lat1):
    with pytest.raises(ValidationError):
        build_boost_family(lat1, [1], "constant")


def test_constant_boost_family_shifts_plane_waves(lat1):
    ch = build_boost_family(lat1, [1], "constant", out_of_window="hold")
    for n0 in range(-lat1.n_max, lat1.n_max):
        out = apply(ch, from_pure(plane_wave(lat1, (n0,))))
        assert np.allclose(out.matrix, from_pure(plane_wave(lat1, (n0 + 1,))).matrix, atol=1e-15)
    edge = from_pure(plane_wave(lat1, (lat1.n_max,)))
    assert np.allclose(apply(ch, edge).matrix, edge.matrix)


def test_reflecting_boost_family_mirrors_plane_waves(lat2):
    ch = build_boost_family(lat2, [0, 0], "reflecting")
    for n in lat2.indices:
        out = apply(ch, from_pure(plane_wave(lat2, n)))
        assert np.allclose(out.matrix, from_pure(plane_wave(lat2, -n)).matrix, atol=1e-15)


def test_boost_family_with_phases_stays_complete(lat1, rng):
    phases = rng.uniform(0, TWO_PI, lat1.size)
    ch = build_boost_family(lat1, [0], "reflecting", phases=phases)
    assert ch.completeness_deviation() <= 1e-12


def test_boost_shifts_per_axis_modes(lat2):
    shifts = boost_shifts(lat2, [1, 0], ["constant", "reflecting"])
    assert np.all(shifts[:, 0] == 1)
    assert np.all(shifts[:, 1] == -2 * lat2.indices[:, 1])
    with pytest.raises(ValidationError):
        boost_shifts(lat2, [0, 0], "sideways")
    with pytest.raises(ValidationError):
        boost_shifts(lat2, [0], "constant")


def test_half_box_projectors_sum_to_identity(lat1):
    left = half_box_matrix(lat1, 0, "left")
    right = half_box_matrix(lat1, 0, "right")
    assert np.allclose(left + right, np.eye(lat1.size))
    assert np.allclose(left, left.conj().T)
    assert np.isclose(left[flat_index(lat1, (1,)), flat_index(lat1, (0,))], 1j / np.pi)
    assert left[flat_index(lat1, (2,)), flat_index(lat1, (0,))] == 0


def test_symmetric_random_channel_has_no_mean_shift(lat2, rng):
    ch = random_covariant(lat2, 2, 1, rng, symmetric=True)
    for n in lat2.indices:
        td = transfer_distribution(ch, n)
        assert abs(td.mean(0)) <= 1e-12
        assert abs(td.mean(1)) <= 1e-12


def test_random_covariant_spreads_interior_sources(lat1, rng):
    ch = random_covariant(lat1, 2, 1, rng)
    assert transfer_distribution(ch, (0,)).off_center_mass() >= 0.2 - 1e-12
    with pytest.raises(ValidationError):
        random_covariant(lat1, 2, 0, rng)
    with pytest.raises(ValidationError):
        random_covariant(lat1, 0, 1, rng)
