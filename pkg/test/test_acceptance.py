import itertools

import numpy as np
import pytest

from channels.covariant import (CovariantChannel, DenseKrausChannel, TransferBlock, apply, covariance_check,
                                covariant_average, densify, uniform_displacements)
from channels.families import build_boost_family, half_box_projectors
from channels.sampling import random_covariant, random_momentum_diagonal
from diagnostics.classify import ChannelClass, classify_channel, delta_tolerance, measure_probe_deltas, probe_suite
from diagnostics.diffusion import (direct_moments_change, spread_change_full, two_mode_delta_formula,
                                   two_mode_state)
from diagnostics.transfer import transfer_distribution
from lattice.box import flat_index
from states.density import (fidelity_with_pure, from_pure, momentum_spread, plane_wave, superposition,
                            trace_distance)
from states.sampling import random_density
from utils.helpers import make_rng

N_CHANNELS = 200
AMPLITUDES = [1.0, 0.5, 2.0, 1j, 0.3 - 0.7j]


def test_momentum_diagonal_channels_never_change_spread(lat1):
    for i in range(N_CHANNELS):
        rng = make_rng(100, i)
        ch = random_momentum_diagonal(lat1, int(rng.integers(1, 5)), rng)
        for _ in range(20):
            rho = random_density(lat1, rng)
            assert abs(spread_change_full(ch, rho, 0).delta) <= 1e-10
            out = apply(ch, rho)
            assert abs(momentum_spread(out, 0) - momentum_spread(rho, 0)) <= 1e-10
        for n in lat1.indices:
            pw = from_pure(plane_wave(lat1, n))
            assert trace_distance(apply(ch, pw), pw) <= 1e-10


def test_transferring_channels_always_spread(lat1):
    centre = flat_index(lat1, (0,))
    checked = 0
    for i in range(N_CHANNELS):
        rng = make_rng(200, i)
        ch = random_covariant(lat1, 2, int(rng.integers(1, 3)), rng, symmetric=True)
        assert max(np.max(b.mass()) for b in ch.blocks if b.q != (0,)) >= 0.01
        variance = transfer_distribution(ch, (0,)).variance(0)
        assert variance > 0
        for _ in range(20):
            rho = random_density(lat1, rng)
            weight = rho.populations()[centre]
            if weight < 0.01:
                continue
            checked += 1
            delta = spread_change_full(ch, rho, 0).delta
            assert delta > 0
            assert delta >= variance * weight - 1e-12
    assert checked > N_CHANNELS


def test_full_formula_matches_dense_traces(lat1, lat2):
    shifted = 0
    for i in range(100):
        rng = make_rng(300, i)
        lat = lat1 if i % 2 == 0 else lat2
        ch = random_covariant(lat, 2, 1, rng)
        rho = random_density(lat, rng)
        for axis in range(lat.dim):
            entry = spread_change_full(ch, rho, axis)
            d, big_d = direct_moments_change(ch, rho, axis)
            assert np.isclose(entry.d, d, rtol=1e-10, atol=1e-12)
            assert np.isclose(entry.D, big_d, rtol=1e-10, atol=1e-12)
            shifted += abs(d) > 1e-6
    assert shifted > 0


@pytest.mark.parametrize("dim, modes", [(1, ["reflecting"]), (2, ["reflecting", "reflecting"]),
                                        (2, ["reflecting", "constant"])])
def test_boosts_keep_spread_and_purity(lat1, lat2, dim, modes):
    lat = lat1 if dim == 1 else lat2
    ch = build_boost_family(lat, [0] * dim, modes)
    result = classify_channel(ch)
    assert result.label == ChannelClass.PURE_BOOST
    assert result.consistent

    flip = np.array([-1 if m == "reflecting" else 1 for m in modes])
    for n in lat.indices:
        out = apply(ch, from_pure(plane_wave(lat, n)))
        assert fidelity_with_pure(out, plane_wave(lat, n * flip)) >= 1 - 1e-10

    pairs = [((0,) * dim, (1,) + (0,) * (dim - 1)), ((-2,) * dim, (1,) * dim)]
    for n0, m0 in pairs:
        for a, b in itertools.product(AMPLITUDES, repeat=2):
            rho = two_mode_state(ch, n0, m0, a, b)
            for axis in range(dim):
                delta = spread_change_full(ch, rho, axis).delta
                assert abs(delta) <= 1e-12
                assert abs(delta - two_mode_delta_formula(ch, n0, m0, a, b, axis)) <= 1e-12


def near_diagonal(lat, leak_mass):
    leak = np.full(lat.size, np.sqrt(leak_mass))
    blocks = [TransferBlock.build(lat, 0, (0,), np.sqrt(1.0 - leak ** 2)),
              TransferBlock.build(lat, 1, (1,), leak)]
    return CovariantChannel(lat, blocks, validate=False)


def test_zero_spread_change_means_no_transfer(lat1):
    channels = [random_momentum_diagonal(lat1, 3, make_rng(400, i)) for i in range(20)]
    channels += [random_covariant(lat1, 2, 1, make_rng(401, i)) for i in range(20)]
    channels += [near_diagonal(lat1, 1e-13), near_diagonal(lat1, 1e-8)]
    probes = probe_suite(lat1, seed=4)
    tol = delta_tolerance(lat1, 1e-12)

    diagonal = 0
    for ch in channels:
        if np.max(np.abs(measure_probe_deltas(ch, probes))) > tol:
            continue
        if classify_channel(ch, tol=1e-12, check_consistency=False).label != ChannelClass.MOMENTUM_DIAGONAL:
            continue
        diagonal += 1
        for n in lat1.indices:
            assert transfer_distribution(ch, n).off_center_mass() < 1e-10
    assert diagonal == 21


def test_covariant_averages_are_covariant(lat1, lat2):
    for lat in (lat1, lat2):
        rng = make_rng(500, lat.dim)
        ops = [rng.normal(size=(lat.size, lat.size)) + 1j * rng.normal(size=(lat.size, lat.size))
               for _ in range(3)]
        averaged = covariant_average(DenseKrausChannel.completed(lat, ops))
        assert averaged.completeness_deviation() <= 1e-10
        assert covariance_check(densify(averaged), uniform_displacements(lat, 16)) <= 1e-10

    counter = half_box_projectors(lat1)
    probe = from_pure(plane_wave(lat1, (0,)))
    mixed = [probe, from_pure(superposition(lat1, [(1.0, (0,)), (1.0, (1,))]))]
    assert covariance_check(counter, uniform_displacements(lat1, 16), mixed) > 0.01
