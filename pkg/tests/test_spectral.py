import math

import numpy as np
import pytest

from modules import Errors, Lattice, Model, Resonance, Spectral
from modules.DualOperator import Direction, DualOperator, Normalization, dense_spectrum
from modules.Lattice import SiteSet
from modules.Model import Potential
from modules.Spectral import RegimeTag

TWO_PI_SQ = (2 * math.pi) ** 2
N0 = (0, 1)


def uncoupled(golden) -> DualOperator:
    return DualOperator(golden, Potential({N0: 1 + 0j, (0, -1): 1 + 0j}, 0.0, 0.5, 2))


def test_eigen_simple_without_coupling(golden):
    op = uncoupled(golden)
    record = Spectral.eigen_simple(op, (0, 0), Lattice.ball(3, 2), 0.2)
    assert record.E == op.v((0, 0), 0.2)
    assert record.regime == RegimeTag.nonresonant
    assert record.phi[(0, 0)] == 1
    assert all(value == 0 for n, value in record.phi.items() if n != (0, 0))


def test_eigen_simple_two_sites(golden, make_harmonic):
    op = DualOperator(golden, make_harmonic(1e-2))
    k = 0.1
    v0, v1 = op.v((0, 0), k), op.v(N0, k)
    record = Spectral.eigen_simple(op, (0, 0), SiteSet.of([(0, 0), N0]), k)
    expected = ((v0 + v1) - math.sqrt((v1 - v0) ** 2 + 4e-4)) / 2
    assert record.E == pytest.approx(expected, rel=1e-12)
    assert record.residual <= 1e-12


def test_eigen_simple_matches_dense(golden, rng):
    op = DualOperator(golden, Model.random_potential(rng, 2, 4, 1e-3))
    record = Spectral.eigen_simple(op, (0, 0), Lattice.ball(4, 2), 0.2)
    assert record.regime == RegimeTag.nonresonant
    assert abs(record.E - record.oracle) <= 1e-9
    assert record.residual <= 1e-9


def test_eigen_pair_without_coupling(golden):
    op = uncoupled(golden)
    k = Resonance.k_point(N0, golden) + 0.01
    pair = Spectral.eigen_pair(op, Spectral.paired_box(N0, 3), k, (0, 0), N0)
    low, high = sorted((op.v((0, 0), k), op.v(N0, k)))
    assert pair.E_minus == pytest.approx(low, abs=1e-12)
    assert pair.E_plus == pytest.approx(high, abs=1e-12)
    assert pair.sandwich


def test_eigen_pair_two_sites(golden, make_harmonic):
    op = DualOperator(golden, make_harmonic(1e-3))
    k = Resonance.k_point(N0, golden)
    vp, vm = op.v((0, 0), k), op.v(N0, k)
    pair = Spectral.eigen_pair(op, SiteSet.of([(0, 0), N0]), k, (0, 0), N0)
    half = math.sqrt(((vp - vm) / 2) ** 2 + 1e-6)
    assert pair.E_minus == pytest.approx((vp + vm) / 2 - half, abs=1e-12)
    assert pair.E_plus == pytest.approx((vp + vm) / 2 + half, abs=1e-12)
    assert pair.residual <= 1e-12


def test_eigen_pair_matches_dense(harmonic_operator, golden):
    k = Resonance.k_point(N0, golden) + 1e-4
    S = Spectral.paired_box(N0, 4)
    pair = Spectral.eigen_pair(harmonic_operator, S, k, (0, 0), N0)
    values = dense_spectrum(harmonic_operator.restrict(S, k)).values
    nearest = np.sort(values[np.argsort(np.abs(values - harmonic_operator.v((0, 0), k)))[:2]])
    assert abs(pair.E_minus - nearest[0]) <= 1e-9
    assert abs(pair.E_plus - nearest[1]) <= 1e-9
    assert pair.sandwich
    assert pair.residual <= 1e-9


def test_paired_box_is_reflection_invariant():
    S = Spectral.paired_box((1, -1), 3)
    assert Lattice.transform(S, Lattice.Transform.reflect_through, (1, -1)) == S
    assert Lattice.ball(3, 2).issubset(S)


def test_gap_without_potential(zero_operator, golden):
    record = Spectral.gap_at(zero_operator, N0, box_radius=4)
    v = zero_operator.v((0, 0), Resonance.k_point(N0, golden))
    assert record.width == 0
    assert record.E_minus == pytest.approx(v)
    with pytest.raises(ValueError):
        Spectral.gap_at(zero_operator, (0, 0))


@pytest.mark.parametrize("epsilon", [1e-3, 1e-4])
def test_single_harmonic_gap(golden, make_harmonic, epsilon):
    op = DualOperator(golden, make_harmonic(epsilon))
    record = Spectral.gap_at(op, N0, box_radius=8)
    assert abs(record.width - 2 * epsilon) <= 5 * epsilon**2
    assert record.E_minus == pytest.approx(record.oracle_minus, abs=1e-9)
    assert record.E_plus == pytest.approx(record.oracle_plus, abs=1e-9)


@pytest.mark.parametrize("epsilon", [1e-3, 1e-4])
def test_single_harmonic_leaves_other_gaps_second_order(golden, make_harmonic, epsilon):
    op = DualOperator(golden, make_harmonic(epsilon))
    others = [m for m in Lattice.ball(3, 2) if any(m) and m not in (N0, Lattice.neg(N0))]
    assert len(others) == 22
    for m in others:
        assert Spectral.gap_at(op, m, box_radius=8).width <= 10 * epsilon**2


def test_gap_widths_obey_the_decay_law(golden, rng):
    sites = [m for m in Lattice.ball(4, 2) if any(m)]
    for _ in range(20):
        op = DualOperator(golden, Model.random_potential(rng, 2, 3, 1e-4))
        for m in sites:
            record = Spectral.gap_at(op, m, box_radius=4)
            assert 0 <= record.width <= 2e-4 * math.exp(-0.5 * Lattice.l1_norm(m) / 2)


def test_gap_widths_are_reflection_symmetric(harmonic_operator):
    for n0 in ((0, 1), (1, -1)):
        right = Spectral.gap_at(harmonic_operator, n0, box_radius=6)
        left = Spectral.gap_at(harmonic_operator, Lattice.neg(n0), box_radius=6)
        assert right.width == pytest.approx(left.width, rel=1e-8, abs=1e-14)


def test_band_without_potential(zero_operator):
    point = Spectral.band_point(zero_operator, 0.2, 8, 0.08)
    assert point.regime == RegimeTag.nonresonant
    assert point.E == pytest.approx(TWO_PI_SQ * 0.04, rel=1e-14)
    assert point.error is None


def test_band_symmetry(harmonic_operator):
    grid = [0.1, 0.15, 0.2, 0.3]
    right = Spectral.band(harmonic_operator, grid)
    left = Spectral.band(harmonic_operator, [-k for k in grid])
    for a, b in zip(right, left):
        assert a.error is None and b.error is None
        assert abs(a.E - b.E) <= 1e-10 * max(1.0, abs(a.E))


def test_band_near_a_resonance(harmonic_operator, golden):
    k = Resonance.k_point(N0, golden) + 1e-3
    point = Spectral.band_point(harmonic_operator, k, 8, Spectral.default_pair_threshold(harmonic_operator))
    assert point.regime == RegimeTag.pair
    assert point.partner == N0
    values = dense_spectrum(harmonic_operator.restrict(Spectral.paired_box(N0, 8), k)).values
    assert np.abs(values - point.E).min() <= 1e-9


def test_band_at_a_resonance_point(harmonic_operator, golden):
    k = Resonance.k_point(N0, golden)
    point = Spectral.band_point(harmonic_operator, k, 6, 0.25)
    assert point.regime == RegimeTag.gap
    assert point.partner == N0
    assert point.E == pytest.approx(Spectral.gap_at(harmonic_operator, N0, box_radius=6).E_minus)


def test_band_is_monotone(zero_operator, harmonic_operator):
    grid = np.linspace(0.05, 0.45, 9)
    report = Spectral.monotone_defect(Spectral.band(zero_operator, grid, pair_threshold=0.0), zero_operator)
    assert report.checked == 8
    assert report.holds
    smooth = [0.1, 0.15, 0.2, 0.3]
    assert Spectral.monotone_defect(Spectral.band(harmonic_operator, smooth), harmonic_operator).holds


def test_monotone_skips_the_lower_side_across_a_resonance(harmonic_operator):
    # radius 1 leaves resonance points at +-0.309 and +-0.5 only
    drop = [Spectral.BandPoint(0.30, 5.0, RegimeTag.nonresonant), Spectral.BandPoint(0.32, 4.999, RegimeTag.nonresonant)]
    report = Spectral.monotone_defect(drop, harmonic_operator, radius=1)
    assert report.checked == 1
    assert report.holds


def test_monotone_lower_side_allows_the_defect(harmonic_operator):
    flat = [Spectral.BandPoint(0.10, 5.0, RegimeTag.nonresonant), Spectral.BandPoint(0.15, 5.0, RegimeTag.nonresonant)]
    strict = Spectral.monotone_defect(flat, harmonic_operator, radius=1)
    assert [v[:2] for v in strict.violations] == [(0.10, 0.15)]
    assert Spectral.monotone_defect(flat, harmonic_operator, radius=1, delta0=0.1).holds


def test_feynman_without_potential(zero_operator, golden):
    S = Lattice.ball(2, 2)
    k = 0.1
    record = Spectral.feynman_derivative(zero_operator, S, k)
    expected = sorted((zero_operator.v(n, k), 2 * TWO_PI_SQ * (golden.dot(n) + k)) for n in S)
    np.testing.assert_allclose(record.values, [v for v, _ in expected])
    np.testing.assert_allclose(record.derivatives, [d for _, d in expected])


@pytest.mark.parametrize("direction", list(Direction))
def test_feynman_matches_differences(golden, rng, direction):
    op = DualOperator(golden, Model.random_potential(rng, 2, 3, 1e-3))
    S = Lattice.ball(2, 2)
    record = Spectral.feynman_derivative(op, S, 0.1, direction)
    fd = Spectral.fd_eigen_derivative(op, S, 0.1, direction, step=1e-6)
    assert np.abs(record.derivatives - fd).max() <= 1e-6 * max(1.0, np.abs(record.derivatives).max())


def test_normalized_derivatives_are_small(harmonic_operator, golden):
    k = Resonance.k_point(N0, golden) + 0.05
    record = Spectral.feynman_derivative(harmonic_operator, Lattice.ball(2, 2), k, normalization=Normalization.normalized)
    assert np.abs(record.derivatives).max() <= 2


def test_feynman_refuses_degenerate_levels(zero_operator, golden):
    S = Spectral.paired_box(N0, 2)
    with pytest.raises(Errors.NearDegeneracy):
        Spectral.feynman_derivative(zero_operator, S, Resonance.k_point(N0, golden))


def test_eigenvector_decay(harmonic_operator):
    record = Spectral.eigen_simple(harmonic_operator, (0, 0), Lattice.ball(6, 2), 0.2)
    report = Spectral.decay_check(record, SiteSet.of([(0, 0)]), 1e-3, 0.5)
    assert report.holds
    assert report.worst_ratio < 1


def test_pair_symmetry_and_splitting(harmonic_operator, golden):
    S = Spectral.paired_box(N0, 4)
    assert Spectral.pair_symmetry(harmonic_operator, N0, 1e-3, S) <= 1e-9
    k = Resonance.k_point(N0, golden) + 1e-3
    split, floor = Spectral.splitting_check(harmonic_operator, N0, k, S, Spectral.k0_constant(abs(k), 1e-3))
    assert split > floor
    assert split >= 2e-3 * (1 - 1e-3)
