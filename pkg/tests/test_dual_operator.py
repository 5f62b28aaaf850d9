import math

import numpy as np
import pytest
from hypothesis import given, seed
from hypothesis import strategies as st

from modules import DualOperator as Dual
from modules import Errors, Lattice, Model
from modules.DualOperator import DualOperator, Normalization
from modules.Lattice import SiteSet

TWO_PI_SQ = (2 * math.pi) ** 2


@pytest.fixture
def random_operator(golden, rng) -> DualOperator:
    return DualOperator(golden, Model.random_potential(rng, 2, 3, 1e-2))


def test_entries(zero_operator, random_operator, rng):
    assert zero_operator.entry((0, 0), (1, 0), 0.3) == 0
    assert zero_operator.entry((0, 0), (0, 0), 0.3) == pytest.approx(3.5531, abs=1e-4)
    sites = Lattice.ball(3, 2).sites
    for _ in range(20):
        m, n = (sites[i] for i in rng.integers(0, len(sites), size=2))
        assert random_operator.entry(m, n, 0.2) == pytest.approx(np.conj(random_operator.entry(n, m, 0.2)))


def test_restrict_single_site(zero_operator):
    M = zero_operator.restrict(SiteSet.of([(0, 0)]), 0.3)
    np.testing.assert_allclose(M.entries, [[TWO_PI_SQ * 0.09]])


def test_restrict_zero_potential_is_diagonal(zero_operator, golden):
    S = Lattice.ball(1, 2)
    M = zero_operator.restrict(S, 0.1)
    expected = [TWO_PI_SQ * (golden.dot(n) + 0.1) ** 2 for n in S]
    np.testing.assert_allclose(M.entries, np.diag(expected))


def test_restrict_matches_entry(random_operator):
    S = Lattice.ball(2, 2)
    M = random_operator.restrict(S, 0.2, Normalization.normalized)
    for i, m in enumerate(S):
        for j, n in enumerate(S):
            assert M.entries[i, j] == pytest.approx(random_operator.entry(m, n, 0.2, Normalization.normalized))
    np.testing.assert_allclose(M.entries, M.entries.conj().T)


def test_restrict_is_deterministic(random_operator):
    S = Lattice.ball(2, 2)
    shuffled = SiteSet.of(reversed(S.sites))
    np.testing.assert_array_equal(random_operator.restrict(S, 0.2).entries, random_operator.restrict(shuffled, 0.2).entries)


def test_restrict_budget(golden, zero_potential):
    op = DualOperator(golden, zero_potential, budget=10)
    with pytest.raises(Errors.BudgetExceeded):
        op.restrict(Lattice.ball(3, 2), 0.1)
    with pytest.raises(ValueError):
        op.restrict(SiteSet((), 2), 0.1)


@pytest.mark.parametrize("k, gamma", [(0.0, 1), (0.74, 1), (0.75, 1), (1.0, 1), (1.2, 2), (-2.5, 3)])
def test_gamma(k, gamma):
    assert Dual.gamma_for(k) == gamma
    assert Dual.lam(k) == 256 * gamma


def test_normalized_scale(zero_operator):
    raw = zero_operator.v((1, 0), 0.2)
    assert zero_operator.v((1, 0), 0.2, Normalization.normalized) == pytest.approx(raw / (TWO_PI_SQ * 256))


def test_cocycle(zero_operator, random_operator):
    S = Lattice.ball(2, 2)
    assert random_operator.cocycle_check((0, 0), S, 0.2) == 0
    assert zero_operator.cocycle_check((1, 0), S, 0.2) <= 1e-12
    assert random_operator.cocycle_check((1, 0), S, 0.2) <= 1e-12
    assert random_operator.cocycle_check((-1, 2), S, 0.35) <= 1e-12


def test_reflection_conjugation(golden, zero_operator, random_operator, rng):
    S = Lattice.ball(2, 2)
    even = DualOperator(golden, Model.random_potential(rng, 2, 3, 1e-2, real_even=True))
    assert zero_operator.reflection_conjugation_check(S, 0.2) <= 1e-12
    assert even.reflection_conjugation_check(S, 0.2) <= 1e-12
    assert random_operator.reflection_conjugation_check(S, 0.2) <= 1e-12


def test_dense_spectrum_examples(zero_operator, golden):
    single = Dual.dense_spectrum(zero_operator.restrict(SiteSet.of([(0, 0)]), 0.3))
    np.testing.assert_allclose(single.values, [TWO_PI_SQ * 0.09])
    pair = Dual.dense_spectrum(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(pair.values, [1.0, 3.0])
    S = Lattice.ball(1, 2)
    five = Dual.dense_spectrum(zero_operator.restrict(S, 0.1))
    np.testing.assert_allclose(five.values, sorted(TWO_PI_SQ * (golden.dot(n) + 0.1) ** 2 for n in S))


def test_dense_spectrum_rejects_non_finite():
    with pytest.raises(Errors.InvalidConfig):
        Dual.dense_spectrum(np.array([[np.nan]]))


@seed(5)
@given(k=st.floats(-0.7, 0.7), shift=st.tuples(st.integers(-2, 2), st.integers(-2, 2)))
def test_cocycle_property(k, shift):
    op = DualOperator(Model.Frequency((1.0, (math.sqrt(5) - 1) / 2), 0.1, 3.0), Model.random_potential(np.random.default_rng(3), 2, 2, 1e-2))
    assert op.cocycle_check(shift, Lattice.ball(2, 2), k) <= 1e-10


def test_k_derivative_matches_difference(random_operator):
    S = Lattice.ball(2, 2)
    h = 1e-6
    fd = (np.diag(random_operator.restrict(S, 0.2 + h).entries) - np.diag(random_operator.restrict(S, 0.2 - h).entries)) / (2 * h)
    np.testing.assert_allclose(random_operator.k_derivative(S, 0.2), fd.real, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(random_operator.k_derivative(S, 0.2, order=2), 2 * TWO_PI_SQ)


def test_lookup():
    sites = Lattice.ball(1, 2).array
    found = Dual.lookup(sites, np.array([[0, 1], [5, 5], [-1, 0]]))
    assert found[1] == -1
    np.testing.assert_array_equal(sites[found[[0, 2]]], [[0, 1], [-1, 0]])


def test_resonant_point(zero_operator, golden):
    n = (1, -2)
    assert zero_operator.is_resonant_point(golden.dot(n) / 2, 4) == n
    assert zero_operator.is_resonant_point(0.123456, 2) is None
