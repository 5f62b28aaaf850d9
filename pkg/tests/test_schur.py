import numpy as np
import pytest
from hypothesis import given, seed
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from modules import Errors, Lattice, Model, Schur
from modules.DualOperator import DualOperator
from modules.Lattice import SiteSet

SIZE = 6
TWO_BY_TWO = np.array([[2.0, 1.0], [1.0, 2.0]])


@pytest.fixture
def random_operator(golden, rng) -> DualOperator:
    return DualOperator(golden, Model.random_potential(rng, 2, 3, 1e-2))


def lowest(op: DualOperator, S: SiteSet, k: float) -> float:
    return float(np.linalg.eigvalsh(op.restrict(S, k).entries)[0])


def test_schur_complement_examples():
    np.testing.assert_allclose(Schur.schur_complement(TWO_BY_TWO, [0]), [[1.5]])
    block_diagonal = np.diag([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(Schur.schur_complement(block_diagonal, [0]), np.diag([2.0, 3.0]))


def test_block_inverse_examples():
    handle = Schur.block_inverse(TWO_BY_TWO, [[0], [1]])
    np.testing.assert_allclose(handle.inverse, [[2 / 3, -1 / 3], [-1 / 3, 2 / 3]])
    assert handle.consistent
    identity = Schur.block_inverse(np.eye(5), [[4, 1], [0], [2, 3]])
    np.testing.assert_allclose(identity.inverse, np.eye(5), atol=1e-15)


@seed(1)
@given(
    entries=arrays(np.float64, (SIZE, SIZE), elements=st.floats(min_value=-1.0, max_value=1.0)),
    labels=st.lists(st.integers(0, 2), min_size=SIZE, max_size=SIZE),
)
def test_block_inverse_matches_dense(entries, labels):
    M = entries + entries.T + 20 * np.eye(SIZE)
    blocks = [np.flatnonzero(np.array(labels) == b) for b in range(3)]
    handle = Schur.block_inverse(M, blocks)
    np.testing.assert_allclose(handle.inverse, np.linalg.inv(M), atol=1e-10)


def test_block_inverse_rejects_bad_partitions():
    with pytest.raises(ValueError):
        Schur.block_inverse(TWO_BY_TWO, [[0]])
    with pytest.raises(ValueError):
        Schur.BlockPartition(SiteSet.of([(0, 0), (1, 0)]), (SiteSet.of([(0, 0)]), SiteSet.of([(0, 0), (1, 0)])))
    with pytest.raises(Errors.SingularBlock):
        Schur.block_inverse(np.array([[0.0, 1.0], [1.0, 0.0]]), [[0], [1]])


def test_resolvent_by_singletons(random_operator):
    S = Lattice.ball(2, 2)
    E = lowest(random_operator, S, 0.2) - 1.0
    M = E * np.eye(len(S)) - random_operator.restrict(S, 0.2).entries
    partition = Schur.BlockPartition(S, tuple(SiteSet.of([n]) for n in S))
    handle = Schur.block_inverse(M, partition, E)
    np.testing.assert_allclose(handle.inverse, np.linalg.inv(M), atol=1e-10)
    assert handle.sites == S


def test_multiscale_inverse(random_operator, zero_operator, golden):
    S = Lattice.ball(2, 2)
    k = 0.2
    E = lowest(random_operator, S, k) - 1.0
    dense = Schur.resolvent(random_operator, E, S, k).inverse
    unclustered = Schur.multiscale_inverse(random_operator, E, S, k, [])
    np.testing.assert_allclose(unclustered.inverse, dense, atol=1e-10)
    whole = Schur.multiscale_inverse(random_operator, E, S, k, [S])
    np.testing.assert_allclose(whole.inverse, dense, atol=1e-10)
    split = Schur.multiscale_inverse(random_operator, E, S, k, [SiteSet.of([(0, 0), (1, 0)]), SiteSet.of([(0, 2)])])
    np.testing.assert_allclose(split.inverse, dense, atol=1e-10)

    diagonal = Schur.multiscale_inverse(zero_operator, E, S, k, [])
    expected = np.diag([1 / (E - zero_operator.v(n, k)) for n in S])
    np.testing.assert_allclose(diagonal.inverse, expected, atol=1e-14)


def test_multiscale_inverse_refuses_resonant_sites(zero_operator):
    S = Lattice.ball(1, 2)
    with pytest.raises(Errors.RegimeError):
        Schur.multiscale_inverse(zero_operator, zero_operator.v((1, 0), 0.2), S, 0.2, [])


def test_q_function(golden, zero_operator, make_harmonic):
    S = Lattice.ball(2, 2)
    assert Schur.q_function(zero_operator, (0, 0), S, 0.2, -5.0) == 0
    op = DualOperator(golden, make_harmonic(1e-2))
    n = (0, 1)
    pair = SiteSet.of([(0, 0), n])
    E = -3.0
    assert Schur.q_function(op, (0, 0), pair, 0.2, E) == pytest.approx(1e-4 / (E - op.v(n, 0.2)))


def test_g_function(golden, zero_operator, random_operator):
    S = Lattice.ball(2, 2)
    mp, mm = (0, 1), (0, -1)
    assert Schur.g_function(zero_operator, mp, mm, S, 0.2, -5.0) == 0
    pair = SiteSet.of([mp, mm])
    assert Schur.g_function(random_operator, mp, mm, pair, 0.2, -5.0) == random_operator.entry(mp, mm, 0.2)
    forward = Schur.g_function(random_operator, mp, mm, S, 0.2, -5.0)
    backward = Schur.g_function(random_operator, mm, mp, S, 0.2, -5.0)
    assert forward == pytest.approx(np.conj(backward))


def test_f_vector(zero_operator, random_operator):
    S = Lattice.ball(2, 2)
    assert all(value == 0 for value in Schur.f_vector(zero_operator, (0, 0), S, 0.2, -5.0).values())
    n = (1, 0)
    F = Schur.f_vector(random_operator, (0, 0), SiteSet.of([(0, 0), n]), 0.2, -5.0)
    assert F[n] == pytest.approx(random_operator.entry(n, (0, 0), 0.2) / (-5.0 - random_operator.v(n, 0.2)))


def test_fixed_point_vector_is_an_eigenvector(random_operator):
    S = Lattice.ball(2, 2)
    k = 0.05
    system = Schur.ReducedSystem(random_operator, S, k, ((0, 0),))
    E = random_operator.v((0, 0), k)
    for _ in range(60):
        E = random_operator.v((0, 0), k) + system.Q((0, 0), E)
    phi = system.phi((0, 0), E)
    vector = np.array([phi[n] for n in S])
    H = random_operator.restrict(S, k).entries
    assert np.linalg.norm(H @ vector - E * vector) <= 1e-9 * np.linalg.norm(vector)


def test_resolvent_derivative_zero_potential(zero_operator, golden):
    S = Lattice.ball(1, 2)
    E, k = -2.0, 0.2
    derivative = Schur.resolvent_derivative(zero_operator, E, S, k)
    expected = [2 * (2 * np.pi) ** 2 * (golden.dot(n) + k) / (E - zero_operator.v(n, k)) ** 2 for n in S]
    np.testing.assert_allclose(derivative, np.diag(expected), atol=1e-14)


@pytest.mark.parametrize("order", [1, 2])
def test_resolvent_derivative_matches_differences(random_operator, order):
    S = Lattice.ball(2, 2)
    k = 0.2
    E = lowest(random_operator, S, k) - 1.0
    exact = Schur.resolvent_derivative(random_operator, E, S, k, order)
    step = 1e-5 if order == 1 else 1e-4
    fd = Schur.fd_resolvent_derivative(random_operator, E, S, k, order, step=step)
    assert np.abs(exact - fd).max() <= 1e-6 * max(1.0, np.abs(exact).max())
