import numpy as np
import pytest
from hypothesis import given, seed
from hypothesis import strategies as st

from modules import Errors, Lattice
from modules.Lattice import SiteSet, Transform

vectors = st.tuples(st.integers(-6, 6), st.integers(-6, 6))
site_sets = st.lists(vectors, min_size=1, max_size=12).map(lambda sites: SiteSet.of(sites, 2))


@pytest.mark.parametrize("n, expected", [((0, 0), 0), ((1, -2), 3), ((3, 4, -1), 8)])
def test_l1_norm(n, expected):
    assert Lattice.l1_norm(n) == expected


def test_small_balls():
    assert Lattice.ball(0, 2).sites == ((0, 0),)
    unit = Lattice.ball(1, 2)
    assert set(unit) == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}
    assert len(Lattice.ball(2, 2)) == 13
    assert len(Lattice.ball(2.9, 2)) == 13


@pytest.mark.parametrize("nu", [1, 2, 3])
@pytest.mark.parametrize("R", [0, 1, 3, 6])
def test_ball_size_matches_enumeration(R, nu):
    assert Lattice.ball_size(R, nu) == len(Lattice.ball(R, nu))


def test_canonical_order():
    sites = Lattice.ball(3, 2).sites
    keys = [Lattice.canonical_key(n) for n in sites]
    assert keys == sorted(keys)
    assert SiteSet.of(reversed(sites)).sites == sites


def test_ball_budget():
    with pytest.raises(Errors.BudgetExceeded) as info:
        Lattice.ball(100, 2, budget=1000)
    assert info.value.details["size"] == Lattice.ball_size(100, 2)
    with pytest.raises(ValueError):
        Lattice.ball(-1, 2)


@pytest.mark.parametrize("R", [0, 1, 2.5, 7])
def test_ball_is_reflection_invariant(R):
    B = Lattice.ball(R, 2)
    assert Lattice.transform(B, Transform.reflect) == B


def test_reflect_through():
    S = SiteSet.of([(0, 0), (1, 0)])
    assert set(Lattice.transform(S, Transform.reflect_through, (2, 0))) == {(2, 0), (1, 0)}


@seed(1)
@given(S=site_sets, m=vectors)
def test_translate_back_is_identity(S, m):
    there = Lattice.transform(S, Transform.translate, m)
    assert Lattice.transform(there, Transform.translate, Lattice.neg(m)) == S


@seed(2)
@given(R=st.integers(0, 4), a=vectors, m=vectors)
def test_reflect_through_maps_shifted_balls(R, a, m):
    image = Lattice.transform(Lattice.shifted_ball(a, R), Transform.reflect_through, m)
    assert image == Lattice.shifted_ball(Lattice.sub(m, a), R)


def test_straddles_examples():
    origin = SiteSet.of([(0, 0)])
    assert not Lattice.straddles(origin, origin)
    assert Lattice.straddles(SiteSet.of([(0, 0), (5, 0)]), Lattice.ball(1, 2))
    assert not Lattice.straddles(SiteSet.of([(5, 0)]), Lattice.ball(1, 2))


@seed(3)
@given(S1=site_sets, S2=site_sets)
def test_straddles_agrees_with_set_operations(S1, S2):
    if Lattice.straddles(S1, S2):
        assert S1 & S2
        assert not S1.issubset(S2)
    assert Lattice.straddles(S1, S2) != Lattice.inside_or_disjoint(S1, S2)


def test_dist_and_diam():
    assert Lattice.dist(SiteSet.of([(0, 0)]), SiteSet.of([(3, 4)])) == 7
    assert Lattice.dist_to_point(Lattice.ball(2, 2), (5, 0)) == 3
    assert Lattice.diam(Lattice.ball(3, 2)) == 6
    assert Lattice.diam(SiteSet.of([(2, -1)])) == 0
    empty = SiteSet((), 2)
    for call in (lambda: Lattice.dist(empty, empty), lambda: Lattice.diam(empty)):
        with pytest.raises(ValueError):
            call()


@seed(4)
@given(S1=site_sets, S2=site_sets)
def test_dist_and_diam_match_brute_force(S1, S2):
    pairs = [Lattice.l1_norm(Lattice.sub(a, b)) for a in S1 for b in S2]
    assert Lattice.dist(S1, S2) == min(pairs)
    assert Lattice.diam(S1) == max(Lattice.l1_norm(Lattice.sub(a, b)) for a in S1 for b in S1)


def test_set_algebra_keeps_canonical_order():
    A, B = Lattice.ball(2, 2), Lattice.shifted_ball((3, 0), 1)
    for S in (A | B, A & B, A - B):
        assert list(S.sites) == sorted(S.sites, key=Lattice.canonical_key)
    assert (A - B).isdisjoint(B)
    np.testing.assert_array_equal(A.array[A.index[(0, 1)]], (0, 1))
