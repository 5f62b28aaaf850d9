import itertools
import math

import pytest

from modules import Errors, Lattice, Trajectories
from modules.Lattice import SiteSet
from modules.Trajectories import EstimateCase, Trajectory, Variant, WeightProfile

a, b, c, d = (0, 0), (1, 0), (2, 0), (0, 1)


def flat_profile(host: SiteSet, value: float = 1.0, T: float = 8.0, kappa0: float = 0.5, ambient=None) -> WeightProfile:
    return WeightProfile({m: value for m in host}, T, kappa0, host, ambient)


def test_concat():
    assert Trajectories.concat(Trajectory((a, b)), Trajectory((b, c))).points == (a, b, c)
    assert Trajectories.concat(Trajectory((a, b)), Trajectory((c, d))).points == (a, b, c, d)
    g1, g2 = Trajectory((a, b, d)), Trajectory((d, c))
    assert Trajectories.concat(g1, g2).norm == g1.norm + g2.norm


def test_trajectory_rejects_repeats():
    with pytest.raises(ValueError):
        Trajectory((a, a))
    with pytest.raises(ValueError):
        Trajectory(())


def test_single_point_weights():
    prof = WeightProfile({a: 2.5}, 8.0, 0.5, SiteSet.of([a]))
    result = Trajectories.weights(Trajectory((a,)), prof)
    assert result == Trajectories.Weights(math.exp(2.5), math.exp(2.5), 0, 2.5)


def test_two_point_weights():
    prof = flat_profile(Lattice.ball(1, 2))
    result = Trajectories.weights(Trajectory((a, b)), prof)
    assert result.w == pytest.approx(math.exp(-0.5) * math.e**2)
    assert result.W == pytest.approx(result.w)
    assert result.norm == 1


def test_weaker_pair_weight_lowers_w(rng):
    host = Lattice.ball(2, 2)
    prof = Trajectories.random_profile(rng, host)
    half = lambda m, n: 1.0 if m == n else 0.5 * math.exp(-0.5 * Lattice.l1_norm(Lattice.sub(m, n)))
    for _ in range(20):
        picks = rng.integers(0, len(host), size=4)
        points = [host.sites[picks[0]]]
        for i in picks[1:]:
            if host.sites[i] != points[-1]:
                points.append(host.sites[i])
        result = Trajectories.weights(Trajectory(tuple(points)), prof, half)
        assert result.w <= result.W


def test_pair_weights_multiply_across_a_junction():
    prof = flat_profile(Lattice.ball(2, 2))
    g1, g2 = Trajectory((a, b)), Trajectory((c, d))
    joined = Trajectories.weights(Trajectories.concat(g1, g2), prof)
    link = math.exp(-0.5 * Lattice.l1_norm(Lattice.sub(b, c)))
    product = Trajectories.weights(g1, prof).w * Trajectories.weights(g2, prof).w * link
    assert joined.w == pytest.approx(product)


def test_weight_bound_violation():
    prof = flat_profile(Lattice.ball(1, 2))
    with pytest.raises(Errors.WeightBoundViolation):
        Trajectories.weights(Trajectory((a, b)), prof, lambda m, n: 1.0)


def test_profile_validation(rng):
    host = Lattice.ball(1, 2)
    with pytest.raises(Errors.InvalidProfile):
        Trajectories.validate_profile(flat_profile(host, T=4.0))
    with pytest.raises(Errors.InvalidProfile):
        Trajectories.validate_profile(flat_profile(host, value=0.5))
    crowded = flat_profile(host, value=100.0, ambient=Lattice.ball(2, 2))
    with pytest.raises(Errors.InvalidProfile):
        Trajectories.validate_profile(crowded)
    Trajectories.validate_profile(Trajectories.random_profile(rng, host))


def test_admissibility_examples():
    host = SiteSet.of([a, b, c])
    prof = WeightProfile({a: 100.0, b: 1.0, c: 100.0}, 8.0, 0.5, host)
    single = Trajectory((a,))
    for variant in Variant:
        assert Trajectories.is_admissible(single, prof, variant).admissible
    assert Trajectories.is_admissible(Trajectory((a, b, c)), flat_profile(host), Variant.plain).admissible

    far = Trajectory((a, b, c))
    plain = Trajectories.is_admissible(far, prof, Variant.plain)
    assert not plain.admissible
    assert "(0, 2)" in plain.clause
    assert not Trajectories.is_admissible(far, prof, Variant.R).admissible

    adjacent = Trajectory((a, c))
    assert not Trajectories.is_admissible(adjacent, prof, Variant.plain).admissible
    assert Trajectories.is_admissible(adjacent, prof, Variant.R).admissible


def test_admissibility_needs_host_points():
    prof = flat_profile(SiteSet.of([a, b]))
    with pytest.raises(Errors.InvalidProfile):
        Trajectories.is_admissible(Trajectory((a, c)), prof)


def test_single_site_sum():
    prof = WeightProfile({a: 1.7}, 8.0, 0.5, SiteSet.of([a]))
    result = Trajectories.sum_enumerate(a, a, prof, 1e-4)
    assert result.W_partial == pytest.approx(math.exp(1.7))
    assert result.tail == 0


def test_zero_coupling_sum():
    far = (9, 0)
    prof = WeightProfile({a: 1.5, far: 2.0}, 8.0, 0.5, SiteSet.of([a, far]))
    nothing = lambda m, n: 1.0 if m == n else 0.0
    assert Trajectories.sum_enumerate(a, a, prof, 1e-4, w=nothing).w_partial == pytest.approx(math.exp(1.5))
    assert Trajectories.sum_enumerate(a, far, prof, 1e-4, w=nothing).w_partial == 0


def test_enumeration_agrees_with_transfer_matrix():
    host = Lattice.ball(1, 2)
    D = {m: 1.0 + 0.1 * i for i, m in enumerate(host)}
    D[(1, 0)] = 64.0  # one site at the threshold forces enumeration, no pair can violate
    prof = WeightProfile(D, 8.0, 0.5, host)
    w_rows, W_rows = Trajectories._transfer_sums(a, prof, None, 3)
    for n in host:
        enumerated = Trajectories.sum_enumerate(a, n, prof, 1e-3, len_cap=3)
        assert enumerated.paths > 0
        column = host.index[n]
        assert enumerated.w_partial == pytest.approx(sum(1e-3**k * w_rows[k, column] for k in range(3)), rel=1e-12)
        assert enumerated.W_partial == pytest.approx(sum(1e-3**k * W_rows[k, column] for k in range(3)), rel=1e-12)


def brute_force(m, n, prof, eps0, variant, len_cap) -> float:
    total = 0.0
    for k in range(1, len_cap + 1):
        for middle in itertools.product(prof.host.sites, repeat=k - 1):
            points = (m, *middle)
            if k > 1 and points[-1] != n or k == 1 and m != n:
                continue
            if any(p == q for p, q in zip(points, points[1:])):
                continue
            g = Trajectory(points)
            if Trajectories.is_admissible(g, prof, variant).admissible:
                total += eps0 ** (k - 1) * Trajectories.weights(g, prof).W
    return total


def test_exempt_pairs_restrict_the_R_variant():
    host = Lattice.ball(1, 2)
    prof = flat_profile(host, value=10.0)
    assert Trajectories.has_exempt_pairs(prof)
    plain = Trajectories.sum_enumerate(a, b, prof, 1e-3, Variant.plain, len_cap=4)
    restricted = Trajectories.sum_enumerate(a, b, prof, 1e-3, Variant.R, len_cap=4)
    assert restricted.paths > 0
    assert restricted.W_partial < plain.W_partial
    for variant, result in ((Variant.plain, plain), (Variant.R, restricted)):
        assert result.W_partial == pytest.approx(brute_force(a, b, prof, 1e-3, variant, 4), rel=1e-12)


def test_exempt_comparison_is_strict():
    host = SiteSet.of([a, b])
    prof = flat_profile(host, value=8.0)
    assert Trajectories.exempt_steps(Trajectory((a, b)), prof) == set()
    assert not Trajectories.has_exempt_pairs(prof)
    assert not Trajectories.is_exempt(8.0, 8.0, 8.0, 1)
    assert Trajectories.is_exempt(8.5, 9.0, 8.0, 1)


def test_tail_bound():
    assert Trajectories.tail_bound(2.0, 0.5, 2, 0.0, 4) == 0
    assert Trajectories.tail_bound(2.0, 0.5, 2, 0.5, 4) == math.inf
    r = 1e-6 * math.exp(1.0) * 16**2
    assert Trajectories.tail_bound(1.0, 0.5, 2, 1e-6, 3) == pytest.approx(math.e * r**3 / (1 - r))


@pytest.mark.parametrize("alpha", [1.0, 2.0])
@pytest.mark.parametrize("k", [2, 3])
def test_gamma_sum_bound(alpha, k):
    host = Lattice.ball(3, 2)
    for n in host:
        total, bound = Trajectories.gamma_sum(a, n, host, k, alpha)
        assert total < bound


def test_closed_bound_smallness():
    host = Lattice.ball(2, 2)
    prof = flat_profile(host)
    with pytest.raises(Errors.SmallnessViolation):
        Trajectories.closed_bound(a, b, prof, 1e-4)
    assert Trajectories.closed_bound(a, b, prof, 1e-4, strict=False) > 0


def test_closed_bound_diagonal():
    host = Lattice.ball(2, 2)
    prof = flat_profile(host, value=1.5, ambient=Lattice.ball(4, 2))
    log_eps0 = Trajectories.smallness_log_threshold(2, 0.5, 8.0) - 1
    mu = Trajectories.mu(a, prof)
    assert mu == 3
    expected = min(math.exp(1.5) + 3 * math.exp(log_eps0 / 2 + 16 * mu**0.2), 2 * math.exp(3.0))
    assert Trajectories.closed_bound(a, a, prof, 0.0, log_eps0=log_eps0) == pytest.approx(expected)


def test_enumerated_sums_respect_closed_bound(rng):
    host = Lattice.ball(3, 2)
    ambient = Lattice.ball(5, 2)
    log_eps0 = Trajectories.smallness_log_threshold(2, 0.5, 8.0) - 1
    for _ in range(50):
        prof = Trajectories.random_profile(rng, host, ambient=ambient)
        for n in host:
            result = Trajectories.sum_enumerate(a, n, prof, 0.0, log_eps0=log_eps0)
            assert math.isfinite(result.log_total)
            log_bound = Trajectories.log_closed_bound(a, n, prof, log_eps0)
            assert Trajectories.respects_closed_bound(result, log_bound)


def test_off_diagonal_sums_survive_underflow(rng):
    host = Lattice.ball(2, 2)
    prof = Trajectories.random_profile(rng, host, ambient=Lattice.ball(4, 2))
    log_eps0 = Trajectories.smallness_log_threshold(2, 0.5, 8.0) - 1
    result = Trajectories.sum_enumerate(a, b, prof, 0.0, log_eps0=log_eps0)
    assert result.W_partial == 0.0
    direct = log_eps0 + prof.d(a) + prof.d(b) - 0.5
    assert result.log_W_partial == pytest.approx(direct, rel=1e-12)
    assert result.log_total == pytest.approx(direct, rel=1e-12)


def test_pointwise_estimate_low_case(rng):
    host = Lattice.ball(2, 2)
    prof = Trajectories.random_profile(rng, host)
    for _ in range(10):
        picks = rng.choice(len(host), size=3, replace=False)
        g = Trajectory(tuple(host.sites[i] for i in picks))
        estimate = Trajectories.pointwise_estimate(g, prof)
        assert estimate.case == EstimateCase.low
        assert estimate.holds


def test_pointwise_estimate_isolated_peak():
    peak = (100, 0)
    host = SiteSet.of([a, peak])
    prof = WeightProfile({a: 1.0, peak: 1e12}, 8.0, 0.5, host)
    g = Trajectory((a, peak))
    estimate = Trajectories.pointwise_estimate(g, prof)
    assert estimate.case == EstimateCase.isolated
    assert estimate.log_W == pytest.approx(-0.5 * 100 + 1.0 + 1e12)
    assert estimate.holds
