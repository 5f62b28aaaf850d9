from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import auto
from typing import Callable, Mapping, Optional

import numpy as np
from scipy.special import logsumexp

from modules._compat import StrEnum
from modules import Errors, Lattice
from modules.Constants import ADMISSIBILITY_EXPONENT, PATH_BUDGET
from modules.Lattice import SiteSet, Vector

logger = logging.getLogger(__name__)

PairWeight = Callable[[Vector, Vector], float]

WEIGHT_TOL = 1e-12


class Variant(StrEnum):
    plain = auto()
    R = auto()


@dataclass(frozen=True)
class Trajectory:
    points: tuple[Vector, ...]

    def __post_init__(self):
        if not self.points:
            raise ValueError("a trajectory has at least one point")
        for a, b in zip(self.points, self.points[1:]):
            if a == b:
                raise ValueError(f"consecutive points must differ, got {a} twice")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def start(self) -> Vector:
        return self.points[0]

    @property
    def end(self) -> Vector:
        return self.points[-1]

    @property
    def steps(self) -> list[int]:
        return [Lattice.l1_norm(Lattice.sub(a, b)) for a, b in zip(self.points, self.points[1:])]

    @property
    def norm(self) -> int:
        return sum(self.steps)


def concat(g1: Trajectory, g2: Trajectory) -> Trajectory:
    """g1 followed by g2, the junction point kept once when g1 ends where g2 starts."""
    if g1.end == g2.start:
        return Trajectory(g1.points + g2.points[1:])
    return Trajectory(g1.points + g2.points)


@dataclass(frozen=True)
class WeightProfile:
    D: Mapping[Vector, float]
    T: float
    kappa0: float
    host: SiteSet
    ambient: Optional[SiteSet] = None

    @property
    def threshold(self) -> float:
        return 4 * self.T / self.kappa0

    @property
    def outside(self) -> SiteSet:
        return (self.ambient or self.host) - self.host

    @property
    def D_bar(self) -> float:
        return max(self.D[m] for m in self.host)

    def d(self, m: Vector) -> float:
        return self.D[m]


def mu(m: Vector, prof: WeightProfile) -> float:
    """dist(m, ambient minus host), +inf when the ambient adds nothing."""
    outside = prof.outside
    if not outside:
        return math.inf
    return float(Lattice.dist_to_point(outside, m))


def validate_profile(prof: WeightProfile) -> None:
    if prof.T < 8:
        raise Errors.InvalidProfile(f"T must be at least 8, got {prof.T}")
    if not 0 < prof.kappa0 < 1:
        raise Errors.InvalidProfile(f"kappa0 must lie in (0, 1), got {prof.kappa0}")
    if prof.ambient is not None and not prof.host.issubset(prof.ambient):
        raise Errors.InvalidProfile("host must be contained in the ambient set")
    for m in prof.host:
        value = prof.D.get(m)
        if value is None or value < 1:
            raise Errors.InvalidProfile(f"D({m}) must be defined and at least 1, got {value}", site=m)
        if value >= prof.threshold and value > prof.T * mu(m, prof) ** ADMISSIBILITY_EXPONENT:
            raise Errors.InvalidProfile(f"D({m}) = {value} exceeds T mu(m)^(1/5)", site=m)


def random_profile(
    rng: np.random.Generator,
    host: SiteSet,
    T: float = 8.0,
    kappa0: float = 0.5,
    ambient: Optional[SiteSet] = None,
    d_max: float = 4.0,
) -> WeightProfile:
    """D(m) uniform on [1, d_max] over the host, below the threshold 4T/kappa0 when d_max is."""
    D = {m: float(rng.uniform(1.0, d_max)) for m in host}
    prof = WeightProfile(D, T, kappa0, host, ambient)
    validate_profile(prof)
    return prof


def decay_weight(kappa0: float) -> PairWeight:
    return lambda m, n: math.exp(-kappa0 * Lattice.l1_norm(Lattice.sub(m, n)))


def _checked(w: PairWeight, m: Vector, n: Vector, kappa0: float) -> float:
    value = w(m, n)
    if m == n:
        if value != 1:
            raise Errors.WeightBoundViolation(f"w({m}, {m}) must be 1, got {value}", site=m)
        return value
    bound = math.exp(-kappa0 * Lattice.l1_norm(Lattice.sub(m, n)))
    if value < 0 or value > bound * (1 + WEIGHT_TOL):
        raise Errors.WeightBoundViolation(f"w({m}, {n}) = {value} violates 0 <= w <= {bound}", pair=(m, n))
    return value


@dataclass(frozen=True)
class Weights:
    w: float
    W: float
    norm: int
    D_bar: float


def weights(g: Trajectory, prof: WeightProfile, w: Optional[PairWeight] = None) -> Weights:
    """
    w_{D,kappa0}(g) = prod w(n_j, n_j+1) exp(sum D(n_j)) and W with exp(-kappa0 |.|) in place of w

    :param g: trajectory
    :param prof: weight profile
    :param w: pairwise weight, defaults to exp(-kappa0 |m - n|)
    :return: Weights(w, W, ||g||, D_bar(g))
    """
    w = w or decay_weight(prof.kappa0)
    D_sum = sum(prof.d(n) for n in g.points)
    log_w = D_sum
    for a, b in zip(g.points, g.points[1:]):
        value = _checked(w, a, b, prof.kappa0)
        log_w = -math.inf if value == 0 else log_w + math.log(value)
    norm = g.norm
    return Weights(math.exp(log_w), math.exp(-prof.kappa0 * norm + D_sum), norm, max(prof.d(n) for n in g.points))


@dataclass(frozen=True)
class Admissibility:
    admissible: bool
    clause: Optional[str] = None


def _pair_ok(D: Mapping[Vector, float], T: float, a: Vector, b: Vector, path_norm: float) -> bool:
    return min(D[a], D[b]) <= T * path_norm**ADMISSIBILITY_EXPONENT


def is_exempt(D_a: float, D_b: float, T: float, step: float) -> bool:
    """A consecutive pair the R variant lets through, at the price of the flanking conditions."""
    return min(D_a, D_b) > T * step**ADMISSIBILITY_EXPONENT


def _check_last(points: list[Vector], cumulative: list[int], prof: WeightProfile, variant: Variant) -> Optional[str]:
    """Clauses of the admissibility definition that involve the last point only."""
    D, T = prof.D, prof.T
    j = len(points) - 1
    last = points[j]
    for i in range(j):
        if variant == Variant.R and i == j - 1:
            continue
        if min(D[points[i]], D[last]) >= prof.threshold and not _pair_ok(D, T, points[i], last, cumulative[j] - cumulative[i]):
            return f"pair ({i}, {j}) violates min D <= T ||.||^(1/5)"
    if variant == Variant.plain:
        return None

    # exempt pairs (i, i + 1) flanked on the right by the new point
    for i in range(j - 1):
        if is_exempt(D[points[i]], D[points[i + 1]], T, cumulative[i + 1] - cumulative[i]):
            for anchor in (i, i + 1):
                if not _pair_ok(D, T, points[anchor], last, cumulative[j] - cumulative[anchor]):
                    return f"exempt pair ({i}, {i + 1}) flanked by {j} violates the flanking bound"
    return None


def _check_left_flank(points: list[Vector], cumulative: list[int], prof: WeightProfile) -> Optional[str]:
    D, T = prof.D, prof.T
    j = len(points) - 1
    if j < 2:
        return None
    i = j - 1
    if not is_exempt(D[points[i]], D[points[j]], T, cumulative[j] - cumulative[i]):
        return None
    # the exempt pair (i, i + 1) is new; j' < i flank it on the left
    for left in range(i):
        for anchor in (i, j):
            if not _pair_ok(D, T, points[left], points[anchor], cumulative[anchor] - cumulative[left]):
                return f"exempt pair ({i}, {j}) flanked by {left} violates the flanking bound"
    return None


def is_admissible(g: Trajectory, prof: WeightProfile, variant: Variant = Variant.plain) -> Admissibility:
    for n in g.points:
        if n not in prof.host:
            raise Errors.InvalidProfile(f"trajectory point {n} lies outside the host set", site=n)
    variant = Variant(variant)
    points: list[Vector] = []
    cumulative: list[int] = []
    for n in g.points:
        cumulative.append(0 if not points else cumulative[-1] + Lattice.l1_norm(Lattice.sub(points[-1], n)))
        points.append(n)
        clause = _check_last(points, cumulative, prof, variant)
        if clause is None and variant == Variant.R:
            clause = _check_left_flank(points, cumulative, prof)
        if clause is not None:
            return Admissibility(False, clause)
    return Admissibility(True)


@dataclass(frozen=True)
class TrajectorySum:
    """
    Partial sums over admissible trajectories of length <= len_cap plus the certified tail

    The log fields stay finite when eps0 is far below the float range and the plain ones underflow.
    """

    w_partial: float
    W_partial: float
    tail: float
    len_cap: int
    paths: int
    log_W_partial: float = -math.inf
    log_tail: float = -math.inf
    exhaustive: bool = field(default=True)

    @property
    def total(self) -> float:
        return self.W_partial + self.tail

    @property
    def log_total(self) -> float:
        return float(np.logaddexp(self.log_W_partial, self.log_tail))


def log_tail_bound(D_bar: float, kappa0: float, nu: int, log_eps0: float, len_cap: int) -> float:
    """log of sum_{k > len_cap} eps0^(k-1) e^(k D_bar) (8/kappa0)^((k-1) nu) = e^D_bar r^L / (1 - r)."""
    if log_eps0 == -math.inf:
        return -math.inf
    log_r = log_eps0 + D_bar + nu * math.log(8 / kappa0)
    if log_r >= 0:
        return math.inf
    return D_bar + len_cap * log_r - math.log(-math.expm1(log_r))


def tail_bound(D_bar: float, kappa0: float, nu: int, eps0: float, len_cap: int) -> float:
    log_eps0 = math.log(eps0) if eps0 > 0 else -math.inf
    return float(np.exp(log_tail_bound(D_bar, kappa0, nu, log_eps0, len_cap)))


def _log(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(values)


def weighted_log_sum(by_length: np.ndarray, log_eps0: float) -> float:
    """log sum_k eps0^(k-1) by_length[k-1] for nonnegative per-length path sums."""
    powers = np.array([0.0] + [k * log_eps0 for k in range(1, len(by_length))])
    terms = powers + _log(np.asarray(by_length, dtype=float))
    if np.all(terms == -np.inf):
        return -math.inf
    return float(logsumexp(terms))


def _distances(host: SiteSet) -> np.ndarray:
    return np.abs(host.array[:, None, :] - host.array[None, :, :]).sum(axis=2)


def has_exempt_pairs(prof: WeightProfile) -> bool:
    """Whether some pair of distinct host sites would be exempt as consecutive trajectory points."""
    D = np.array([prof.d(s) for s in prof.host.sites])
    exempt = np.minimum.outer(D, D) > prof.T * _distances(prof.host) ** ADMISSIBILITY_EXPONENT
    np.fill_diagonal(exempt, False)
    return bool(exempt.any())


def _transfer_exact(prof: WeightProfile, variant: Variant) -> bool:
    """No clause of the admissibility definition can fire, so every trajectory counts."""
    if any(prof.d(s) >= prof.threshold for s in prof.host):
        return False
    return variant == Variant.plain or not has_exempt_pairs(prof)


def _transfer_sums(m: Vector, prof: WeightProfile, w: Optional[PairWeight], len_cap: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Path sums without the eps0 factor, row k - 1 holding the trajectories of length k from m to every host site

    :param w: pairwise weight, None for exp(-kappa0 |m - n|)
    """
    sites = prof.host.sites
    B = np.exp(-prof.kappa0 * _distances(prof.host))
    np.fill_diagonal(B, 0.0)
    if w is None:
        A = B
    else:
        A = np.zeros_like(B)
        for i, a in enumerate(sites):
            for j, b in enumerate(sites):
                if i != j:
                    A[i, j] = _checked(w, a, b, prof.kappa0)
    expD = np.exp([prof.d(s) for s in sites])
    v = np.zeros(len(sites))
    v[prof.host.index[m]] = expD[prof.host.index[m]]
    V = v.copy()
    w_rows, W_rows = [v], [V]
    for _ in range(1, len_cap):
        v = (v @ A) * expD
        V = (V @ B) * expD
        w_rows.append(v)
        W_rows.append(V)
    return np.array(w_rows), np.array(W_rows)


def sum_enumerate(
    m: Vector,
    n: Vector,
    prof: WeightProfile,
    eps0: float,
    variant: Variant = Variant.plain,
    len_cap: int = 4,
    w: Optional[PairWeight] = None,
    log_eps0: Optional[float] = None,
) -> TrajectorySum:
    """
    sum over admissible trajectories of length <= len_cap from m to n of eps0^(k-1) w(gamma), plus certified tail

    When no admissibility clause can fire (every D below 4T/kappa0 and, for the R variant, no exempt pair) the
    sum is evaluated exactly by a transfer matrix; otherwise trajectories are enumerated depth-first with
    prefix pruning. Per-length sums are combined with eps0 in log space.

    :param log_eps0: natural log of eps0 when eps0 itself underflows
    """
    variant = Variant(variant)
    if log_eps0 is None:
        log_eps0 = math.log(eps0) if eps0 > 0 else -math.inf
    if m not in prof.host or n not in prof.host:
        raise Errors.InvalidProfile(f"endpoints {m}, {n} must lie in the host set")
    # a single-site host carries no trajectory longer than one point
    log_tail = -math.inf if len(prof.host) == 1 else log_tail_bound(prof.D_bar, prof.kappa0, prof.host.nu, log_eps0, len_cap)

    if _transfer_exact(prof, variant):
        w_rows, W_rows = _transfer_sums(m, prof, w, len_cap)
        target = prof.host.index[n]
        w_by_length, W_by_length, paths = w_rows[:, target], W_rows[:, target], -1
    else:
        w_by_length, W_by_length, paths = _walk(m, n, prof, w or decay_weight(prof.kappa0), variant, len_cap)

    log_w = weighted_log_sum(w_by_length, log_eps0)
    log_W = weighted_log_sum(W_by_length, log_eps0)
    return TrajectorySum(
        float(np.exp(log_w)),
        float(np.exp(log_W)),
        float(np.exp(log_tail)),
        len_cap,
        paths,
        log_W_partial=log_W,
        log_tail=log_tail,
    )


def _walk(
    m: Vector, n: Vector, prof: WeightProfile, w: PairWeight, variant: Variant, len_cap: int
) -> tuple[np.ndarray, np.ndarray, int]:
    sites = prof.host.sites
    w_by_length = np.zeros(len_cap)
    W_by_length = np.zeros(len_cap)
    visited = 0

    def walk(points: list[Vector], cumulative: list[int], log_w: float, D_sum: float):
        nonlocal visited
        visited += 1
        if visited > PATH_BUDGET:
            raise Errors.BudgetExceeded(f"trajectory enumeration exceeded {PATH_BUDGET} prefixes", budget=PATH_BUDGET)
        k = len(points)
        if points[-1] == n:
            w_by_length[k - 1] += math.exp(log_w + D_sum)
            W_by_length[k - 1] += math.exp(-prof.kappa0 * cumulative[-1] + D_sum)
        if k == len_cap:
            return
        last = points[-1]
        for site in sites:
            if site == last:
                continue
            value = _checked(w, last, site, prof.kappa0)
            if value == 0:
                continue
            points.append(site)
            cumulative.append(cumulative[-1] + Lattice.l1_norm(Lattice.sub(last, site)))
            clause = _check_last(points, cumulative, prof, variant)
            if clause is None and variant == Variant.R:
                clause = _check_left_flank(points, cumulative, prof)
            if clause is None:
                walk(points, cumulative, log_w + math.log(value), D_sum + prof.d(site))
            points.pop()
            cumulative.pop()

    walk([m], [0], 0.0, prof.d(m))
    logger.debug(f"enumerated {visited} trajectory prefixes from {m} to {n}")
    return w_by_length, W_by_length, visited


def smallness_log_threshold(nu: int, kappa0: float, T: float) -> float:
    return min(
        (-24 * nu - 4) * math.log(2) + 4 * nu * math.log(kappa0),
        -((8 * T / kappa0) ** 5),
        -10 * (nu + 1) * math.log(2) - 8 * nu * math.log(T),
    )


def log_closed_bound(m: Vector, n: Vector, prof: WeightProfile, log_eps0: float, strict: bool = True) -> float:
    """
    log of the closed-form upper bound on the weighted trajectory sum S(m, n)

    m != n: min[3 eps0^(1/2) exp(-7/8 kappa0 |m-n| + 2T min(mu(m), mu(n))^(1/5)),
                2 eps0^(1/2) exp(-1/4 kappa0 |m-n| + 2 D_bar)]
    m == n: min[exp(D(m)) + 3 eps0^(1/2) exp(2T mu(m)^(1/5)), 2 exp(2 D_bar)]

    :param strict: raise SmallnessViolation when eps0 is above the threshold, otherwise only log it
    """
    threshold = smallness_log_threshold(prof.host.nu, prof.kappa0, prof.T)
    if log_eps0 > threshold:
        if strict:
            raise Errors.SmallnessViolation(
                f"log eps0 = {log_eps0:.6g} exceeds the threshold {threshold:.6g}", log_eps0=log_eps0
            )
        logger.warning(f"closed bound evaluated outside its smallness regime (log eps0 = {log_eps0:.6g})")

    half = 0.5 * log_eps0
    D_bar = prof.D_bar
    if m == n:
        mu_m = mu(m, prof)
        second = math.log(2) + 2 * D_bar
        if math.isinf(mu_m):
            return second
        first = float(np.logaddexp(prof.d(m), math.log(3) + half + 2 * prof.T * mu_m**ADMISSIBILITY_EXPONENT))
        return min(first, second)
    distance = Lattice.l1_norm(Lattice.sub(m, n))
    mu_min = min(mu(m, prof), mu(n, prof))
    first = (
        math.inf
        if math.isinf(mu_min)
        else math.log(3) + half - 7 / 8 * prof.kappa0 * distance + 2 * prof.T * mu_min**ADMISSIBILITY_EXPONENT
    )
    second = math.log(2) + half - prof.kappa0 * distance / 4 + 2 * D_bar
    return min(first, second)


def closed_bound(
    m: Vector,
    n: Vector,
    prof: WeightProfile,
    eps0: float,
    strict: bool = True,
    log_eps0: Optional[float] = None,
) -> float:
    """exp of log_closed_bound; log_eps0 stands in for eps0 when eps0 itself underflows."""
    if log_eps0 is None:
        log_eps0 = math.log(eps0) if eps0 > 0 else -math.inf
    return float(np.exp(log_closed_bound(m, n, prof, log_eps0, strict)))


def respects_closed_bound(total: TrajectorySum, log_bound: float) -> bool:
    return total.log_total <= log_bound + 1e-12 * max(1.0, abs(log_bound))


def gamma_sum(m: Vector, n: Vector, host: SiteSet, k: int, alpha: float) -> tuple[float, float]:
    """
    sum over Gamma(m, n; k, host) of exp(-alpha ||gamma||) and the bound (8/alpha)^((k-1) nu)

    :return: (sum, bound)
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    A = np.exp(-alpha * np.abs(host.array[:, None, :] - host.array[None, :, :]).sum(axis=2))
    np.fill_diagonal(A, 0.0)
    total = np.linalg.matrix_power(A, k - 1)[host.index[m], host.index[n]]
    return float(total), (8 / alpha) ** ((k - 1) * host.nu)


class EstimateCase(StrEnum):
    low = auto()
    isolated = auto()
    crowded = auto()
    isolated_pair = auto()
    crowded_pair = auto()


@dataclass(frozen=True)
class PointwiseEstimate:
    case: EstimateCase
    log_W: float
    log_bound: float

    @property
    def holds(self) -> bool:
        return self.log_W <= self.log_bound + 1e-12 * max(1.0, abs(self.log_bound))


def _theta(t: float) -> float:
    return sum(2.0 ** (-5 * s) for s in range(1, math.floor(t) + 1))


def exempt_steps(g: Trajectory, prof: WeightProfile) -> set[int]:
    """Indices i whose consecutive pair is exempt, min(D(n_i), D(n_i+1)) > T |n_i - n_i+1|^(1/5)."""
    return {
        i
        for i, step in enumerate(g.steps)
        if is_exempt(prof.d(g.points[i]), prof.d(g.points[i + 1]), prof.T, step)
    }


def pointwise_estimate(g: Trajectory, prof: WeightProfile) -> PointwiseEstimate:
    """
    The four-case pointwise bound on W(g) for R-admissible trajectories, in log space

    With M = 4T/kappa0 and t_D = log D_bar / log M: for t_D <= 5 the bound is -kappa0 ||g|| + k M^5;
    otherwise the case depends on whether the maximizing index l (or l - 1) is an exempt step and on how
    the remaining D values compare with D(n_l) / M^2. The exempt set is empty for plain-admissible g.
    """
    if not is_admissible(g, prof, Variant.R).admissible:
        raise Errors.InvalidProfile("pointwise estimate needs an R-admissible trajectory")
    M = prof.threshold
    D_values = [prof.d(n) for n in g.points]
    D_bar = max(D_values)
    norm = g.norm
    log_W = -prof.kappa0 * norm + sum(D_values)
    t = math.log(D_bar) / math.log(M)
    if t <= 5:
        return PointwiseEstimate(EstimateCase.low, log_W, -prof.kappa0 * norm + len(g) * M**5)

    P = set() if is_admissible(g, prof, Variant.plain).admissible else exempt_steps(g, prof)
    ell = D_values.index(D_bar)
    paired = ell in P or (ell - 1) in P
    excluded = {ell - 1, ell} if paired else {ell}
    rest = max((D for j, D in enumerate(D_values) if j not in excluded), default=-math.inf)
    crowded = rest >= D_bar / M**2
    if not paired:
        if crowded:
            return PointwiseEstimate(EstimateCase.crowded, log_W, -prof.kappa0 * (1 - _theta(t + 1)) * norm)
        return PointwiseEstimate(EstimateCase.isolated, log_W, -prof.kappa0 * (1 - _theta(t)) * norm + D_bar)
    if crowded:
        return PointwiseEstimate(EstimateCase.crowded_pair, log_W, -prof.kappa0 * (1 - _theta(t + 1)) * norm)
    return PointwiseEstimate(EstimateCase.isolated_pair, log_W, -prof.kappa0 * (1 - _theta(t)) * norm + 2 * D_bar)
