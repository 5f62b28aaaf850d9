from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import auto
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from modules._compat import StrEnum
from modules import Errors, Lattice
from modules.Constants import (
    DECAY_RATE,
    DECAY_SLACK,
    DEGENERACY_TOL,
    FD_STEP,
    FIXED_POINT_STEPS,
    FIXED_POINT_TOL,
    RECONCILE_TOL,
    SITE_BUDGET,
    TWO_PI_SQ,
)
from modules.DualOperator import Direction, DualOperator, Normalization, dense_spectrum
from modules.Lattice import SiteSet, Vector
from modules.Model import polynomial_width
from modules.Resonance import k_point
from modules.Schur import ReducedSystem

logger = logging.getLogger(__name__)


class RegimeTag(StrEnum):
    nonresonant = auto()
    pair = auto()
    gap = auto()
    dense = auto()


@dataclass(frozen=True)
class EigenRecord:
    E: float
    phi: dict[Vector, complex]
    host: SiteSet
    k: float
    regime: RegimeTag
    residual: float
    center: Vector
    oracle: Optional[float] = None

    def vector(self) -> np.ndarray:
        return np.array([self.phi.get(n, 0j) for n in self.host], dtype=complex)


@dataclass(frozen=True)
class PairRecord:
    E_minus: float
    E_plus: float
    phi_minus: dict[Vector, complex]
    phi_plus: dict[Vector, complex]
    host: SiteSet
    k: float
    sandwich: bool
    residual: float


@dataclass(frozen=True)
class GapRecord:
    n0: Vector
    k_point: float
    E_minus: float
    E_plus: float
    oracle_minus: float = math.nan
    oracle_plus: float = math.nan

    @property
    def width(self) -> float:
        return self.E_plus - self.E_minus


@dataclass(frozen=True)
class BandPoint:
    k: float
    E: float
    regime: RegimeTag
    partner: Optional[Vector] = None
    error: Optional[str] = None


def residual(H: np.ndarray, E: float, phi: np.ndarray) -> float:
    """||(H - E) phi||_inf / ||phi||_inf."""
    return float(np.abs(H @ phi - E * phi).max() / np.abs(phi).max())


def _as_vector(phi: dict[Vector, complex], S: SiteSet) -> np.ndarray:
    return np.array([phi.get(n, 0j) for n in S], dtype=complex)


def dense_match(op: DualOperator, m0: Vector, S: SiteSet, k: float, normalization: Normalization) -> tuple[float, np.ndarray]:
    """Dense eigenpair whose eigenvector has the largest weight on m0, scaled to phi(m0) = 1."""
    spectrum = dense_spectrum(op.restrict(S, k, normalization))
    row = S.index[tuple(m0)]
    i = int(np.argmax(np.abs(spectrum.vectors[row])))
    vector = spectrum.vectors[:, i]
    return float(spectrum.values[i]), vector / vector[row]


def eigen_simple(
    op: DualOperator,
    m0: Vector,
    S: SiteSet,
    k: float,
    normalization: Normalization = Normalization.raw,
    tol: float = FIXED_POINT_TOL,
    max_steps: int = FIXED_POINT_STEPS,
) -> EigenRecord:
    """
    Solves E = v(m0, k) + Q(m0, S; E) by fixed-point iteration from E = v(m0, k)

    The eigenvector is phi(m0) = 1 and phi = F(m0, .) elsewhere. If the iteration meets a pole or does not
    settle in max_steps the dense eigenpair with the largest weight on m0 is used instead.
    """
    m0 = tuple(m0)
    H = op.restrict(S, k, normalization).entries
    oracle, oracle_phi = dense_match(op, m0, S, k, normalization)
    system = ReducedSystem(op, S, k, (m0,), normalization)
    v = op.v(m0, k, normalization)
    E = v
    try:
        for step in range(max_steps):
            updated = v + system.Q(m0, E)
            if abs(updated - E) <= tol * max(1.0, abs(E)):
                E = updated
                break
            E = updated
        else:
            raise Errors.NonConvergence(f"fixed point did not settle in {max_steps} steps", k=k)
    except (Errors.NonConvergence, Errors.SingularBlock) as e:
        logger.warning(f"eigen_simple at k={k!r}, m0={m0}: {e.text}; using the dense eigenpair")
        phi = dict(zip(S.sites, oracle_phi.tolist()))
        return EigenRecord(oracle, phi, S, k, RegimeTag.dense, residual(H, oracle, oracle_phi), m0, oracle)
    phi = system.phi(m0, E)
    return EigenRecord(E, phi, S, k, RegimeTag.nonresonant, residual(H, E, _as_vector(phi, S)), m0, oracle)


def _pole_free_window(system: ReducedSystem, centers: Sequence[float]) -> tuple[float, float]:
    low, high = min(centers), max(centers)
    poles = system.poles
    below = poles[poles < low]
    above = poles[poles > high]
    inside = poles[(poles >= low) & (poles <= high)]
    if inside.size:
        raise Errors.RootCount("a reduced eigenvalue lies between the two diagonal values", poles=inside.tolist())
    margin = min(
        (low - below.max()) / 2 if below.size else math.inf,
        (above.min() - high) / 2 if above.size else math.inf,
        max(high - low, 1.0),
    )
    return low - margin, high + margin


def eigen_pair(
    op: DualOperator,
    S: SiteSet,
    k: float,
    mp: Vector,
    mm: Vector,
    normalization: Normalization = Normalization.raw,
    window: Optional[tuple[float, float]] = None,
) -> PairRecord:
    """
    The two roots of chi(E) = (E - v+ - Q+)(E - v- - Q-) - |G|^2 in a pole-free window

    chi is minimised first; the roots are bracketed on either side of the minimiser.
    """
    mp, mm = tuple(mp), tuple(mm)
    system = ReducedSystem(op, S, k, (mp, mm), normalization)
    vp, vm = op.v(mp, k, normalization), op.v(mm, k, normalization)

    def effective(E: float) -> np.ndarray:
        return np.array(
            [[vp + system.Q(mp, E), system.G(mp, mm, E)], [system.G(mm, mp, E), vm + system.Q(mm, E)]],
            dtype=complex,
        )

    def chi(E: float) -> float:
        M = effective(E)
        return float(((E - M[0, 0]) * (E - M[1, 1])).real - abs(M[0, 1]) ** 2)

    low, high = window or _pole_free_window(system, (vp, vm))
    lowest = minimize_scalar(chi, bounds=(low, high), method="bounded", options={"xatol": 1e-15})
    E_min, chi_min = float(lowest.x), float(lowest.fun)
    scale = max(1.0, abs(vp), abs(vm))
    if chi_min > 0:
        if chi_min > FIXED_POINT_TOL * scale * scale:
            raise Errors.RootCount(f"chi stays positive on [{low}, {high}]", chi_min=chi_min)
        roots = (E_min, E_min)
    else:
        if chi(low) <= 0 or chi(high) <= 0:
            raise Errors.RootCount(f"chi does not change sign twice on [{low}, {high}]")
        roots = (brentq(chi, low, E_min, xtol=1e-15, rtol=4 * np.finfo(float).eps), brentq(chi, E_min, high, xtol=1e-15, rtol=4 * np.finfo(float).eps))

    H = op.restrict(S, k, normalization).entries
    vectors, sandwich, worst = [], True, 0.0
    for E, upper in zip(roots, (False, True)):
        M = effective(E)
        values, small = np.linalg.eigh(M)
        c = small[:, int(np.argmin(np.abs(values - E)))]
        tail = system.F(mp, E) * c[0] + system.F(mm, E) * c[1]
        lead = c[int(np.argmax(np.abs(c)))]
        phi = {mp: c[0] / lead, mm: c[1] / lead}
        phi.update(zip(system.reduced.sites, (tail / lead).tolist()))
        vectors.append(phi)
        worst = max(worst, residual(H, E, _as_vector(phi, S)))
        a1, a2 = sorted((M[0, 0].real, M[1, 1].real), reverse=True)
        b = abs(M[0, 1])
        tol = RECONCILE_TOL * scale
        if upper:
            sandwich &= max(a1, a2 + b) - tol <= E <= a1 + b + tol
        else:
            sandwich &= a2 - b - tol <= E <= min(a2, a1 - b) + tol
    return PairRecord(roots[0], roots[1], vectors[0], vectors[1], S, k, bool(sandwich), worst)


def paired_box(n0: Vector, radius: float, budget: int = SITE_BUDGET) -> SiteSet:
    """B(R) united with n0 + B(R), invariant under n -> n0 - n."""
    box = Lattice.ball(radius, len(n0), budget)
    return box | Lattice.transform(box, Lattice.Transform.translate, tuple(n0))


def _edge(system: ReducedSystem, v: float, n0: Vector, sign: int, tol: float) -> float:
    """Fixed point of E = v + Q(0; E) + sign |G(0, n0; E)|."""
    origin = Lattice.zero(len(n0))
    E = v
    for _ in range(FIXED_POINT_STEPS):
        updated = v + system.Q(origin, E) + sign * abs(system.G(origin, n0, E))
        if abs(updated - E) <= tol * max(1.0, abs(E)):
            return updated
        E = updated
    raise Errors.NonConvergence(f"gap-edge equation at n0={n0} did not settle", n0=n0)


def gap_at(
    op: DualOperator,
    n0: Vector,
    S: Optional[SiteSet] = None,
    box_radius: float = 8,
    normalization: Normalization = Normalization.raw,
    tol: float = RECONCILE_TOL,
) -> GapRecord:
    """
    Gap edges at k = k_n0 from E = v(0, k) + Q(0; E) -/+ |G(0, n0; E)|, reconciled against the dense spectrum

    :param S: T-invariant paired set containing 0 and n0; the paired box of box_radius by default
    :return: GapRecord
    """
    n0 = tuple(n0)
    if not any(n0):
        raise ValueError("n0 must be nonzero")
    k = k_point(n0, op.frequency)
    S = S or paired_box(n0, box_radius, op.budget)
    origin = Lattice.zero(len(n0))
    v = op.v(origin, k, normalization)
    system = ReducedSystem(op, S, k, (origin, n0), normalization)
    edges = sorted(_edge(system, v, n0, sign, FIXED_POINT_TOL) for sign in (-1, 1))

    values = dense_spectrum(op.restrict(S, k, normalization)).values
    nearest = np.sort(values[np.argsort(np.abs(values - v), kind="stable")[:2]])
    for edge, oracle in zip(edges, nearest):
        if abs(edge - oracle) > tol * max(1.0, abs(oracle)):
            raise Errors.ReconciliationFailure(
                f"gap edge {edge!r} at n0={n0} disagrees with the dense eigenvalue {oracle!r}", n0=n0
            )
    return GapRecord(n0, k, edges[0], edges[1], float(nearest[0]), float(nearest[1]))


def nearest_partner(op: DualOperator, S: SiteSet, k: float, normalization: Normalization) -> tuple[Optional[Vector], float]:
    """The site n != 0 of S minimising |v(n, k) - v(0, k)|."""
    values = op.v_array(S.array, k, normalization)
    row = S.index[Lattice.zero(S.nu)]
    gaps = np.abs(values - values[row])
    gaps[row] = np.inf
    if len(S) < 2:
        return None, math.inf
    i = int(np.argmin(gaps))
    return S.sites[i], float(gaps[i])


def band_point(
    op: DualOperator,
    k: float,
    box_radius: float,
    pair_threshold: float,
    normalization: Normalization = Normalization.raw,
    S_builder: Optional[Callable[[float, Optional[Vector]], SiteSet]] = None,
) -> BandPoint:
    """
    E(k) continued from the site 0

    Away from resonance the simple fixed point is used; when some n has |v(n, k) - v(0, k)| below the
    pair threshold the pair equation is solved, keeping E+ when v(0, k) >= v(n, k) and E- otherwise.
    Exact resonance points k = k_n0 return the lower gap edge.
    """
    origin = Lattice.zero(op.nu)
    build = S_builder or (lambda _, n: paired_box(n, box_radius, op.budget) if n else Lattice.ball(box_radius, op.nu, op.budget))
    try:
        partner = op.is_resonant_point(k, math.floor(2 * box_radius))
        if partner is not None and any(partner):
            n0 = Lattice.neg(partner)
            record = gap_at(op, n0, build(k, n0), box_radius, normalization)
            return BandPoint(k, record.E_minus, RegimeTag.gap, n0)
        S = build(k, None)
        n, gap = nearest_partner(op, S, k, normalization)
        if n is None or gap >= pair_threshold:
            record = eigen_simple(op, origin, S, k, normalization)
            return BandPoint(k, record.E, record.regime)
        pair = eigen_pair(op, build(k, n), k, origin, n, normalization)
        upper = op.v(origin, k, normalization) >= op.v(n, k, normalization)
        return BandPoint(k, pair.E_plus if upper else pair.E_minus, RegimeTag.pair, n)
    except Errors.Base as e:
        logger.warning(f"band point k={k!r} failed: {e.text}")
        return BandPoint(k, math.nan, RegimeTag.dense, error=f"{e.__class__.__name__}: {e.text}")


def default_pair_threshold(op: DualOperator) -> float:
    return 8 * math.sqrt(op.potential.epsilon)


def band(
    op: DualOperator,
    k_grid: Iterable[float],
    box_radius: float = 8,
    pair_threshold: Optional[float] = None,
    normalization: Normalization = Normalization.raw,
    S_builder: Optional[Callable[[float, Optional[Vector]], SiteSet]] = None,
) -> list[BandPoint]:
    """Band function on a grid; per-point failures are recorded on the point, never raised."""
    if pair_threshold is None:
        pair_threshold = default_pair_threshold(op)
    return [band_point(op, float(k), box_radius, pair_threshold, normalization, S_builder) for k in k_grid]


@dataclass(frozen=True)
class MonotoneReport:
    checked: int
    violations: tuple[tuple[float, float, float], ...] = field(default=())

    @property
    def holds(self) -> bool:
        return not self.violations


def k0_constant(k: float, eps0: float) -> float:
    return min(eps0, k / 1024)


def monotone_defect(
    points: Sequence[BandPoint],
    op: DualOperator,
    eps0: float = 1.0,
    exponent: float = 1.0,
    radius: int = 8,
    delta0: float = 0.0,
) -> MonotoneReport:
    """
    Checks (k0 (k - k1))^2 - 3 eps delta0^4 < E(k) - E(k1) < (2 pi)^2 2k (k - k1) + 2 eps sum delta(n)^exponent on 0 < k1 < k

    The sum runs over |n| <= radius with k1 < k_n < k; exponent 1 gives the polynomial windows, 1/8 the
    relaxed ones. The lower side only binds within one component, so pairs with a resonance point between
    them are checked against the upper side alone. Each violation is (k1, k, margin), margin being the
    signed amount by which a side fails.
    """
    f = op.frequency
    sites = Lattice.ball_array(radius, f.nu)[1:]
    resonances = -(sites @ f.vector) / 2
    widths = np.array([polynomial_width(tuple(n), f) for n in sites.tolist()]) ** exponent
    epsilon = abs(op.potential.epsilon)
    defect = 3 * epsilon * delta0**4

    good = sorted((p for p in points if p.k > 0 and math.isfinite(p.E)), key=lambda p: p.k)
    violations, checked = [], 0
    for first, second in zip(good, good[1:]):
        k1, k = first.k, second.k
        if not 0 < k - k1 < 0.25:
            continue
        checked += 1
        rise = second.E - first.E
        crossed = (resonances > k1) & (resonances < k)
        upper = TWO_PI_SQ * 2 * k * (k - k1) + 2 * epsilon * float(widths[crossed].sum())
        if not crossed.any():
            lower = (k0_constant(k, eps0) * (k - k1)) ** 2 - defect
            if not lower < rise:
                violations.append((k1, k, rise - lower))
                continue
        if not rise < upper:
            violations.append((k1, k, upper - rise))
    return MonotoneReport(checked, tuple(violations))


@dataclass(frozen=True)
class DecayReport:
    worst_ratio: float
    violations: tuple[Vector, ...]

    @property
    def holds(self) -> bool:
        return not self.violations


def decay_check(
    record: EigenRecord,
    principal: SiteSet,
    epsilon: float,
    kappa0: float,
    slack: float = DECAY_SLACK,
) -> DecayReport:
    """
    |phi(n)| <= slack eps^(1/2) sum_{m in principal} exp(-7/8 kappa0 |n - m|) off the principal set, |phi(m)| <= 2 on it
    """
    violations, worst = [], 0.0
    centers = principal.array
    for n, value in record.phi.items():
        size = abs(value)
        if n in principal:
            if size > 2:
                violations.append(n)
            continue
        distances = np.abs(centers - np.asarray(n)).sum(axis=1)
        bound = slack * math.sqrt(epsilon) * float(np.exp(-DECAY_RATE * kappa0 * distances).sum())
        ratio = size / bound if bound > 0 else (math.inf if size > 0 else 0.0)
        worst = max(worst, ratio)
        if ratio > 1:
            violations.append(n)
    return DecayReport(worst, tuple(violations))


def splitting_check(
    op: DualOperator,
    n0: Vector,
    k_prime: float,
    S: SiteSet,
    k0: float,
    normalization: Normalization = Normalization.raw,
) -> tuple[float, float]:
    """(E+(k') - E-(k'), (k0 |k' - k_n0|)^2 / 2); the first must exceed the second."""
    origin = Lattice.zero(len(n0))
    pair = eigen_pair(op, S, k_prime, origin, n0, normalization)
    return pair.E_plus - pair.E_minus, (k0 * abs(k_prime - k_point(n0, op.frequency))) ** 2 / 2


def pair_symmetry(
    op: DualOperator,
    n0: Vector,
    theta: float,
    S: SiteSet,
    normalization: Normalization = Normalization.raw,
) -> float:
    """max over +/- of |E(0; k_n0 + theta) - E(n0; k_n0 - theta)| on a T-invariant set."""
    origin = Lattice.zero(len(n0))
    centre = k_point(n0, op.frequency)
    right = eigen_pair(op, S, centre + theta, origin, n0, normalization)
    left = eigen_pair(op, S, centre - theta, tuple(n0), origin, normalization)
    return max(abs(right.E_plus - left.E_plus), abs(right.E_minus - left.E_minus))


@dataclass(frozen=True)
class FeynmanRecord:
    values: np.ndarray
    derivatives: np.ndarray
    direction: Direction


def feynman_derivative(
    op: DualOperator,
    S: SiteSet,
    k: float,
    direction: Direction = Direction.k,
    normalization: Normalization = Normalization.raw,
    indices: Optional[Sequence[int]] = None,
) -> FeynmanRecord:
    """
    dE_j = <psi_j, dH psi_j> for simple eigenvalues

    :param indices: eigenvalue positions (ascending order); all by default
    """
    spectrum = dense_spectrum(op.restrict(S, k, normalization))
    chosen = np.arange(len(spectrum.values)) if indices is None else np.asarray(indices)
    values = spectrum.values
    for j in chosen:
        neighbours = np.delete(values, j)
        if neighbours.size and np.abs(neighbours - values[j]).min() <= DEGENERACY_TOL:
            raise Errors.NearDegeneracy(f"eigenvalue {values[j]!r} is degenerate within {DEGENERACY_TOL}", index=int(j))
    psi = spectrum.vectors[:, chosen]
    match Direction(direction):
        case Direction.k:
            weights = op.k_derivative(S, k, normalization)
            derivatives = (np.abs(psi) ** 2 * weights[:, None]).sum(axis=0)
        case Direction.epsilon:
            dH = op.epsilon_derivative(S, k, normalization)
            derivatives = np.einsum("ij,ik,kj->j", psi.conj(), dH, psi).real
    return FeynmanRecord(values[chosen], np.asarray(derivatives, dtype=float), Direction(direction))


def fd_eigen_derivative(
    op: DualOperator,
    S: SiteSet,
    k: float,
    direction: Direction = Direction.k,
    normalization: Normalization = Normalization.raw,
    step: float = FD_STEP,
) -> np.ndarray:
    """Central differences of the ascending eigenvalues."""
    match Direction(direction):
        case Direction.k:
            plus = dense_spectrum(op.restrict(S, k + step, normalization)).values
            minus = dense_spectrum(op.restrict(S, k - step, normalization)).values
        case Direction.epsilon:
            eps = op.potential.epsilon
            plus = dense_spectrum(op.with_potential(op.potential.with_epsilon(eps + step)).restrict(S, k, normalization)).values
            minus = dense_spectrum(op.with_potential(op.potential.with_epsilon(eps - step)).restrict(S, k, normalization)).values
    return (plus - minus) / (2 * step)
