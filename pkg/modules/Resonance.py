from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import auto
from typing import Optional

import numpy as np

from modules._compat import StrEnum
from modules import Converters, Errors, Lattice, Model
from modules.Constants import BOUNDARY_TOL, ENUMERATION_BUDGET
from modules.Lattice import SiteSet, Vector
from modules.Model import DiophantineCertificate, Frequency, ScaleLadder

logger = logging.getLogger(__name__)

FINITE_WINDOW = "finite window only: resonances beyond the search radius are not examined"


class RegimeKind(StrEnum):
    nonresonant = auto()
    simple_pair = auto()
    graded = auto()
    boundary = auto()


class Membership(StrEnum):
    inside = auto()
    outside = auto()
    boundary = auto()


def k_point(m: Vector, f: Frequency) -> float:
    """k_m = -m.omega / 2."""
    return -f.dot(m) / 2


def classify(k: float, low: float, high: float, tol: float = BOUNDARY_TOL) -> Membership:
    """Membership of k in the open interval (low, high), with hits within tol of an end reported apart."""
    if abs(k - low) <= tol or abs(k - high) <= tol:
        return Membership.boundary
    return Membership.inside if low < k < high else Membership.outside


@dataclass(frozen=True)
class ResonanceInterval:
    m: Vector
    s: int
    k_minus: float
    k_plus: float

    @property
    def center(self) -> float:
        return (self.k_minus + self.k_plus) / 2

    @property
    def width(self) -> float:
        return self.k_plus - self.k_minus

    def membership(self, k: float) -> Membership:
        return classify(k, self.k_minus, self.k_plus)


def widening(m: Vector, s: int, ladder: ScaleLadder) -> float:
    """64 * sum of (delta^(r))^(1/2) over r <= s - 1 with (delta^(r))^(1/2) <= sigma(m)."""
    if s > ladder.u_max + 1:
        raise Errors.LadderRange(f"scale {s} needs delta^({s - 1}), ladder ends at {ladder.u_max}", s=s)
    log_sigma = Model.log_sigma(m, ladder)
    terms = [ladder.log_delta[r] / 2 for r in range(s) if ladder.log_delta[r] / 2 <= log_sigma]
    return 64 * sum(math.exp(t) for t in terms)


def interval(m: Vector, s: int, ladder: ScaleLadder, f: Frequency) -> ResonanceInterval:
    """(k^-_{m,s}, k^+_{m,s}) = k_m -/+ (sigma(m) + widening)."""
    if s < 0:
        raise ValueError(f"scale must be nonnegative, got {s}")
    half = Model.sigma(m, ladder) + (widening(m, s, ladder) if s > 0 else 0.0)
    center = k_point(m, f)
    return ResonanceInterval(tuple(m), s, center - half, center + half)


def _scales(norms: np.ndarray, ladder: ScaleLadder) -> np.ndarray:
    """Vectorized ScaleLadder.bracket."""
    out = np.zeros(len(norms), dtype=np.int64)
    log_norms = np.log(np.maximum(norms, 1))
    for s in range(ladder.u_max, 0, -1):
        out[log_norms <= math.log(12) + ladder.log_R[s] + Model.BRACKET_TOL] = s
    if np.any(out == 0):
        worst = float(norms[out == 0].max())
        raise Errors.LadderRange(f"|m| = {worst} lies beyond 12 R^({ladder.u_max})", norm=worst)
    return out


def _excluded(s: int, level: int, ladder: ScaleLadder, f: Frequency) -> tuple[np.ndarray, np.ndarray]:
    """Centers and half-widths of (k^-_{m',level}, k^+_{m',level}) over 0 < |m'| <= 12 R^(s)."""
    radius = 12 * ladder.R(s)
    sites = Lattice.ball_array(radius, f.nu, ENUMERATION_BUDGET)[1:]
    norms = np.abs(sites).sum(axis=1)
    scales = _scales(norms, ladder)
    halves = np.empty(len(sites))
    for bracket in np.unique(scales):
        representative = tuple(int(x) for x in sites[scales == bracket][0])
        halves[scales == bracket] = Model.sigma(representative, ladder) + widening(representative, level, ladder)
    return -(sites @ f.vector) / 2, halves


def components(s: int, window: tuple[float, float], ladder: ScaleLadder, f: Frequency) -> list[tuple[float, float]]:
    """
    Connected components of the window minus every (k^-_{m',s+1}, k^+_{m',s+1}), 0 < |m'| <= 12 R^(s)

    :param s: scale, 1 <= s < u_max + 1
    :param window: finite (low, high)
    :return: disjoint closed intervals in increasing order
    """
    low, high = window
    if not (math.isfinite(low) and math.isfinite(high) and low <= high):
        raise ValueError(f"window must be a finite interval, got {window}")
    if s < 1:
        raise ValueError(f"scale must be at least 1, got {s}")
    centers, halves = _excluded(s, s + 1, ladder, f)
    starts, ends = centers - halves, centers + halves
    keep = (ends > low) & (starts < high)
    order = np.argsort(starts[keep], kind="stable")
    pieces: list[tuple[float, float]] = []
    cursor = low
    for a, b in zip(starts[keep][order].tolist(), ends[keep][order].tolist()):
        if a >= cursor:
            pieces.append((cursor, min(a, high)))
        cursor = max(cursor, b)
        if cursor >= high:
            break
    if cursor <= high:
        pieces.append((cursor, high))
    return [(a, b) for a, b in pieces if a <= b]


def excluded(k: float, s: int, level: int, ladder: ScaleLadder, f: Frequency) -> bool:
    """k lies in some (k^-_{m',level}, k^+_{m',level}) with 0 < |m'| <= 12 R^(s)."""
    centers, halves = _excluded(s, level, ladder, f)
    return bool(np.any(np.abs(k - centers) < halves))


def admissible_level(k: float, ladder: ScaleLadder, f: Frequency) -> int:
    """
    Largest s with k outside every (k^-_{m',s}, k^+_{m',s}), 0 < |m'| <= 12 R^(s); 0 when there is none
    """
    best = 0
    for s in range(1, ladder.u_max + 1):
        if not excluded(k, s, s, ladder, f):
            best = s
    return best


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    n0: Optional[Vector] = None
    level: int = 0


@dataclass(frozen=True)
class ResonanceProfile:
    k: float
    reset: tuple[Vector, ...]
    scales: tuple[int, ...]
    principal_sets: tuple[SiteSet, ...]
    regime: Regime
    boundary: tuple[Vector, ...] = ()
    caveat: str = field(default=FINITE_WINDOW)

    @property
    def principal(self) -> Optional[SiteSet]:
        return self.principal_sets[-1] if self.principal_sets else None


def principal_sets(reset: list[Vector], nu: int) -> list[SiteSet]:
    """m^(0) = {0, n^(0)}, m^(l) = m^(l-1) united with its reflection through n^(l)."""
    if not reset:
        return []
    current = SiteSet.of([Lattice.zero(nu), reset[0]], nu)
    out = [current]
    for n in reset[1:]:
        current = current | Lattice.transform(current, Lattice.Transform.reflect_through, n)
        out.append(current)
    return out


def _regime(reset: list[Vector], boundary: list[Vector]) -> Regime:
    if boundary:
        return Regime(RegimeKind.boundary)
    match len(reset):
        case 0:
            return Regime(RegimeKind.nonresonant)
        case 1:
            return Regime(RegimeKind.simple_pair, reset[0])
    return Regime(RegimeKind.graded, reset[-1], len(reset) - 1)


def _profile(k: float, sites: np.ndarray, halves: np.ndarray, scales: np.ndarray, f: Frequency) -> ResonanceProfile:
    distance = np.abs(k - k_point_array(sites, f))
    on_edge = np.abs(distance - halves) <= BOUNDARY_TOL
    inside = (distance < halves) & ~on_edge
    members = sorted(
        ((Converters.to_vector(row), int(s)) for row, s in zip(sites[inside], scales[inside])),
        key=lambda item: Lattice.canonical_key(item[0]),
    )
    reset = [n for n, _ in members]
    boundary = sorted((Converters.to_vector(row) for row in sites[on_edge]), key=Lattice.canonical_key)
    if boundary:
        logger.warning(f"k = {k!r} lies on the boundary of the resonance windows of {boundary}")
    return ResonanceProfile(
        k,
        tuple(reset),
        tuple(s for _, s in members),
        tuple(principal_sets(reset, f.nu)),
        _regime(reset, boundary),
        tuple(boundary),
    )


def k_point_array(sites: np.ndarray, f: Frequency) -> np.ndarray:
    return -(sites @ f.vector) / 2


def _search_sites(f: Frequency, radius: Optional[int], certificate: Optional[DiophantineCertificate]) -> np.ndarray:
    if radius is None:
        if certificate is None:
            raise ValueError("either a search radius or a Diophantine certificate is needed")
        radius = certificate.N
    if certificate is not None and radius > certificate.N:
        raise Errors.WindowExceeded(
            f"search radius {radius} exceeds the certified window {certificate.N}", radius=radius, N=certificate.N
        )
    return Lattice.ball_array(radius, f.nu, ENUMERATION_BUDGET)[1:]


def reset(
    k: float,
    f: Frequency,
    ladder: ScaleLadder,
    radius: Optional[int] = None,
    certificate: Optional[DiophantineCertificate] = None,
) -> ResonanceProfile:
    """
    R(k) = {n != 0 : |k - k_n| < (delta^(s))^(3/4)}, s the bracketing scale of |n|, within the search radius

    Members are ordered by |n|; the principal sets and the regime follow from that order.
    """
    sites = _search_sites(f, radius, certificate)
    scales = _scales(np.abs(sites).sum(axis=1), ladder)
    log_delta = np.asarray(ladder.log_delta)
    halves = np.exp(0.75 * log_delta[scales])
    return _profile(k, sites, halves, scales, f)


def polynomial_window_set(
    k: float,
    f: Frequency,
    radius: Optional[int] = None,
    certificate: Optional[DiophantineCertificate] = None,
) -> ResonanceProfile:
    """Resonances under the polynomial windows (k_n - delta(n), k_n + delta(n)), delta(n) = a0 (1 + |n|)^(-b0 - 3)."""
    sites = _search_sites(f, radius, certificate)
    norms = np.abs(sites).sum(axis=1)
    halves = f.a0 * (1.0 + norms) ** (-f.b0 - 3)
    return _profile(k, sites, halves, np.zeros(len(sites), dtype=np.int64), f)
