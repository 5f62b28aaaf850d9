from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import auto
from typing import Iterable, Optional, Sequence

import numpy as np

from modules._compat import StrEnum
from modules import Errors, Lattice, Model
from modules.DualOperator import DualOperator, Normalization
from modules.Lattice import Vector
from modules.Model import Potential
from modules.Schur import ReducedSystem
from modules.Spectral import GapRecord, gap_at, paired_box

logger = logging.getLogger(__name__)

DESK_CAVEAT = "finite window only: the infinite-scale decay conclusion is out of reach at desk scale"

BOUND_RTOL = 1e-9

# largest decay normalization at which forward violations count as failures
SMALL_COUPLING = 1e-2


@dataclass(frozen=True)
class GapRow:
    m: Vector
    record: Optional[GapRecord] = None
    error: Optional[str] = None

    @property
    def width(self) -> float:
        return self.record.width if self.record else math.nan


def gap_row(op: DualOperator, m: Vector, box_radius: float = 8) -> GapRow:
    """One gap_at call with its failure folded into the row."""
    m = tuple(m)
    try:
        return GapRow(m, gap_at(op, m, box_radius=box_radius))
    except Errors.Base as e:
        logger.warning(f"gap at m={m} failed: {e.text}")
        return GapRow(m, error=f"{e.__class__.__name__}: {e.text}")


def gap_table(op: DualOperator, m_list: Iterable[Vector], box_radius: float = 8) -> list[GapRow]:
    return [gap_row(op, m, box_radius) for m in m_list]


@dataclass(frozen=True)
class ForwardRow:
    m: Vector
    width: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound - self.width

    @property
    def passes(self) -> bool:
        return self.width <= self.bound * (1 + BOUND_RTOL) + 1e-15


@dataclass(frozen=True)
class ForwardReport:
    rows: tuple[ForwardRow, ...]
    epsilon: float
    kappa0: float
    failed: tuple[Vector, ...] = ()
    note: Optional[str] = None

    @property
    def violations(self) -> tuple[ForwardRow, ...]:
        return tuple(row for row in self.rows if not row.passes)

    @property
    def passes(self) -> bool:
        return not self.violations and not self.failed

    @property
    def asserted(self) -> bool:
        return self.epsilon <= SMALL_COUPLING


def verify_forward(table: Sequence[GapRow], p: Potential) -> ForwardReport:
    """
    width(m) <= 2 eps' exp(-kappa0 |m| / 2) per row, eps' the decay normalization of the stored table

    Violations are reported with their margins; at couplings outside the small regime they are not a
    counterexample and the report says so.
    """
    eps = Model.decay_epsilon(p)
    rows, failed = [], []
    for row in table:
        if row.record is None:
            failed.append(row.m)
            continue
        bound = 2 * eps * math.exp(-p.kappa0 * Lattice.l1_norm(row.m) / 2)
        rows.append(ForwardRow(row.m, row.width, bound))
    report = ForwardReport(tuple(rows), eps, p.kappa0, tuple(failed))
    if report.violations and not report.asserted:
        note = f"violations at eps' = {eps:.6g} lie outside the small-coupling regime and are not a counterexample"
        logger.warning(note)
        report = ForwardReport(report.rows, eps, p.kappa0, tuple(failed), note)
    return report


@dataclass(frozen=True)
class CoefficientBound:
    n0: Vector
    gap_width: float
    traj_term: float
    rhs: float
    rhs_computed: Optional[float] = None

    def holds(self, value: float) -> bool:
        best = self.rhs if self.rhs_computed is None else min(self.rhs, self.rhs_computed)
        return value <= best * (1 + BOUND_RTOL) + 1e-300


def coefficient_bound(
    n0: Vector,
    gap_width: float,
    traj_term: float,
    eps0: float,
    kappa0: float,
    mu: Optional[float] = None,
) -> CoefficientBound:
    """
    |c(n0)| <= eps0^-1 exp(kappa0 |n0|) (E+ - E-) + traj_term

    :param mu: the computed |mu| at the root; when given the gap term is also reported as width / |mu|
    """
    if gap_width < 0 or traj_term < 0:
        raise ValueError("gap width and trajectory term must be nonnegative")
    rhs = gap_width * math.exp(kappa0 * Lattice.l1_norm(n0)) / eps0 + traj_term
    computed = None if mu is None else (gap_width / mu if mu > 0 else (0.0 if gap_width == 0 else math.inf)) + traj_term
    return CoefficientBound(tuple(n0), gap_width, traj_term, rhs, computed)


def remainder_bound(system: ReducedSystem, x: Vector, y: Vector, E: float, len_cap: int = 8) -> float:
    """
    Certified bound on |sum h(x, m') (E - H_R)^-1(m', n') h(n', y)| from trajectories of length <= len_cap

    |(E - H_R)^-1| <= sum_j (|D^-1| |V|)^j |D^-1| entrywise, D the diagonal part; the tail is bounded by
    r^len_cap / (1 - r) with r the row-sum norm of |D^-1| |V|. Returns inf when r >= 1.
    """
    if not system.reduced:
        return 0.0
    H = system.op.restrict(system.reduced, system.k, system.normalization).entries
    gaps = np.abs(E - np.real(np.diag(H)))
    if np.any(gaps == 0):
        return math.inf
    V = np.abs(H - np.diag(np.diag(H)))
    step = V / gaps[:, None]
    r = float(step.sum(axis=1).max())
    if r >= 1:
        return math.inf
    left = np.abs(system.coupling(x))
    right = np.abs(system.coupling(y))
    term = right / gaps
    total = float(left @ term)
    for _ in range(1, len_cap):
        term = step @ term
        total += float(left @ term)
    tail = r**len_cap / (1 - r) * float(np.abs(left).sum() * np.abs(right).max() / gaps.min())
    return total + tail


@dataclass(frozen=True)
class Recovery:
    n0: Vector
    true_value: float
    bound: CoefficientBound
    remainder: float
    certified_remainder: float

    @property
    def holds(self) -> bool:
        return self.bound.holds(self.true_value)


def recover_coefficient(
    op: DualOperator,
    n0: Vector,
    box_radius: float = 8,
    eps0: float = 1.0,
    len_cap: int = 8,
    record: Optional[GapRecord] = None,
) -> Recovery:
    """
    Gap-to-coefficient inequality at n0 on the paired box

    The trajectory term is the desk-computed |G(0, n0; E+) - h(0, n0)|; the gap term also appears in the
    computed-mu form width / mu with mu = width / |G(0, n0; E+)|.
    """
    n0 = tuple(n0)
    record = record or gap_at(op, n0, box_radius=box_radius)
    S = paired_box(n0, box_radius, op.budget)
    origin = Lattice.zero(len(n0))
    system = ReducedSystem(op, S, record.k_point, (origin, n0), Normalization.raw)
    E = record.E_plus
    G = system.G(origin, n0, E)
    direct = op.entry(origin, n0, record.k_point)
    remainder = abs(G - direct)
    mu = record.width / abs(G) if abs(G) > 0 else None
    bound = coefficient_bound(n0, max(record.width, 0.0), remainder, eps0, op.potential.kappa0, mu)
    certified = remainder_bound(system, origin, n0, E, len_cap)
    return Recovery(n0, abs(op.potential.c(n0)), bound, remainder, certified)


@dataclass(frozen=True)
class DecayBound:
    eps_hat: float
    kappa_hat: float

    def __post_init__(self):
        if not (self.eps_hat > 0 and self.kappa_hat > 0):
            raise ValueError(f"decay bound needs eps_hat > 0 and kappa_hat > 0, got {self}")

    def value(self, norm: float, rate: float = 1.0) -> float:
        return self.eps_hat * math.exp(-rate * self.kappa_hat * norm)


@dataclass(frozen=True)
class DecayLadder:
    """R_t = 5 R_(t-1) / 4 from R_1, rho_l = 2^-10 (l + 1)^-2, sigma_t = rho_1 + ... + rho_t."""

    R: tuple[float, ...]
    rho: tuple[float, ...]
    sigma: tuple[float, ...]

    @property
    def t_max(self) -> int:
        return len(self.R)

    def R_at(self, t: int) -> float:
        return self.R[0] * 1.25 ** (t - 1)

    def sigma_at(self, t: int) -> float:
        if t <= len(self.sigma):
            return self.sigma[t - 1] if t > 0 else 0.0
        return self.sigma[-1] + sum(2.0**-10 / (l + 1) ** 2 for l in range(len(self.sigma) + 1, t + 1))

    def relaxed_rate(self, t: int) -> float:
        """(15/16)(1 - sigma_3t)."""
        return 15 / 16 * (1 - self.sigma_at(3 * t))

    def rate(self, norm: float) -> float:
        """1 on |p| <= R_2, otherwise the relaxed rate of the t with R_(t-1) < |p| <= R_t."""
        if norm <= self.R_at(2):
            return 1.0
        t = max(3, math.ceil(1 + math.log(norm / self.R[0]) / math.log(1.25) - 1e-12))
        while self.R_at(t - 1) >= norm:
            t -= 1
        while self.R_at(t) < norm:
            t += 1
        return self.relaxed_rate(t)


def decay_ladder(t_max: int, R0: float) -> DecayLadder:
    if t_max < 2 or not R0 > 0:
        raise ValueError(f"decay ladder needs t_max >= 2 and R0 > 0, got {t_max}, {R0}")
    R = tuple(R0 * 1.25**t for t in range(t_max))
    rho = tuple(2.0**-10 / (l + 1) ** 2 for l in range(1, 3 * t_max + 5))
    sigma = tuple(np.cumsum(rho).tolist())
    return DecayLadder(R, rho, sigma)


def first_violation(bound: DecayBound, p: Potential, ladder: Optional[DecayLadder] = None) -> Optional[tuple[Vector, float, float]]:
    """(p, |c(p)|, allowed) for the first stored coefficient above the bound, in canonical order."""
    for n in p.support:
        norm = Lattice.l1_norm(n)
        allowed = bound.value(norm, ladder.rate(norm) if ladder else 1.0)
        size = abs(p.c(n))
        if size > allowed * (1 + BOUND_RTOL):
            return n, size, allowed
    return None


def improve_decay(current: DecayBound, p: Potential, ladder: DecayLadder) -> DecayBound:
    """
    (eps_hat, kappa_hat) -> (eps_hat / 2, 7 kappa_hat / 6), checked on the stored coefficients with the
    relaxed rate beyond R_2

    :raises DecayVerificationFailed: the current or the improved bound fails at some stored p
    """
    before = first_violation(current, p)
    if before is not None:
        n, size, allowed = before
        raise Errors.DecayVerificationFailed(
            f"current bound fails at p={n}: |c| = {size:.6g} > {allowed:.6g}", p=n, stage="current"
        )
    improved = DecayBound(current.eps_hat / 2, 7 * current.kappa_hat / 6)
    after = first_violation(improved, p, ladder)
    if after is not None:
        n, size, allowed = after
        raise Errors.DecayVerificationFailed(
            f"improved bound fails at p={n}: |c| = {size:.6g} > {allowed:.6g}", p=n, stage="improved"
        )
    return improved


@dataclass(frozen=True)
class HypothesisReport:
    holds: bool
    eps_gap: float
    eps_gap_max: float
    kappa: float
    kappa0: float
    problems: tuple[str, ...] = ()


def hypothesis_check(table: Sequence[GapRow], p: Potential, kappa: float, eps_gap_max: float) -> HypothesisReport:
    """
    width(m) <= eps_gap exp(-kappa |m|) with eps_gap the tightest such constant on the table

    Holds when kappa > 4 kappa0, eps_gap < eps_gap_max and every row was computed.
    """
    problems = []
    if not kappa > 4 * p.kappa0:
        problems.append(f"kappa = {kappa} must exceed 4 kappa0 = {4 * p.kappa0}")
    failed = [row.m for row in table if row.record is None]
    if failed:
        problems.append(f"gap rows failed for {failed}")
    widths = [(row.m, max(row.width, 0.0)) for row in table if row.record is not None]
    eps_gap = max((w * math.exp(kappa * Lattice.l1_norm(m)) for m, w in widths), default=0.0)
    if not eps_gap < eps_gap_max:
        problems.append(f"eps_gap = {eps_gap:.6g} is not below {eps_gap_max:.6g}")
    return HypothesisReport(not problems, eps_gap, eps_gap_max, kappa, p.kappa0, tuple(problems))


class StopReason(StrEnum):
    target = auto()
    max_iterations = auto()
    rate_cap = auto()
    refused = auto()
    hypothesis = auto()


@dataclass(frozen=True)
class InverseReport:
    hypothesis: HypothesisReport
    recoveries: tuple[Recovery, ...] = ()
    iterations: tuple[DecayBound, ...] = ()
    stop: StopReason = StopReason.hypothesis
    refusal: Optional[str] = None
    pointwise: tuple[tuple[Vector, float, float], ...] = ()
    caveat: str = field(default=DESK_CAVEAT)

    @property
    def recovery_holds(self) -> bool:
        return all(r.holds for r in self.recoveries)

    @property
    def improvement_holds(self) -> bool:
        return self.stop != StopReason.refused

    @property
    def pointwise_holds(self) -> bool:
        return all(size <= target * (1 + BOUND_RTOL) for _, size, target in self.pointwise)

    @property
    def passes(self) -> bool:
        return self.hypothesis.holds and self.recovery_holds and self.improvement_holds and self.pointwise_holds


def _target(eps_gap: float, kappa: float, norm: int) -> float:
    return math.sqrt(eps_gap) * math.exp(-kappa * norm / 2)


def verify_inverse(
    op: DualOperator,
    window: int = 4,
    box_radius: float = 8,
    kappa: Optional[float] = None,
    max_iterations: int = 8,
    R0: float = 2.0,
    eps0: float = 1.0,
    table: Optional[Sequence[GapRow]] = None,
) -> InverseReport:
    """
    Gap hypothesis, coefficient recovery on 0 < |m| <= window, decay improvement, then the pointwise comparison
    |c(m)| <= eps_gap^(1/2) exp(-kappa |m| / 2)

    :param kappa: gap decay rate, 4 kappa0 + 0.1 by default
    :param R0: R_1 of the decay ladder; eps_gap must stay below exp(-2 R_2)
    """
    p = op.potential
    kappa = 4 * p.kappa0 + 0.1 if kappa is None else kappa
    sites = window_sites(window, op.nu)
    table = gap_table(op, sites, box_radius) if table is None else table
    ladder = decay_ladder(max(max_iterations, 2), R0)
    hypothesis = hypothesis_check(table, p, kappa, math.exp(-2 * ladder.R_at(2)))
    if not hypothesis.holds:
        logger.warning(f"gap hypothesis fails: {'; '.join(hypothesis.problems)}")
        return InverseReport(hypothesis)

    records = {row.m: row.record for row in table}
    recoveries = tuple(
        recover_coefficient(op, m, box_radius, eps0, record=records.get(m)) for m in sites if records.get(m)
    )

    eps_gap = hypothesis.eps_gap
    current = DecayBound(max(Model.decay_epsilon(p), 2 * math.sqrt(eps_gap), 1e-300), p.kappa0)
    iterations = [current]
    stop, refusal = StopReason.max_iterations, None
    for _ in range(max_iterations):
        if all(current.value(Lattice.l1_norm(m)) <= _target(eps_gap, kappa, Lattice.l1_norm(m)) for m in sites):
            stop = StopReason.target
            break
        if 7 * current.kappa_hat / 6 > kappa / 2:
            stop = StopReason.rate_cap
            break
        try:
            current = improve_decay(current, p, ladder)
        except Errors.DecayVerificationFailed as e:
            stop, refusal = StopReason.refused, e.text
            break
        iterations.append(current)
    pointwise = tuple((m, abs(p.c(m)), _target(eps_gap, kappa, Lattice.l1_norm(m))) for m in sites)
    logger.info(f"inverse verification stopped after {len(iterations) - 1} improvements ({stop})")
    return InverseReport(hypothesis, recoveries, tuple(iterations), stop, refusal, pointwise)


def window_sites(window: int, nu: int) -> list[Vector]:
    return [n for n in Lattice.ball(window, nu).sites if any(n)]


def m_list_default(window: int, nu: int) -> list[Vector]:
    """Nonzero sites of B(window) with the first nonzero coordinate positive, one per pair {m, -m}."""
    return [n for n in window_sites(window, nu) if next(x for x in n if x) > 0]
