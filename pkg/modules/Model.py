from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import auto
from functools import cached_property
from typing import Iterable, Mapping, Optional

import numpy as np
from scipy.special import logsumexp

from modules._compat import StrEnum
from modules import Converters, Errors, Lattice
from modules.Constants import ENUMERATION_BUDGET, SITE_BUDGET
from modules.Lattice import Vector

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-14
DECAY_TOL = 1e-12
# |m| = 12 R^(s) exactly must land on rung s despite log rounding
BRACKET_TOL = 1e-12


class Regime(StrEnum):
    desk = auto()
    faithful = auto()


class ViolationKind(StrEnum):
    hermitian = auto()
    decay = auto()
    origin = auto()
    parameter = auto()


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    n: Optional[Vector]
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def count(self, kind: ViolationKind) -> int:
        return sum(v.kind == kind for v in self.violations)

    def __len__(self) -> int:
        return len(self.violations)


@dataclass(frozen=True)
class Frequency:
    omega: tuple[float, ...]
    a0: float
    b0: float

    @property
    def nu(self) -> int:
        return len(self.omega)

    @cached_property
    def vector(self) -> np.ndarray:
        return np.asarray(self.omega, dtype=float)

    def dot(self, n: Iterable[int]) -> float:
        return float(np.dot(np.asarray(tuple(n), dtype=float), self.vector))

    def problems(self) -> list[str]:
        problems = []
        if max(abs(w) for w in self.omega) > 1:
            problems.append(f"omega must satisfy max|omega_j| <= 1, got {self.omega}")
        if not 0 < self.a0 < 1:
            problems.append(f"a0 must lie in (0, 1), got {self.a0}")
        if not self.b0 > self.nu:
            problems.append(f"b0 must exceed nu={self.nu}, got {self.b0}")
        return problems


@dataclass(frozen=True)
class DiophantineCertificate:
    margin: float
    witness: Optional[Vector]
    N: int
    a0: float

    @property
    def valid(self) -> bool:
        return self.margin >= self.a0


@dataclass(frozen=True)
class Potential:
    """Coefficients are stored as c0 with the raw coefficient c(n) = epsilon * c0(n)."""

    coefficients: Mapping[Vector, complex]
    epsilon: float
    kappa0: float
    nu: int

    def c0(self, n: Vector) -> complex:
        return self.coefficients.get(tuple(n), 0j)

    def c(self, n: Vector) -> complex:
        return self.epsilon * self.c0(n)

    def with_epsilon(self, epsilon: float) -> Potential:
        return replace(self, epsilon=epsilon)

    @cached_property
    def support(self) -> tuple[Vector, ...]:
        return tuple(sorted(self.coefficients, key=Lattice.canonical_key))

    @cached_property
    def support_array(self) -> np.ndarray:
        return np.array(self.support, dtype=np.int64).reshape(len(self.support), self.nu)

    @cached_property
    def support_values(self) -> np.ndarray:
        return np.array([self.coefficients[n] for n in self.support], dtype=complex)

    @property
    def is_zero(self) -> bool:
        return self.epsilon == 0 or not any(self.coefficients.values())


def _representative(n: Vector) -> Vector:
    # first nonzero coordinate positive
    for x in n:
        if x != 0:
            return n if x > 0 else Lattice.neg(n)
    return n


def validate_potential(p: Potential) -> ValidationReport:
    """
    Collects every Hermitian-pair, decay and parameter violation, never raises

    Violations are reported once per pair {n, -n}.
    """
    violations: list[Violation] = []
    if not p.epsilon > 0:
        violations.append(Violation(ViolationKind.parameter, None, f"epsilon must be positive, got {p.epsilon}"))
    if not 0 < p.kappa0 <= 0.5:
        violations.append(Violation(ViolationKind.parameter, None, f"kappa0 must lie in (0, 1/2], got {p.kappa0}"))

    pairs = sorted({_representative(n) for n in p.coefficients}, key=Lattice.canonical_key)
    for n in pairs:
        if not any(n):
            violations.append(Violation(ViolationKind.origin, n, "no coefficient may be stored at n = 0"))
            continue
        m = Lattice.neg(n)
        if n not in p.coefficients or m not in p.coefficients:
            missing = m if n in p.coefficients else n
            violations.append(Violation(ViolationKind.hermitian, n, f"missing partner coefficient at {missing}"))
        else:
            a, b = p.coefficients[n], p.coefficients[m]
            if abs(b - a.conjugate()) > HERMITIAN_TOL * max(1.0, abs(a)):
                violations.append(Violation(ViolationKind.hermitian, n, f"c({m}) != conj c({n}): {b} vs {a}"))
        bound = math.exp(-p.kappa0 * Lattice.l1_norm(n))
        worst = max(abs(p.coefficients.get(n, 0j)), abs(p.coefficients.get(m, 0j)))
        if worst > bound * (1 + DECAY_TOL):
            violations.append(
                Violation(ViolationKind.decay, n, f"|c0| = {worst} exceeds exp(-kappa0 |n|) = {bound}")
            )
    return ValidationReport(tuple(violations))


def decay_epsilon(p: Potential) -> float:
    """Smallest eps' with |c(n)| <= eps' exp(-kappa0 |n|) on the stored table."""
    if not p.coefficients:
        return 0.0
    return p.epsilon * max(abs(v) * math.exp(p.kappa0 * Lattice.l1_norm(n)) for n, v in p.coefficients.items())


def random_potential(
    rng: np.random.Generator,
    nu: int,
    radius: int,
    epsilon: float,
    kappa0: float = 0.5,
    real_even: bool = False,
    fill: float = 1.0,
) -> Potential:
    """Hermitian potential on B(radius) with |c0(n)| <= fill * exp(-kappa0 |n|)."""
    coefficients: dict[Vector, complex] = {}
    for n in Lattice.ball(radius, nu):
        if not any(n) or _representative(n) != n:
            continue
        size = fill * math.exp(-kappa0 * Lattice.l1_norm(n)) * rng.uniform(0.0, 1.0)
        phase = 0.0 if real_even else rng.uniform(0.0, 2 * math.pi)
        value = size * complex(math.cos(phase), math.sin(phase))
        coefficients[n] = value
        coefficients[Lattice.neg(n)] = value.conjugate()
    return Potential(coefficients, epsilon, kappa0, nu)


def diophantine_margin(f: Frequency, N: int) -> DiophantineCertificate:
    """
    Worst Diophantine constant min |n.omega| |n|^b0 over 0 < |n| <= N

    :param f: frequency
    :param N: search radius, N >= 1
    :return: certificate with margin and witness (first minimizer in canonical order)
    """
    if N < 1:
        raise ValueError(f"search radius must be at least 1, got {N}")
    sites = Lattice.ball_array(N, f.nu, ENUMERATION_BUDGET)
    sites = sites[1:]  # drop the origin
    first_nonzero = sites[np.arange(len(sites)), (sites != 0).argmax(axis=1)]
    sites = sites[first_nonzero > 0]
    norms = np.abs(sites).sum(axis=1).astype(float)
    values = np.abs(sites @ f.vector) * norms**f.b0
    i = int(np.argmin(values))
    return DiophantineCertificate(float(values[i]), Converters.to_vector(sites[i]), N, f.a0)


def polynomial_width(n: Vector, f: Frequency) -> float:
    return f.a0 * (1 + Lattice.l1_norm(n)) ** (-f.b0 - 3)


@dataclass(frozen=True)
class ScaleLadder:
    """
    R^(u), delta^(u) in natural-log space, u = 0 .. u_max

    u = 0 is the seed rung: R^(0) = 0 (log -inf), delta^(0) = delta0.
    """

    beta1: float
    log_R: tuple[float, ...]
    log_delta: tuple[float, ...]
    regime: Regime
    monotone: bool = True
    nu: int = 2

    @property
    def u_max(self) -> int:
        return len(self.log_R) - 1

    def _materialize(self, log_value: float, what: str) -> float:
        if self.regime == Regime.faithful:
            raise Errors.FaithfulMaterialization(f"refusing to materialize {what} of a faithful ladder")
        return math.exp(log_value)

    def R(self, u: int) -> float:
        return self._materialize(self.log_R[u], f"R^({u})")

    def delta(self, u: int) -> float:
        return self._materialize(self.log_delta[u], f"delta^({u})")

    def bracket(self, norm: float) -> int:
        """Smallest s >= 1 with norm <= 12 R^(s)."""
        if norm <= 0:
            return 1
        log_norm = math.log(norm)
        for s in range(1, self.u_max + 1):
            if log_norm <= math.log(12) + self.log_R[s] + BRACKET_TOL:
                return s
        raise Errors.LadderRange(f"|m| = {norm} lies beyond 12 R^({self.u_max})", norm=norm, u_max=self.u_max)


def build_ladder(
    delta0: Optional[float],
    beta1: float,
    u_max: int,
    regime: Regime | str = Regime.desk,
    nu: int = 2,
    budget: int = SITE_BUDGET,
    log_delta0: Optional[float] = None,
) -> ScaleLadder:
    """
    Builds the scale ladder log R^(u) = -beta1 log delta^(u-1), log delta^(u) = -(log R^(u))^2

    :param delta0: seed in (0, 1), or None when log_delta0 is given (faithful seeds underflow)
    :param beta1: exponent > 0
    :param u_max: number of rungs after the seed
    :param regime: desk or faithful
    :param nu: lattice dimension, used for the desk budget check
    :param budget: desk site budget for B(3 R^(1))
    :param log_delta0: natural log of delta0
    :return: ScaleLadder
    """
    regime = Regime(regime)
    if log_delta0 is None:
        if delta0 is None or not 0 < delta0 < 1:
            raise Errors.InvalidConfig(f"delta0 must lie in (0, 1), got {delta0}")
        log_delta0 = math.log(delta0)
    if not log_delta0 < 0:
        raise Errors.InvalidConfig(f"log delta0 must be negative, got {log_delta0}")
    if not beta1 > 0:
        raise Errors.InvalidConfig(f"beta1 must be positive, got {beta1}")
    if u_max < 1:
        raise Errors.InvalidConfig(f"u_max must be at least 1, got {u_max}")

    log_R, log_delta = [-math.inf], [log_delta0]
    for u in range(1, u_max + 1):
        log_R.append(-beta1 * log_delta[u - 1])
        log_delta.append(-(log_R[u] ** 2))
        if not (math.isfinite(log_R[u]) and math.isfinite(log_delta[u])):
            raise Errors.RegimeError(f"ladder overflows at rung {u}", rung=u)

    monotone = all(log_R[u] > log_R[u - 1] and log_delta[u] < log_delta[u - 1] for u in range(1, u_max + 1))
    if not monotone:
        if regime == Regime.faithful:
            raise Errors.RegimeError("faithful ladder must have R increasing and delta decreasing")
        logger.warning(f"desk ladder delta0=exp({log_delta0:.6g}), beta1={beta1} is not monotone")

    ladder = ScaleLadder(beta1, tuple(log_R), tuple(log_delta), regime, monotone, nu)
    if regime == Regime.desk:
        size = Lattice.ball_size(3 * ladder.R(1), nu)
        if size > budget:
            raise Errors.BudgetExceeded(
                f"desk ladder needs B(3R^(1)) with {size} sites, budget is {budget}", size=size, budget=budget
            )
    return ladder


def faithful_ladder(f: Frequency, kappa0: float, u_max: int) -> ScaleLadder:
    """Ladder seeded with log R^(1) >= max(log(100/a0), 2^34 log(1/kappa0) / beta1), beta1 = 1/(32 b0)."""
    beta1 = 1 / (32 * f.b0)
    log_R1 = max(math.log(100 / f.a0), 2**34 / beta1 * math.log(1 / kappa0))
    return build_ladder(None, beta1, u_max, Regime.faithful, f.nu, log_delta0=-log_R1 / beta1)


def log_sigma(m: Vector, ladder: ScaleLadder) -> float:
    s = ladder.bracket(Lattice.l1_norm(m))
    return math.log(32) + ladder.log_delta[s - 1] / 6


def sigma(m: Vector, ladder: ScaleLadder) -> float:
    """sigma(m) = 32 (delta^(s-1))^(1/6) with s the bracketing scale of |m|."""
    return math.exp(log_sigma(m, ladder))


@dataclass(frozen=True)
class EpsilonThresholds:
    log_eps0: float
    log_eps_s: tuple[float, ...] = field(default=())


def epsilon_thresholds(nu: int, kappa0: float, ladder: ScaleLadder) -> EpsilonThresholds:
    """
    eps0 = (eps_bar0)^3 and eps_s = eps0 - sum_{1 <= s' <= s} delta^(s'), all in log space

    eps_bar0 = min(2^(-24 nu - 4) kappa0^(4 nu), delta0^512, 2^(-10 (nu + 1)) (4 kappa0 log(1/delta0))^(-8 nu))
    log_eps_s[0] is log eps0; entries become -inf once eps_s <= 0.
    """
    log_delta0 = ladder.log_delta[0]
    log_eps_bar0 = min(
        (-24 * nu - 4) * math.log(2) + 4 * nu * math.log(kappa0),
        512 * log_delta0,
        -10 * (nu + 1) * math.log(2) - 8 * nu * math.log(4 * kappa0 * -log_delta0),
    )
    log_eps0 = 3 * log_eps_bar0
    log_eps_s = [log_eps0]
    for s in range(1, ladder.u_max + 1):
        log_total = float(logsumexp(ladder.log_delta[1 : s + 1]))
        if log_total >= log_eps0:
            logger.warning(f"eps_{s} is not positive: sum of delta^(s') exceeds eps0")
            log_eps_s.append(-math.inf)
        else:
            log_eps_s.append(log_eps0 + math.log1p(-math.exp(log_total - log_eps0)))
    return EpsilonThresholds(log_eps0, tuple(log_eps_s))
