from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import auto
from typing import Iterable, Mapping, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from modules._compat import StrEnum
from modules import Converters, Errors, Lattice, Resonance
from modules.Constants import SITE_BUDGET, TWO_PI_SQ
from modules.DualOperator import Normalization, scale
from modules.Lattice import SiteSet, Vector
from modules.Model import Frequency, Regime, ScaleLadder

logger = logging.getLogger(__name__)

Word = tuple[int, ...]

WORD_BUDGET = 4


class PairRegime(StrEnum):
    inner = auto()
    overlap = auto()
    outer = auto()


# words


def _closes(word: Word, letter: int) -> Optional[int]:
    """Start of the incorrect sub-word that appending letter would close, if any."""
    for j in range(len(word) - 1, -1, -1):
        if word[j] == letter:
            return j
        if word[j] > letter:
            return None
    return None


def _check_letters(word: Iterable[int]) -> Word:
    word = tuple(int(a) for a in word)
    if any(a < 1 for a in word):
        raise ValueError(f"letters must be positive integers, got {word}")
    return word


def is_correct_word(word: Iterable[int]) -> bool:
    """No sub-word (a_j, ..., a_k) with a_j = a_k and every interior letter below a_j."""
    word = _check_letters(word)
    return all(_closes(word[:i], a) is None for i, a in enumerate(word))


def minimal_incorrect_subword(word: Iterable[int]) -> Optional[tuple[int, int]]:
    """
    Shortest incorrect sub-word as (j, k), inclusive positions, the leftmost among the shortest

    :return: None for a correct word
    """
    word = _check_letters(word)
    best: Optional[tuple[int, int]] = None
    for k, a in enumerate(word):
        j = _closes(word[:k], a)
        if j is not None and (best is None or k - j < best[1] - best[0]):
            best = (j, k)
    return best


def longest_correct_word(s: int, budget: int = WORD_BUDGET) -> Word:
    """Exhaustive depth-first search over correct words on {1, ..., s}; prefixes of correct words are correct."""
    if s < 1:
        raise ValueError(f"alphabet size must be at least 1, got {s}")
    if s > budget:
        raise Errors.BudgetExceeded(f"exhaustive word search is limited to s <= {budget}", s=s, budget=budget)
    best: Word = ()
    stack: list[Word] = [()]
    while stack:
        word = stack.pop()
        if len(word) > len(best):
            best = word
        for letter in range(s, 0, -1):
            if _closes(word, letter) is None:
                stack.append(word + (letter,))
    return best


def max_correct_length(s: int, budget: int = WORD_BUDGET) -> int:
    return len(longest_correct_word(s, budget))


# subtraction systems


@dataclass(frozen=True)
class SubtractionSystem:
    sets: tuple[SiteSet, ...]
    levels: tuple[int, ...]

    def __post_init__(self):
        if len(self.sets) != len(self.levels):
            raise ValueError("every set needs a level")
        if any(t < 1 for t in self.levels):
            raise ValueError(f"levels must be positive, got {self.levels}")

    @classmethod
    def of(cls, pairs: Iterable[tuple[SiteSet, int]]) -> SubtractionSystem:
        seen: dict[tuple[frozenset[Vector], int], SiteSet] = {}
        for S, t in pairs:
            if S:
                seen.setdefault((S.members, int(t)), S)
        return cls(tuple(seen.values()), tuple(t for _, t in seen))

    @property
    def top(self) -> int:
        return max(self.levels, default=0)

    def __len__(self) -> int:
        return len(self.sets)


@dataclass(frozen=True)
class Properness:
    proper: bool
    radii: Mapping[int, float]
    pieces: tuple[float, ...]
    problems: tuple[str, ...] = ()


def separation_radii(system: SubtractionSystem) -> dict[int, float]:
    """R_a = min dist between distinct sets of level a, inf with fewer than two."""
    radii: dict[int, float] = {}
    for a in sorted(set(system.levels)):
        group = [S for S, t in zip(system.sets, system.levels) if t == a]
        best = math.inf
        for i, first in enumerate(group):
            for second in group[i + 1 :]:
                best = min(best, Lattice.dist(first, second))
        radii[a] = best
    return radii


def _piece_diameter(S: SiteSet, meeting: list[SiteSet]) -> float:
    """
    Largest diameter of the pieces {x} plus, for each set meeting S, the point of the overlap nearest x

    Those pieces cover S and each one meets every set meeting S.
    """
    if not meeting:
        return 0.0
    points = S.array
    anchors = [points]
    for other in meeting:
        overlap = (S & other).array
        nearest = np.argmin(cdist(points, overlap, metric="cityblock"), axis=1)
        anchors.append(overlap[nearest])
    stacked = np.stack(anchors, axis=1)
    spread = np.abs(stacked[:, :, None, :] - stacked[:, None, :, :]).sum(axis=-1)
    return float(spread.max())


def properness(system: SubtractionSystem) -> Properness:
    """
    Separation by R_a > 0 within each level, plus the piece certificate: every set of level t splits into
    pieces of diameter below 2^-(t+1) R_(t+1)
    """
    radii = separation_radii(system)
    problems = [f"two level-{a} sets touch (R_{a} = 0)" for a, R in radii.items() if R <= 0]
    pieces = []
    for i, (S, t) in enumerate(zip(system.sets, system.levels)):
        meeting = [other for j, other in enumerate(system.sets) if j != i and not other.isdisjoint(S)]
        piece = _piece_diameter(S, meeting)
        pieces.append(piece)
        bound = radii.get(t + 1, math.inf) / 2 ** (t + 1)
        if not piece < bound:
            problems.append(f"set {i} (level {t}) has a piece of diameter {piece} >= {bound}")
    return Properness(not problems, radii, tuple(pieces), tuple(problems))


@dataclass(frozen=True)
class Fixpoint:
    final: SiteSet
    steps: int


def subtraction_fixpoint(start: SiteSet, system: SubtractionSystem, validate: bool = True) -> Fixpoint:
    """
    Iterates L_l = L_(l-1) minus every system set not contained in L_(l-1) until nothing changes

    :param validate: refuse systems that fail the properness checks
    :return: the fixpoint and the number of changing steps
    """
    if validate:
        report = properness(system)
        if not report.proper:
            raise Errors.ImproperSystem("; ".join(report.problems), problems=list(report.problems))
    current = set(start.members)
    steps = 0
    while True:
        cut: set[Vector] = set()
        for S in system.sets:
            if not S.members <= current:
                cut |= S.members
        updated = current - cut
        if updated == current:
            break
        current = updated
        steps += 1
    return Fixpoint(SiteSet.of(current, start.nu), steps)


def grouped(system: SubtractionSystem) -> SubtractionSystem:
    """Unions of the connected components of the overlap graph, levelled by their highest member."""
    n = len(system)
    if n == 0:
        return system
    rows, cols = [], []
    for i in range(n):
        for j in range(i + 1, n):
            if not system.sets[i].isdisjoint(system.sets[j]):
                rows.append(i)
                cols.append(j)
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    count, labels = connected_components(graph, directed=False)
    pairs = []
    for label in range(count):
        members = np.flatnonzero(labels == label)
        union = SiteSet.of(set().union(*(system.sets[i].members for i in members)), system.sets[0].nu)
        pairs.append((union, max(system.levels[i] for i in members)))
    return SubtractionSystem.of(pairs)


def holds_dichotomy(S: SiteSet, system: SubtractionSystem) -> bool:
    """Every system set is inside S or disjoint from it."""
    return all(Lattice.inside_or_disjoint(L, S) for L in system.sets)


def random_proper_system(
    rng: np.random.Generator,
    levels: int,
    nu: int = 2,
    window: int = 24,
    attempts: int = 200,
) -> SubtractionSystem:
    """
    Balls of radius a at level a, centers spread so that R_a exceeds 2^(a+1) times the level a-1 radius

    :param levels: highest level
    """
    if levels < 1:
        raise ValueError(f"levels must be at least 1, got {levels}")
    pairs = []
    for a in range(1, levels + 1):
        separation = 1 if a == 1 else 2**a * 2 * (a - 1) + 1
        centers: list[np.ndarray] = []
        for _ in range(attempts):
            if len(centers) >= 3 * (levels - a + 1):
                break
            candidate = rng.integers(-window, window + 1, size=nu)
            if all(np.abs(candidate - c).sum() - 2 * a >= separation for c in centers):
                centers.append(candidate)
        pairs.extend((Lattice.shifted_ball(Converters.to_vector(c), a), a) for c in centers)
    system = SubtractionSystem.of(pairs)
    report = properness(system)
    if not report.proper:
        raise Errors.ImproperSystem("; ".join(report.problems))
    return system


# multiscale sets


@dataclass(frozen=True)
class SiteClassification:
    k: float
    s: int
    classes: Mapping[int, tuple[Vector, ...]]
    thresholds: Mapping[int, float]
    window_radius: int

    def level_of(self, m: Vector) -> Optional[int]:
        for level, centers in self.classes.items():
            if tuple(m) in centers:
                return level
        return None

    def separation_holds(self, ladder: ScaleLadder) -> bool:
        """Distinct centers of one class sit more than 12 R^(s') apart."""
        for level, centers in self.classes.items():
            for i, first in enumerate(centers):
                for second in centers[i + 1 :]:
                    if Lattice.l1_norm(Lattice.sub(first, second)) <= 12 * ladder.R(level):
                        return False
        return True


@dataclass(frozen=True)
class BuiltSet:
    sites: SiteSet
    steps: int = 0
    system: SubtractionSystem = field(default_factory=lambda: SubtractionSystem((), ()))
    dropped: tuple[Vector, ...] = ()


class MultiscaleSets:
    """
    Desk-scale construction of the sets Lambda^(s)_k(0), their symmetrized and paired variants

    Built sets are cached per (k, s); Lambda^(s)_k(m) = m + Lambda^(s)_(k + m omega)(0).
    """

    def __init__(
        self,
        frequency: Frequency,
        ladder: ScaleLadder,
        normalization: Normalization = Normalization.normalized,
        budget: int = SITE_BUDGET,
    ):
        if ladder.regime == Regime.faithful:
            raise Errors.FaithfulMaterialization("multiscale sets are only materialized on desk ladders")
        self.frequency = frequency
        self.ladder = ladder
        self.normalization = Normalization(normalization)
        self.budget = budget
        self._plain: dict[tuple[float, int], BuiltSet] = {}
        self._classes: dict[tuple[float, int, int], SiteClassification] = {}

    @property
    def nu(self) -> int:
        return self.frequency.nu

    def v_gap(self, sites: np.ndarray, k: float) -> np.ndarray:
        """|v(m, k) - v(0, k)| per row."""
        factor = TWO_PI_SQ * scale(k, self.normalization)
        return np.abs(factor * ((sites @ self.frequency.vector + k) ** 2 - k * k))

    def _require(self, k: float, s: int) -> None:
        if Resonance.excluded(k, s, s - 1, self.ladder, self.frequency):
            raise Errors.ExcludedMomentum(
                f"k = {k!r} lies in a level-{s - 1} resonance interval with |m'| <= 12 R^({s})", k=k, s=s
            )

    def thresholds(self, s: int) -> dict[int, float]:
        """Class thresholds for scales 1 .. s-1, the corrections sum delta^(s''-1) over s' < s'' <= s-1."""
        out = {}
        for level in range(1, s):
            base = self.ladder.delta(0) / 16 if level == 1 else 3 * self.ladder.delta(level - 1) / 4
            out[level] = base - sum(self.ladder.delta(u - 1) for u in range(level + 1, s))
        return out

    def default_window(self, s: int) -> int:
        return math.floor(3 * self.ladder.R(s) + 3 * self.ladder.R(s - 1)) if s > 1 else 0

    def site_classes(self, k: float, s: int, window_radius: Optional[int] = None, check: bool = True) -> SiteClassification:
        """
        M^(s')_(k,s-1) for s' = s-1 down to 1, top-down so that each class avoids the sets of the higher ones

        :param window_radius: centers are searched in B(window_radius)
        """
        if s < 2:
            raise ValueError(f"site classes need s >= 2, got {s}")
        if check:
            self._require(k, s - 1)
        radius = self.default_window(s) if window_radius is None else int(window_radius)
        key = (k, s, radius)
        if key in self._classes:
            return self._classes[key]

        sites = Lattice.ball_array(radius, self.nu, self.budget)
        gaps = self.v_gap(sites, k)
        thresholds = self.thresholds(s)
        blocked: set[Vector] = set()
        classes: dict[int, tuple[Vector, ...]] = {}
        for level in range(s - 1, 0, -1):
            hits = [Converters.to_vector(row) for row in sites[gaps <= thresholds[level]]]
            members = tuple(m for m in hits if m not in blocked)
            classes[level] = members
            for m in members:
                blocked |= self.lambda_at(m, k, level).members
        logger.debug(f"site classes at k={k!r}, s={s}: {({t: len(c) for t, c in classes.items()})}")
        classification = SiteClassification(k, s, classes, thresholds, radius)
        self._classes[key] = classification
        return classification

    def lambda_at(self, m: Vector, k: float, level: int) -> SiteSet:
        """Lambda^(level)_k(m)."""
        base = self.lambda_plain(k + self.frequency.dot(m), level, check=False).sites
        return Lattice.transform(base, Lattice.Transform.translate, tuple(m)) if any(m) else base

    def lower_system(self, classification: SiteClassification) -> tuple[SubtractionSystem, list[Vector]]:
        pairs, centers = [], []
        for level, members in classification.classes.items():
            for m in members:
                pairs.append((self.lambda_at(m, classification.k, level), level))
                centers.append(m)
        return SubtractionSystem(tuple(S for S, _ in pairs), tuple(t for _, t in pairs)), centers

    def lambda_plain(self, k: float, s: int, check: bool = True) -> BuiltSet:
        """
        Lambda^(s)_k(0): B(2 R^(1)) for s = 1, otherwise B(3 R^(s)) with every straddling lower set removed
        until the inside-or-disjoint dichotomy holds
        """
        if s < 1:
            raise ValueError(f"scale must be at least 1, got {s}")
        if check:
            self._require(k, s)
        key = (k, s)
        if key in self._plain:
            return self._plain[key]
        if s == 1:
            built = BuiltSet(Lattice.ball(2 * self.ladder.R(1), self.nu, self.budget))
        else:
            system, _ = self.lower_system(self.site_classes(k, s, check=False))
            outer = Lattice.ball(3 * self.ladder.R(s), self.nu, self.budget)
            fixpoint = subtraction_fixpoint(outer, system, validate=False)
            built = BuiltSet(fixpoint.final, fixpoint.steps, system)
        self._plain[key] = built
        return built

    def lambda_sym(self, k: float, s: int, check: bool = True) -> BuiltSet:
        """Reflection-invariant Lambda^(s)_(k,sym)(0) for |k| < delta^(s-2)."""
        if s < 2:
            return self.lambda_plain(k, s, check)
        if check and not abs(k) < self.ladder.delta(s - 2):
            raise Errors.ExcludedMomentum(f"symmetrization needs |k| < delta^({s - 2}), got k = {k!r}", k=k, s=s)
        system, _ = self.lower_system(self.site_classes(k, s, check=False))
        mirrored = [(Lattice.transform(S, Lattice.Transform.reflect), t) for S, t in zip(system.sets, system.levels)]
        closed = grouped(SubtractionSystem.of(list(zip(system.sets, system.levels)) + mirrored))
        outer = Lattice.ball(3 * self.ladder.R(s), self.nu, self.budget)
        fixpoint = subtraction_fixpoint(outer, closed, validate=False)
        return BuiltSet(fixpoint.final, fixpoint.steps, closed)

    def lambda_pair(self, k: float, s: int, n0: Vector, check: bool = True) -> BuiltSet:
        """
        T-invariant Lambda^(s,1)_k(0), T(n) = n0 - n, grown from B(3 R^(s)) united with T(B(3 R^(s)))

        Lower sets whose partner center T(m) falls outside the search window are dropped with their image.
        """
        n0 = tuple(n0)
        if check:
            window = Resonance.interval(n0, s, self.ladder, self.frequency)
            if window.membership(k) != Resonance.Membership.inside:
                raise Errors.ExcludedMomentum(
                    f"k = {k!r} lies outside ({window.k_minus!r}, {window.k_plus!r}) around k_n0", k=k, n0=n0
                )
        outer = Lattice.ball(3 * self.ladder.R(s), self.nu, self.budget)
        start = outer | Lattice.transform(outer, Lattice.Transform.reflect_through, n0)
        if s == 1:
            return BuiltSet(start)
        radius = Lattice.l1_norm(n0) + self.default_window(s)
        system, centers = self.lower_system(self.site_classes(k, s, radius, check=False))
        kept, dropped = [], []
        for S, t, m in zip(system.sets, system.levels, centers):
            if Lattice.l1_norm(Lattice.sub(n0, m)) > radius:
                dropped.append(m)
                continue
            kept.append((S, t))
            kept.append((Lattice.transform(S, Lattice.Transform.reflect_through, n0), t))
        if dropped:
            logger.warning(f"lambda_pair at k={k!r}, n0={n0}: dropped centers with partners outside the window {dropped}")
        closed = grouped(SubtractionSystem.of(kept))
        fixpoint = subtraction_fixpoint(start, closed, validate=False)
        return BuiltSet(fixpoint.final, fixpoint.steps, closed, tuple(dropped))

    def pair_regime(self, k: float, n0: Vector, s: int) -> PairRegime:
        """Inner below (delta^(s-1))^(7/8) from k_n0, outer from (delta^(s-1))^(3/4), overlap between."""
        distance = abs(k - Resonance.k_point(n0, self.frequency))
        log_delta = self.ladder.log_delta[s - 1]
        if distance < math.exp(7 * log_delta / 8):
            return PairRegime.inner
        if distance >= math.exp(3 * log_delta / 4):
            return PairRegime.outer
        return PairRegime.overlap


def log_cardinality_bound(ladder: ScaleLadder, s: int, nu: int) -> float:
    """log of (6 R^(s) + 1)^nu >= |B(3 R^(s))|, valid for faithful ladders."""
    return nu * float(np.logaddexp(math.log(6) + ladder.log_R[s], 0.0))
