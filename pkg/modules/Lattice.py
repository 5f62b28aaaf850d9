from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from enum import auto
from functools import cached_property
from typing import Iterable, Iterator, Optional

import numpy as np
from scipy.spatial.distance import cdist

from modules._compat import StrEnum
from modules import Errors
from modules.Constants import SITE_BUDGET

logger = logging.getLogger(__name__)

Vector = tuple[int, ...]

_CDIST_CHUNK = 2048


def l1_norm(n: Iterable[int]) -> int:
    return sum(abs(int(x)) for x in n)


def canonical_key(n: Vector) -> tuple[int, Vector]:
    return l1_norm(n), n


def add(m: Vector, n: Vector) -> Vector:
    return tuple(a + b for a, b in zip(m, n))


def sub(m: Vector, n: Vector) -> Vector:
    return tuple(a - b for a, b in zip(m, n))


def neg(n: Vector) -> Vector:
    return tuple(-a for a in n)


def zero(nu: int) -> Vector:
    return (0,) * nu


def ball_size(R: float, nu: int) -> int:
    """Number of lattice points with l1 norm at most R in dimension nu."""
    if R < 0:
        return 0
    r = math.floor(R)
    return sum(2**k * math.comb(nu, k) * math.comb(r, k) for k in range(min(nu, r) + 1))


def _rows(r: int, nu: int) -> Iterator[Vector]:
    if nu == 0:
        yield ()
        return
    for x in range(-r, r + 1):
        for rest in _rows(r - abs(x), nu - 1):
            yield (x,) + rest


def ball_array(R: float, nu: int, budget: int = SITE_BUDGET) -> np.ndarray:
    """
    The l1 ball B(R) as an (N, nu) integer array in canonical order

    :param R: radius, floor semantics
    :param nu: lattice dimension
    :param budget: maximum number of sites
    :return: int64 array
    """
    if R < 0:
        raise ValueError(f"ball radius must be nonnegative, got {R}")
    size = ball_size(R, nu)
    if size > budget:
        raise Errors.BudgetExceeded(
            f"ball of radius {R} in dimension {nu} has {size} sites, budget is {budget}", size=size, budget=budget
        )
    rows = sorted(_rows(math.floor(R), nu), key=canonical_key)
    return np.array(rows, dtype=np.int64).reshape(len(rows), nu)


@dataclass(frozen=True)
class SiteSet:
    """Finite subset of Z^nu stored in canonical (l1 norm, then lexicographic) order."""

    sites: tuple[Vector, ...]
    nu: int

    @classmethod
    def of(cls, sites: Iterable[Iterable[int]], nu: Optional[int] = None) -> SiteSet:
        vectors = {tuple(int(x) for x in site) for site in sites}
        if nu is None:
            if not vectors:
                raise ValueError("dimension of an empty site set must be given")
            nu = len(next(iter(vectors)))
        if any(len(v) != nu for v in vectors):
            raise ValueError(f"all sites must have dimension {nu}")
        return cls(tuple(sorted(vectors, key=canonical_key)), nu)

    @classmethod
    def from_array(cls, array: np.ndarray, nu: Optional[int] = None) -> SiteSet:
        array = np.asarray(array, dtype=np.int64)
        return cls.of(map(tuple, array.tolist()), nu if nu is not None else array.shape[1])

    @cached_property
    def members(self) -> frozenset[Vector]:
        return frozenset(self.sites)

    @cached_property
    def array(self) -> np.ndarray:
        return np.array(self.sites, dtype=np.int64).reshape(len(self.sites), self.nu)

    @cached_property
    def index(self) -> dict[Vector, int]:
        return {site: i for i, site in enumerate(self.sites)}

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self) -> Iterator[Vector]:
        return iter(self.sites)

    def __contains__(self, item: Iterable[int]) -> bool:
        return tuple(item) in self.members

    def __bool__(self) -> bool:
        return bool(self.sites)

    def __or__(self, other: SiteSet) -> SiteSet:
        return SiteSet.of(self.members | other.members, self.nu)

    def __and__(self, other: SiteSet) -> SiteSet:
        return SiteSet.of(self.members & other.members, self.nu)

    def __sub__(self, other: SiteSet | Iterable[Vector]) -> SiteSet:
        other_members = other.members if isinstance(other, SiteSet) else {tuple(v) for v in other}
        return SiteSet(tuple(s for s in self.sites if s not in other_members), self.nu)

    def issubset(self, other: SiteSet) -> bool:
        return self.members <= other.members

    def isdisjoint(self, other: SiteSet) -> bool:
        return self.members.isdisjoint(other.members)

    def to_list(self) -> list[list[int]]:
        return [list(site) for site in self.sites]


def ball(R: float, nu: int, budget: int = SITE_BUDGET) -> SiteSet:
    return SiteSet(tuple(map(tuple, ball_array(R, nu, budget).tolist())), nu)


def shifted_ball(center: Vector, R: float, budget: int = SITE_BUDGET) -> SiteSet:
    return transform(ball(R, len(center), budget), Transform.translate, center)


class Transform(StrEnum):
    translate = auto()
    reflect = auto()
    reflect_through = auto()


def transform(S: SiteSet, kind: Transform, m: Optional[Vector] = None) -> SiteSet:
    match kind:
        case Transform.translate:
            return SiteSet.of((add(n, m) for n in S), S.nu)
        case Transform.reflect:
            return SiteSet.of((neg(n) for n in S), S.nu)
        case Transform.reflect_through:
            return SiteSet.of((sub(m, n) for n in S), S.nu)
    raise ValueError(f"unknown transform {kind}")


def straddles(S1: SiteSet, S2: SiteSet) -> bool:
    """S1 meets S2 and also sticks out of it."""
    return not S1.isdisjoint(S2) and not S1.issubset(S2)


def inside_or_disjoint(S1: SiteSet, S2: SiteSet) -> bool:
    return S1.issubset(S2) or S1.isdisjoint(S2)


def dist(S1: SiteSet, S2: SiteSet) -> int:
    if not S1 or not S2:
        raise ValueError("dist is undefined on an empty site set")
    a, b = S1.array, S2.array
    best = math.inf
    for start in range(0, len(a), _CDIST_CHUNK):
        block = cdist(a[start : start + _CDIST_CHUNK], b, metric="cityblock")
        best = min(best, float(block.min()))
        if best == 0:
            break
    return int(round(best))


def dist_to_point(S: SiteSet, n: Vector) -> int:
    if not S:
        raise ValueError("dist is undefined on an empty site set")
    return int(np.abs(S.array - np.asarray(n, dtype=np.int64)).sum(axis=1).min())


def diam(S: SiteSet) -> int:
    """Largest pairwise l1 distance, via max over sign patterns of the spread of s.x."""
    if not S:
        raise ValueError("diam is undefined on an empty site set")
    a = S.array
    best = 0
    for tail in itertools.product((1, -1), repeat=S.nu - 1):
        projection = a @ np.array((1,) + tail, dtype=np.int64)
        best = max(best, int(projection.max() - projection.min()))
    return best
