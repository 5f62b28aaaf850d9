from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import auto
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg

from modules._compat import StrEnum
from modules import Errors
from modules.Constants import FD_STEP, SINGULAR_RTOL
from modules.DualOperator import DualOperator, Normalization, gamma_for, scale
from modules.Lattice import SiteSet, Vector

logger = logging.getLogger(__name__)


class BlockTag(StrEnum):
    nonresonant = auto()
    cluster = auto()


@dataclass(frozen=True)
class BlockPartition:
    host: SiteSet
    blocks: tuple[SiteSet, ...]
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        seen: set[Vector] = set()
        for block in self.blocks:
            if not seen.isdisjoint(block.members):
                raise ValueError("partition blocks must be pairwise disjoint")
            seen |= block.members
        if seen != set(self.host.members):
            raise ValueError("partition blocks must cover the host exactly")

    def indices(self) -> list[np.ndarray]:
        return [np.array([self.host.index[s] for s in block], dtype=np.int64) for block in self.blocks]


@dataclass(frozen=True)
class ResolventHandle:
    """inverse = operator^(-1) where operator = E - H (or a bare matrix when E is None)."""

    E: Optional[float]
    operator: np.ndarray
    inverse: np.ndarray
    condition_estimate: float
    sites: Optional[SiteSet] = None

    @cached_property
    def defect(self) -> float:
        product = self.operator @ self.inverse
        return float(np.abs(product - np.eye(len(product))).sum(axis=1).max(initial=0.0))

    @property
    def consistent(self) -> bool:
        return self.defect <= 1e-9 * self.condition_estimate


def _check_invertible(block: np.ndarray, label: str) -> None:
    if block.size == 0:
        return
    singular_values = np.linalg.svd(block, compute_uv=False)
    largest = max(float(singular_values.max()), np.finfo(float).tiny)
    if singular_values.min() < SINGULAR_RTOL * largest:
        raise Errors.SingularBlock(f"block {label} is singular within tolerance", block=label)


def schur_complement(M: np.ndarray, idx1: Sequence[int]) -> np.ndarray:
    """
    H2~ = H2 - G21 H1^(-1) G12 for the block idx1 against its complement (complement order kept)

    :param M: square matrix
    :param idx1: indices of the eliminated block
    :return: the Schur complement on the remaining indices
    """
    M = np.asarray(M)
    idx1 = np.asarray(idx1, dtype=np.int64)
    idx2 = np.setdiff1d(np.arange(len(M)), idx1)
    H1 = M[np.ix_(idx1, idx1)]
    _check_invertible(H1, "1")
    solved = scipy.linalg.solve(H1, M[np.ix_(idx1, idx2)])
    return M[np.ix_(idx2, idx2)] - M[np.ix_(idx2, idx1)] @ solved


def _eliminate(M: np.ndarray, blocks: list[np.ndarray], labels: list[str]) -> np.ndarray:
    """Inverse of M by eliminating blocks[0] then recursing on the Schur complement."""
    if len(blocks) == 1:
        _check_invertible(M, labels[0])
        return scipy.linalg.inv(M)
    size = len(M)
    first = blocks[0]
    rest = np.setdiff1d(np.arange(size), first)
    H1 = M[np.ix_(first, first)]
    _check_invertible(H1, labels[0])
    H1_inv = scipy.linalg.inv(H1)
    G12 = M[np.ix_(first, rest)]
    G21 = M[np.ix_(rest, first)]
    S = M[np.ix_(rest, rest)] - G21 @ H1_inv @ G12

    # re-express the remaining blocks in the coordinates of S
    position = np.full(size, -1, dtype=np.int64)
    position[rest] = np.arange(len(rest))
    S_inv = _eliminate(S, [position[b] for b in blocks[1:]], labels[1:])

    upper = H1_inv @ G12 @ S_inv
    lower = S_inv @ G21 @ H1_inv
    out = np.empty_like(M, dtype=np.result_type(M, S_inv))
    out[np.ix_(first, first)] = H1_inv + upper @ G21 @ H1_inv
    out[np.ix_(first, rest)] = -upper
    out[np.ix_(rest, first)] = -lower
    out[np.ix_(rest, rest)] = S_inv
    return out


def block_inverse(
    M: np.ndarray, partition: BlockPartition | Sequence[Iterable[int]], E: Optional[float] = None
) -> ResolventHandle:
    """
    Full inverse of M assembled by successive Schur complements over the partition blocks

    :param M: square matrix
    :param partition: BlockPartition over sites, or plain index blocks covering range(len(M))
    :param E: energy to record on the handle
    :return: ResolventHandle
    """
    M = np.asarray(M)
    if isinstance(partition, BlockPartition):
        blocks = partition.indices()
        labels = [f"{i}:{tag}" for i, tag in enumerate(partition.tags or ["block"] * len(blocks))]
        sites = partition.host
    else:
        blocks = [np.asarray(list(b), dtype=np.int64) for b in partition]
        labels = [str(i) for i in range(len(blocks))]
        sites = None
        if sorted(np.concatenate(blocks).tolist()) != list(range(len(M))):
            raise ValueError("index blocks must partition range(len(M))")
    kept = [(b, label) for b, label in zip(blocks, labels) if len(b)]
    if not kept:
        raise ValueError("cannot invert an empty matrix")
    inverse = _eliminate(M, [b for b, _ in kept], [label for _, label in kept])
    handle = ResolventHandle(E, M, inverse, float(np.linalg.cond(M)), sites)
    if not handle.consistent:
        logger.warning(f"block inverse defect {handle.defect:.3g} exceeds 1e-9 * cond")
    return handle


def resolvent(
    op: DualOperator, E: float, S: SiteSet, k: float, normalization: Normalization = Normalization.raw
) -> ResolventHandle:
    H = op.restrict(S, k, normalization).entries
    operator = E * np.eye(len(S)) - H
    _check_invertible(operator, "E - H")
    return ResolventHandle(E, operator, scipy.linalg.inv(operator), float(np.linalg.cond(operator)), S)


def multiscale_inverse(
    op: DualOperator,
    E: float,
    S: SiteSet,
    k: float,
    clusters: Sequence[SiteSet],
    floor: float = 1e-8,
    normalization: Normalization = Normalization.raw,
) -> ResolventHandle:
    """
    (E - H_S)^(-1) eliminating the nonresonant sites first, then each cluster by a Schur step

    Every site outside the clusters must satisfy |E - v(n, k)| >= floor.
    """
    clustered: set[Vector] = set()
    for cluster in clusters:
        clustered |= cluster.members
    if not clustered <= set(S.members):
        raise ValueError("clusters must lie inside S")
    nonresonant = S - clustered
    for n in nonresonant:
        gap = abs(E - op.v(n, k, normalization))
        if gap < floor:
            raise Errors.RegimeError(
                f"site {n} has |E - v(n, k)| = {gap:.3g} below the nonresonance floor {floor}", site=n
            )
    clusters = [c for c in clusters if c]
    blocks = ([nonresonant] if nonresonant else []) + clusters
    tags = ([BlockTag.nonresonant] if nonresonant else []) + [f"{BlockTag.cluster}({i})" for i in range(len(clusters))]
    partition = BlockPartition(S, tuple(blocks), tuple(tags))
    H = op.restrict(S, k, normalization).entries
    return block_inverse(E * np.eye(len(S)) - H, partition, E)


@dataclass
class ReducedSystem:
    """
    Spectral factorization of H restricted to S minus a few center sites

    One eigendecomposition serves every E: K(E) = (E - H_R)^(-1) = U diag(1/(E - lam)) U^*.
    """

    op: DualOperator
    S: SiteSet
    k: float
    centers: tuple[Vector, ...]
    normalization: Normalization = Normalization.raw
    _projections: dict[Vector, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for center in self.centers:
            if center not in self.S:
                raise ValueError(f"center {center} must belong to S")
        self.reduced = self.S - self.centers
        if self.reduced:
            H_R = self.op.restrict(self.reduced, self.k, self.normalization).entries
            self.poles, self.U = scipy.linalg.eigh(H_R)
            self.scale = max(float(np.abs(self.poles).max()), 1.0)
        else:
            self.poles, self.U = np.zeros(0), np.zeros((0, 0), dtype=complex)
            self.scale = 1.0

    def coupling(self, x: Vector) -> np.ndarray:
        """Column h(r, x) = c(x - r) over the reduced sites."""
        if not self.reduced:
            return np.zeros(0, dtype=complex)
        x_arr = np.asarray(x, dtype=np.int64)
        differences = x_arr - self.reduced.array
        p = self.op.potential
        values = np.array([p.c(tuple(d)) for d in differences.tolist()], dtype=complex)
        return values * scale(self.k, self.normalization)

    def projection(self, x: Vector) -> np.ndarray:
        if x not in self._projections:
            self._projections[x] = self.U.conj().T @ self.coupling(x)
        return self._projections[x]

    def denominators(self, E: float) -> np.ndarray:
        gaps = E - self.poles
        if gaps.size and np.abs(gaps).min() < SINGULAR_RTOL * self.scale:
            raise Errors.SingularBlock(f"E = {E} is an eigenvalue of the reduced matrix", E=E)
        return gaps

    def Q(self, x: Vector, E: float) -> float:
        P = self.projection(x)
        return float(np.sum(np.abs(P) ** 2 / self.denominators(E)))

    def dQ(self, x: Vector, E: float) -> float:
        P = self.projection(x)
        return float(-np.sum(np.abs(P) ** 2 / self.denominators(E) ** 2))

    def G(self, x: Vector, y: Vector, E: float) -> complex:
        direct = self.op.entry(x, y, self.k, self.normalization)
        return complex(direct + np.sum(np.conj(self.projection(x)) * self.projection(y) / self.denominators(E)))

    def F(self, x: Vector, E: float) -> np.ndarray:
        return self.U @ (self.projection(x) / self.denominators(E))

    def phi(self, x: Vector, E: float) -> dict[Vector, complex]:
        """Eigenvector candidate with phi(x) = 1 and phi = F on the reduced sites."""
        out = {x: 1.0 + 0j}
        out.update(zip(self.reduced.sites, self.F(x, E).tolist()))
        return out


def q_function(
    op: DualOperator,
    m0: Vector,
    S: SiteSet,
    k: float,
    E: float,
    normalization: Normalization = Normalization.raw,
    exclude: Iterable[Vector] = (),
) -> float:
    """Q(m0, S; E) = sum h(m0, m') K(m', n') h(n', m0) with K = (E - H_{S minus centers})^(-1)."""
    centers = (tuple(m0),) + tuple(tuple(x) for x in exclude if tuple(x) != tuple(m0))
    return ReducedSystem(op, S, k, centers, normalization).Q(tuple(m0), E)


def g_function(
    op: DualOperator,
    mp: Vector,
    mm: Vector,
    S: SiteSet,
    k: float,
    E: float,
    normalization: Normalization = Normalization.raw,
) -> complex:
    return ReducedSystem(op, S, k, (tuple(mp), tuple(mm)), normalization).G(tuple(mp), tuple(mm), E)


def f_vector(
    op: DualOperator,
    m0: Vector,
    S: SiteSet,
    k: float,
    E: float,
    normalization: Normalization = Normalization.raw,
) -> dict[Vector, complex]:
    system = ReducedSystem(op, S, k, (tuple(m0),), normalization)
    return dict(zip(system.reduced.sites, system.F(tuple(m0), E).tolist()))


def resolvent_derivative(
    op: DualOperator,
    E: float,
    S: SiteSet,
    k: float,
    order: int = 1,
    normalization: Normalization = Normalization.raw,
) -> np.ndarray:
    """
    k-derivatives of (E - H_k)^(-1)

    order 1: R H' R; order 2: 2 R H' R H' R + R H'' R
    """
    R = resolvent(op, E, S, k, normalization).inverse
    H1 = np.diag(op.k_derivative(S, k, normalization, 1))
    first = R @ H1 @ R
    match order:
        case 1:
            return first
        case 2:
            H2 = np.diag(op.k_derivative(S, k, normalization, 2))
            return 2 * first @ H1 @ R + R @ H2 @ R
    raise ValueError(f"order must be 1 or 2, got {order}")


def fd_resolvent_derivative(
    op: DualOperator,
    E: float,
    S: SiteSet,
    k: float,
    order: int = 1,
    normalization: Normalization = Normalization.raw,
    step: float = FD_STEP,
) -> np.ndarray:
    """Central finite-difference counterpart of resolvent_derivative."""
    if normalization == Normalization.normalized:
        if gamma_for(k - step) != gamma_for(k + step):
            raise Errors.SingularBlock("finite-difference stencil crosses a normalization change", k=k)
    minus = resolvent(op, E, S, k - step, normalization).inverse
    plus = resolvent(op, E, S, k + step, normalization).inverse
    if order == 1:
        return (plus - minus) / (2 * step)
    centre = resolvent(op, E, S, k, normalization).inverse
    return (plus - 2 * centre + minus) / step**2
