from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import auto
from typing import Optional

import numpy as np
import scipy.linalg

from modules._compat import StrEnum
from modules import Errors, Lattice
from modules.Constants import LAMBDA_FACTOR, RESIDUAL_TOL, RESONANT_POINT_TOL, SITE_BUDGET, TWO_PI_SQ
from modules.Lattice import SiteSet, Vector
from modules.Model import Frequency, Potential

logger = logging.getLogger(__name__)


class Normalization(StrEnum):
    raw = auto()
    normalized = auto()


class Direction(StrEnum):
    k = auto()
    epsilon = auto()


def gamma_for(k: float) -> int:
    """gamma = 1 for |k| < 3/4, otherwise the smallest integer gamma with gamma - 1 <= |k| <= gamma."""
    if abs(k) < 0.75:
        return 1
    return max(1, math.ceil(abs(k)))


def lam(k: float) -> int:
    return LAMBDA_FACTOR * gamma_for(k)


def scale(k: float, normalization: Normalization) -> float:
    if normalization == Normalization.raw:
        return 1.0
    return 1.0 / (TWO_PI_SQ * lam(k))


def lookup(sites: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """
    Row indices of targets inside sites, -1 where absent

    :param sites: (N, nu) integer array of distinct rows
    :param targets: (M, nu) integer array
    :return: (M,) int64 array
    """
    if len(sites) == 0 or len(targets) == 0:
        return np.full(len(targets), -1, dtype=np.int64)
    low = min(sites.min(), targets.min())
    width = int(max(sites.max(), targets.max()) - low + 1)
    weights = width ** np.arange(sites.shape[1], dtype=np.int64)
    site_keys = (sites - low) @ weights
    target_keys = (targets - low) @ weights
    order = np.argsort(site_keys)
    sorted_keys = site_keys[order]
    position = np.clip(np.searchsorted(sorted_keys, target_keys), 0, len(sorted_keys) - 1)
    found = sorted_keys[position] == target_keys
    return np.where(found, order[position], -1)


@dataclass(frozen=True)
class DualMatrix:
    sites: SiteSet
    k: float
    entries: np.ndarray
    normalization: Normalization

    @property
    def size(self) -> int:
        return len(self.sites)

    def permuted(self, order: np.ndarray) -> np.ndarray:
        return self.entries[np.ix_(order, order)]


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    sites: SiteSet

    def nearest(self, E: float, count: int = 1) -> np.ndarray:
        return np.sort(np.argsort(np.abs(self.values - E), kind="stable")[:count])


@dataclass(frozen=True)
class DualOperator:
    """H_k(m, n) = (2 pi)^2 (m omega + k)^2 on the diagonal, c(n - m) off it."""

    frequency: Frequency
    potential: Potential
    budget: int = SITE_BUDGET

    @property
    def nu(self) -> int:
        return self.frequency.nu

    def with_potential(self, potential: Potential) -> DualOperator:
        return DualOperator(self.frequency, potential, self.budget)

    def v(self, n: Vector, k: float, normalization: Normalization = Normalization.raw) -> float:
        x = self.frequency.dot(n) + k
        return TWO_PI_SQ * x * x * scale(k, normalization)

    def v_array(self, sites: np.ndarray, k: float, normalization: Normalization = Normalization.raw) -> np.ndarray:
        x = np.asarray(sites, dtype=float) @ self.frequency.vector + k
        return TWO_PI_SQ * x * x * scale(k, normalization)

    def entry(self, m: Vector, n: Vector, k: float, normalization: Normalization = Normalization.raw) -> complex:
        if tuple(m) == tuple(n):
            return complex(self.v(m, k, normalization))
        return self.potential.c(Lattice.sub(n, m)) * scale(k, normalization)

    def offdiagonal(self, S: SiteSet, k: float, normalization: Normalization = Normalization.raw) -> np.ndarray:
        """The matrix c(n - m) over S x S, scaled to the normalization."""
        size = len(S)
        out = np.zeros((size, size), dtype=complex)
        p = self.potential
        if size == 0 or p.epsilon == 0 or not p.support:
            return out
        rows = np.arange(size)
        for d, value in zip(p.support_array, p.support_values):
            columns = lookup(S.array, S.array + d)
            hit = columns >= 0
            out[rows[hit], columns[hit]] = value
        return out * (p.epsilon * scale(k, normalization))

    def restrict(self, S: SiteSet, k: float, normalization: Normalization = Normalization.raw) -> DualMatrix:
        if not S:
            raise ValueError("cannot restrict to an empty site set")
        if len(S) > self.budget:
            raise Errors.BudgetExceeded(
                f"restriction to {len(S)} sites exceeds the budget {self.budget}", size=len(S), budget=self.budget
            )
        entries = self.offdiagonal(S, k, normalization)
        entries[np.diag_indices(len(S))] = self.v_array(S.array, k, normalization)
        return DualMatrix(S, k, entries, Normalization(normalization))

    def k_derivative(
        self, S: SiteSet, k: float, normalization: Normalization = Normalization.raw, order: int = 1
    ) -> np.ndarray:
        """Diagonal of d^order H / dk^order (gamma held fixed)."""
        x = S.array.astype(float) @ self.frequency.vector + k
        match order:
            case 1:
                return 2 * TWO_PI_SQ * x * scale(k, normalization)
            case 2:
                return np.full(len(S), 2 * TWO_PI_SQ * scale(k, normalization))
        raise ValueError(f"order must be 1 or 2, got {order}")

    def epsilon_derivative(self, S: SiteSet, k: float, normalization: Normalization = Normalization.raw) -> np.ndarray:
        if self.potential.epsilon == 0:
            unit = self.with_potential(self.potential.with_epsilon(1.0))
            return unit.offdiagonal(S, k, normalization)
        return self.offdiagonal(S, k, normalization) / self.potential.epsilon

    def cocycle_check(self, m_shift: Vector, S: SiteSet, k: float) -> float:
        """max |H_{k + l omega}(m, n) - H_k(m + l, n + l)| over S x S, raw normalization."""
        shifted = Lattice.transform(S, Lattice.Transform.translate, m_shift)
        left = self.restrict(S, k + self.frequency.dot(m_shift))
        right = self.restrict(shifted, k)
        order = lookup(shifted.array, S.array + np.asarray(m_shift, dtype=np.int64))
        return float(np.max(np.abs(left.entries - right.permuted(order)), initial=0.0))

    def reflection_conjugation_check(self, S: SiteSet, k: float) -> float:
        """max |H_{S,k}(m, n) - conj H_{-S,-k}(-m, -n)|."""
        reflected = Lattice.transform(S, Lattice.Transform.reflect)
        left = self.restrict(S, k)
        right = self.restrict(reflected, -k)
        order = lookup(reflected.array, -S.array)
        return float(np.max(np.abs(left.entries - np.conj(right.permuted(order))), initial=0.0))

    def is_resonant_point(self, k: float, radius: int) -> Optional[Vector]:
        """Some n with |n| <= radius and |k - n omega / 2| <= 1e-12, else None."""
        sites = Lattice.ball_array(radius, self.nu, max(self.budget, Lattice.ball_size(radius, self.nu)))
        gaps = np.abs(k - sites @ self.frequency.vector / 2)
        i = int(np.argmin(gaps))
        return tuple(int(x) for x in sites[i]) if gaps[i] <= RESONANT_POINT_TOL else None


def dense_spectrum(M: DualMatrix | np.ndarray, sites: Optional[SiteSet] = None) -> Spectrum:
    """
    Full Hermitian eigendecomposition, eigenvalues ascending

    :param M: DualMatrix or a bare Hermitian array
    :param sites: site labels when a bare array is given
    :return: Spectrum with per-pair residuals ||M phi - E phi||
    """
    entries = M.entries if isinstance(M, DualMatrix) else np.asarray(M)
    sites = M.sites if isinstance(M, DualMatrix) else sites
    if not np.all(np.isfinite(entries)):
        raise Errors.InvalidConfig("matrix has non-finite entries")
    values, vectors = scipy.linalg.eigh(entries)
    residuals = np.linalg.norm(entries @ vectors - vectors * values, axis=0)
    norm = max(np.linalg.norm(entries, 2), 1.0)
    worst = float(residuals.max(initial=0.0))
    if worst > RESIDUAL_TOL * norm:
        raise Errors.NonConvergence(f"eigensolver residual {worst} exceeds {RESIDUAL_TOL} * ||M||", residual=worst)
    return Spectrum(values, vectors, residuals, sites)
