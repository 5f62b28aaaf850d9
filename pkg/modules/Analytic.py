from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import auto
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from modules._compat import StrEnum
from modules import Errors

logger = logging.getLogger(__name__)

Surface = Callable[[float, float], float]
Analytic2 = Callable[[np.ndarray, np.ndarray], np.ndarray]
Analytic1 = Callable[[np.ndarray], np.ndarray]

CF_STEP = 1e-5
CF_STEP_2 = 1e-4
ROOT_TOL = 1e-12
CONTOUR_POINTS = 64
NEWTON_STEPS = 50


class Branch(StrEnum):
    plus = auto()
    minus = auto()


@dataclass(frozen=True)
class CFNode:
    """
    Continued-fraction function over (x, u)

    Level 0 is a leaf u - a(x, u). A node of level l joins two nodes of level l - 1 with a coupling b^2:
    variant 1 is f1 - b^2 / f2, variant 2 is f2 - b^2 / f1.
    """

    level: int
    a: Optional[Surface] = None
    children: tuple[CFNode, CFNode] | tuple = ()
    b2: Optional[Surface] = None
    variant: int = 1
    sigma: int = 1

    @classmethod
    def leaf(cls, a: Surface | float) -> CFNode:
        if not callable(a):
            value = float(a)
            return cls(0, a=lambda x, u: value)
        return cls(0, a=a)

    @classmethod
    def join(cls, f1: CFNode, f2: CFNode, b2: Surface | float, variant: int = 1) -> CFNode:
        if variant not in (1, 2):
            raise ValueError(f"variant must be 1 or 2, got {variant}")
        if f1.level != f2.level:
            raise ValueError("siblings must share a level")
        if f1.sigma != f2.sigma:
            raise ValueError("siblings must carry the same sign")
        if not callable(b2):
            value = float(b2)
            b2 = lambda x, u: value  # noqa: E731
        sign = 1 if variant == 1 else -1
        return cls(f1.level + 1, children=(f1, f2), b2=b2, variant=variant, sigma=sign * f1.sigma)

    @classmethod
    def quadratic(cls, a1: Surface | float, a2: Surface | float, b: float, variant: int = 1) -> CFNode:
        """u - a1 - b^2 / (u - a2) (variant 1) or u - a2 - b^2 / (u - a1) (variant 2)."""
        return cls.join(cls.leaf(a1), cls.leaf(a2), b * b, variant)

    @property
    def is_leaf(self) -> bool:
        return self.level == 0


@dataclass(frozen=True)
class CFValue:
    f: float
    chi: float
    mu: float
    tau: float

    @property
    def defined(self) -> bool:
        return self.mu != 0 and math.isfinite(self.f)


def cf_evaluate(node: CFNode, x: float, u: float) -> CFValue:
    """
    chi, mu, tau in product form and f = chi / mu where mu != 0

    chi = chi1 chi2 - mu1 mu2 b^2 for either variant; mu = mu1 chi2 (variant 1) or mu2 chi1 (variant 2);
    tau = (chi2 - chi1) tau1 tau2.
    """
    if node.is_leaf:
        chi = u - node.a(x, u)
        return CFValue(chi, chi, 1.0, 1.0)
    first, second = (cf_evaluate(child, x, u) for child in node.children)
    b2 = node.b2(x, u)
    chi = first.chi * second.chi - first.mu * second.mu * b2
    mu = first.mu * second.chi if node.variant == 1 else second.mu * first.chi
    tau = (second.chi - first.chi) * first.tau * second.tau
    f = chi / mu if mu != 0 else math.nan
    return CFValue(f, chi, mu, tau)


def chi_derivative(node: CFNode, x: float, u: float, order: int = 1) -> float:
    """Central finite-difference u-derivative of chi."""
    match order:
        case 1:
            h = CF_STEP
            return (cf_evaluate(node, x, u + h).chi - cf_evaluate(node, x, u - h).chi) / (2 * h)
        case 2:
            h = CF_STEP_2
            plus, centre, minus = (cf_evaluate(node, x, u + d).chi for d in (h, 0.0, -h))
            return (plus - 2 * centre + minus) / (h * h)
    raise ValueError(f"order must be 1 or 2, got {order}")


def min_child_tau(node: CFNode, x: float, u: float) -> float:
    if node.is_leaf:
        return 1.0
    return min(abs(cf_evaluate(child, x, u).tau) for child in node.children)


@dataclass(frozen=True)
class ZetaRoots:
    roots: tuple[float, ...]
    slopes: tuple[float, ...]

    @property
    def minus(self) -> Optional[float]:
        return self.roots[0] if self.roots else None

    @property
    def plus(self) -> Optional[float]:
        return self.roots[-1] if len(self.roots) == 2 else None

    @property
    def separated(self) -> bool:
        """zeta+ - zeta- >= (|d chi|_- + |d chi|_+) / 8."""
        if len(self.roots) < 2:
            return True
        return self.roots[1] - self.roots[0] >= (abs(self.slopes[0]) + abs(self.slopes[1])) / 8 - ROOT_TOL


def zeta_roots(node: CFNode, x: float, window: tuple[float, float], samples: int = 2049) -> ZetaRoots:
    """
    Zeros of chi(x, .) inside the window, located by sign changes on a grid and polished with brentq

    :param node: continued-fraction node
    :param x: the outer variable
    :param window: (low, high) u-interval
    :param samples: grid size
    :return: ZetaRoots, ascending
    """
    low, high = window
    if not low < high:
        raise ValueError(f"empty window {window}")
    grid = np.linspace(low, high, samples)
    values = np.array([cf_evaluate(node, x, u).chi for u in grid])
    signs = np.sign(values)

    roots: list[float] = [float(u) for u in grid[signs == 0]]
    crossings = np.flatnonzero(signs[:-1] * signs[1:] < 0)
    for i in crossings:
        roots.append(brentq(lambda u: cf_evaluate(node, x, u).chi, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    roots.sort()
    if not roots or len(roots) > 2:
        raise Errors.RootCount(f"chi has {len(roots)} zeros in {window}, expected one or two", count=len(roots))
    slopes = tuple(chi_derivative(node, x, root) for root in roots)
    return ZetaRoots(tuple(roots), slopes)


def sandwich_holds(node: CFNode, x: float, zeta: ZetaRoots) -> bool:
    """
    Bounds of the two roots of a level-1 node against its leaves

    max(a1, a2 + |b|) <= zeta+ <= a1 + |b| and a2 - |b| <= zeta- <= min(a2, a1 - |b|), everything evaluated at the root.
    """
    if node.level != 1:
        raise ValueError("the sandwich bounds are stated for level-1 nodes")
    first, second = node.children
    checks = []
    if zeta.plus is not None:
        u = zeta.plus
        a1, a2, b = first.a(x, u), second.a(x, u), math.sqrt(max(node.b2(x, u), 0.0))
        checks.append(max(a1, a2 + b) - ROOT_TOL <= u <= a1 + b + ROOT_TOL)
    if zeta.minus is not None and len(zeta.roots) == 2:
        u = zeta.minus
        a1, a2, b = first.a(x, u), second.a(x, u), math.sqrt(max(node.b2(x, u), 0.0))
        checks.append(a2 - b - ROOT_TOL <= u <= min(a2, a1 - b) + ROOT_TOL)
    return all(checks)


@dataclass(frozen=True)
class QuadraticBranch:
    branch: Optional[Branch]
    lam: float
    gamma: float
    lower: float
    upper: float

    @property
    def inside(self) -> bool:
        return self.branch is not None


def quadratic_branch(u: float, a1: float, a2: float, b: float) -> QuadraticBranch:
    """
    Dichotomy for |(u - a1)(u - a2) - b^2| < (a1 - a2)^2 / 4, a1 > a2

    In the plus case u >= max(a1 - |gamma| d, (a1 + a2)/2 + |b|); in the minus case u <= min(a2 + |gamma| d, (a1 + a2)/2 - |b|),
    with d = a1 - a2, lambda = d^(-2) ((u - a1)(u - a2) - b^2), gamma = (sqrt(1 + 4 lambda) - 1) / 2.
    lower/upper hold the bound of the branch that u falls into; branch is None outside the inequality region.
    """
    if not a1 > a2:
        raise ValueError(f"a1 must exceed a2, got {a1}, {a2}")
    d = a1 - a2
    residual = (u - a1) * (u - a2) - b * b
    lam = residual / (d * d)
    if abs(residual) >= d * d / 4:
        return QuadraticBranch(None, lam, math.nan, -math.inf, math.inf)
    gamma = (math.sqrt(1 + 4 * lam) - 1) / 2
    b = abs(b)
    if u >= (a1 + a2) / 2:
        lower = max(a1 - abs(gamma) * d, (a1 + a2) / 2 + b)
        return QuadraticBranch(Branch.plus, lam, gamma, lower, a1 + abs(gamma) * d + b)
    upper = min(a2 + abs(gamma) * d, (a1 + a2) / 2 - b)
    return QuadraticBranch(Branch.minus, lam, gamma, a2 - abs(gamma) * d - b, upper)


def _circle(center: complex, radius: float, points: int = CONTOUR_POINTS) -> tuple[np.ndarray, np.ndarray]:
    theta = 2 * np.pi * np.arange(points) / points
    phase = np.exp(1j * theta)
    return center + radius * phase, phase


def cauchy_derivative(F: Analytic1, w0: complex, radius: float, points: int = CONTOUR_POINTS) -> complex:
    """F'(w0) = (1 / 2 pi i) contour integral of F(w) / (w - w0)^2 on |w - w0| = radius."""
    w, phase = _circle(w0, radius, points)
    return complex(np.mean(np.asarray(F(w)) / phase) / radius)


def boundary_sup(F: Analytic1, w0: complex, radius: float, points: int = CONTOUR_POINTS) -> float:
    w, _ = _circle(w0, radius, points)
    return float(np.abs(np.asarray(F(w))).max())


def _log_factor(M: float) -> float:
    return (1 + math.log(max(100.0, M))) ** 2


@dataclass(frozen=True)
class IFTResult:
    """
    Guaranteed radius r = tau^2 rho^3 / (16 M0) and root radius r' = tau rho^2 / (2 M0), rho = min(r0, p0)

    For |z - z0| < radius the equation F(z, w) = 0 has exactly one root with |w - w0| < root_radius.
    """

    F: Analytic2
    z0: complex
    w0: complex
    tau: float
    M0: float
    radius: float
    root_radius: float

    def _dw(self, z: complex, w: np.ndarray | complex) -> np.ndarray:
        h = 1e-6 * self.root_radius
        z_arr = np.full(np.shape(w), z, dtype=complex)
        return (np.asarray(self.F(z_arr, w + h)) - np.asarray(self.F(z_arr, w - h))) / (2 * h)

    def _value(self, z: complex, w: complex) -> complex:
        return complex(np.asarray(self.F(np.array([z]), np.array([w])))[0])

    def locate(self, z: complex) -> complex:
        """The root w(z): residue formula on |w - w0| = root_radius, polished by Newton steps."""
        if abs(z - self.z0) >= self.radius:
            raise Errors.WindowExceeded(f"|z - z0| = {abs(z - self.z0):.3g} is outside the radius {self.radius:.3g}")
        w, _ = _circle(self.w0, self.root_radius, 4 * CONTOUR_POINTS)
        values = np.asarray(self.F(np.full(len(w), z, dtype=complex), w))
        root = complex(np.mean(w * self._dw(z, w) / values * (w - self.w0)))
        for _ in range(NEWTON_STEPS):
            value = self._value(z, root)
            if abs(value) <= 1e-15 * self.M0:
                break
            root -= value / complex(self._dw(z, np.array([root]))[0])
        if abs(self._value(z, root)) > ROOT_TOL * self.M0:
            raise Errors.NonConvergence(f"root at z = {z} not resolved: |F| = {abs(self._value(z, root)):.3g}")
        return root


def quantitative_ift(
    F: Analytic2,
    z0: complex,
    w0: complex,
    r0: float,
    p0: float,
    sup_bound: Optional[float] = None,
    points: int = CONTOUR_POINTS,
) -> IFTResult:
    """
    Quantitative implicit function theorem on the polydisk |z - z0| < r0, |w - w0| < p0

    :param F: analytic in both arguments, vectorized over numpy arrays
    :param z0: base point, F(z0, w0) = 0
    :param w0: base root
    :param r0: z-radius
    :param p0: w-radius
    :param sup_bound: known bound on |F| over the polydisk; the sampled torus maximum is used otherwise
    :param points: samples per circle
    :return: IFTResult
    """
    rho = min(r0, p0)
    tau = abs(cauchy_derivative(lambda w: F(np.full(len(w), z0, dtype=complex), w), w0, p0 / 2, points))
    if tau <= ROOT_TOL:
        raise Errors.NonConvergence(f"dF/dw vanishes at ({z0}, {w0})", tau=tau)
    z_circle, _ = _circle(z0, r0, points)
    w_circle, _ = _circle(w0, p0, points)
    Z, W = np.meshgrid(z_circle, w_circle, indexing="ij")
    M0 = float(np.abs(np.asarray(F(Z.ravel(), W.ravel()))).max())
    if sup_bound is not None:
        M0 = max(M0, sup_bound)
    radius = tau * tau * rho**3 / (16 * M0)
    root_radius = tau * rho * rho / (2 * M0)
    logger.debug(f"ift at ({z0}, {w0}): tau={tau:.6g}, M0={M0:.6g}, r={radius:.6g}")
    return IFTResult(F, complex(z0), complex(w0), tau, M0, radius, root_radius)


def harnack_radius(K: float, r1: float) -> float:
    """r2 = r1 / (1 + log max(100, K))^2."""
    return r1 / _log_factor(K)


@dataclass(frozen=True)
class HarnackCheck:
    r2: float
    K: float
    ratio: float

    @property
    def holds(self) -> bool:
        return self.ratio <= math.exp(4)


def harnack_check(f: Analytic1, z0: complex, r0: float, r1: float, points: int = CONTOUR_POINTS) -> HarnackCheck:
    """
    Sampled max |f(zeta)| / |f(z)| over D(z0, r2)

    f must be zero-free on D(z0, r1) with |f(z0)| >= 1 / K, K the sup of |f| over D(z0, r0).
    """
    K = boundary_sup(f, z0, r0, points)
    if abs(complex(np.asarray(f(np.array([z0])))[0])) < 1 / K:
        raise Errors.RegimeError("Harnack precondition |f(z0)| >= 1/K fails")
    r2 = harnack_radius(K, r1)
    radii = np.linspace(0, r2, 9)[:-1] + r2 / 16
    samples = np.concatenate([_circle(z0, r, points)[0] for r in radii] + [np.array([z0])])
    modulus = np.abs(np.asarray(f(samples)))
    return HarnackCheck(r2, K, float(modulus.max() / modulus.min()))


def approximate_root(F: Analytic1, w0: complex, r0: float, points: int = CONTOUR_POINTS) -> tuple[complex, float]:
    """
    A zero of F within 2 r1 of w0, r1 = 100 (1 + log max(100, M0))^2 |F(w0)| / tau0

    Requires |F(w0)| < r0 tau0 / (200 (1 + log max(100, M0))^2).

    :return: (root, r1)
    """
    tau0 = abs(cauchy_derivative(F, w0, r0 / 2, points))
    M0 = boundary_sup(F, w0, r0, points)
    value = abs(complex(np.asarray(F(np.array([w0])))[0]))
    factor = _log_factor(M0)
    if tau0 <= ROOT_TOL or value >= r0 * tau0 / (200 * factor):
        raise Errors.RegimeError(f"|F(w0)| = {value:.3g} is too large for the approximate-root bound", value=value)
    r1 = 100 * factor * value / tau0
    root = complex(w0)
    h = 1e-6 * r0
    for _ in range(NEWTON_STEPS):
        current = complex(np.asarray(F(np.array([root])))[0])
        if abs(current) <= 1e-15 * max(M0, 1.0):
            break
        slope = complex((np.asarray(F(np.array([root + h]))) - np.asarray(F(np.array([root - h]))))[0] / (2 * h))
        root -= current / slope
    if abs(root - w0) >= 2 * r1:
        raise Errors.NonConvergence(f"Newton iteration left the disk D(w0, 2 r1), r1 = {r1:.3g}")
    return root, r1


def convexity_check(f: Callable[[float], float], v1: float, v2: float, sigma0: float) -> bool:
    """
    (v2 - v1)^2 <= 2 / sigma0 |f(v1) - f(v2)| for f with f'' >= sigma0 > 0 and f'(v1) f'(v2) >= 0
    """
    h = CF_STEP
    d1 = (f(v1 + h) - f(v1 - h)) / (2 * h)
    d2 = (f(v2 + h) - f(v2 - h)) / (2 * h)
    if np.sign(d1) * np.sign(d2) < 0:
        raise ValueError("derivatives at v1 and v2 must not have opposite signs")
    return (v2 - v1) ** 2 <= 2 / sigma0 * abs(f(v1) - f(v2)) * (1 + 1e-9) + 1e-15
