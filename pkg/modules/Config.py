from __future__ import annotations

import logging
import math
import os
import pathlib
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional

import numpy as np
import orjson
from dotenv import dotenv_values

from modules import Converters, Errors, Model
from modules.Constants import (
    DEGENERACY_TOL,
    FD_RTOL,
    FD_STEP,
    RECONCILE_TOL,
    RESIDUAL_TOL,
    SITE_BUDGET,
)
from modules.DualOperator import DualOperator
from modules.Lattice import Vector
from modules.Model import Frequency, Potential, Regime, ScaleLadder, ViolationKind

logger = logging.getLogger(__name__)

ENV_PREFIX = "DUALSPECTRA_"
REQUIRED = ("nu", "omega", "a0", "b0", "kappa0", "epsilon", "coefficients", "ladder")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(frozen=True)
class LadderConfig:
    regime: Regime = Regime.desk
    delta0: float = 1e-6
    beta1: float = 0.25
    u_max: int = 3


@dataclass(frozen=True)
class GridConfig:
    min: float = 0.05
    max: float = 0.45
    points: int = 81

    @property
    def values(self) -> list[float]:
        return np.linspace(self.min, self.max, self.points).tolist()


@dataclass(frozen=True)
class Tolerances:
    residual: float = RESIDUAL_TOL
    reconcile: float = RECONCILE_TOL
    degeneracy: float = DEGENERACY_TOL
    fd_step: float = FD_STEP
    fd_rtol: float = FD_RTOL


@dataclass(frozen=True)
class TrajConfig:
    host_radius: int = 3
    len_cap: int = 4
    eps0: float = 1e-6
    T: float = 8.0
    profiles: int = 5


@dataclass(frozen=True)
class InverseConfig:
    kappa: Optional[float] = None
    max_iterations: int = 8
    R0: float = 2.0
    window: int = 4


@dataclass(frozen=True)
class RunConfig:
    nu: int
    omega: tuple[float, ...]
    a0: float
    b0: float
    kappa0: float
    epsilon: float
    coefficients: Mapping[Vector, complex]
    ladder: LadderConfig
    box_radius: int = 8
    k_grid: GridConfig = field(default_factory=GridConfig)
    seed: int = 42
    tolerances: Tolerances = field(default_factory=Tolerances)
    site_budget: int = SITE_BUDGET
    m_list: Optional[tuple[Vector, ...]] = None
    geometry_k: Optional[float] = None
    traj: TrajConfig = field(default_factory=TrajConfig)
    inverse: InverseConfig = field(default_factory=InverseConfig)
    polynomial_windows: bool = False
    k0: Optional[float] = None
    jobs: int = 1
    log_level: str = "INFO"

    def frequency(self) -> Frequency:
        return Frequency(self.omega, self.a0, self.b0)

    def potential(self) -> Potential:
        return Potential(dict(self.coefficients), self.epsilon, self.kappa0, self.nu)

    def operator(self) -> DualOperator:
        return DualOperator(self.frequency(), self.potential(), self.site_budget)

    def scale_ladder(self) -> ScaleLadder:
        if self.ladder.regime == Regime.faithful:
            return Model.faithful_ladder(self.frequency(), self.kappa0, self.ladder.u_max)
        return Model.build_ladder(
            self.ladder.delta0, self.ladder.beta1, self.ladder.u_max, self.ladder.regime, self.nu, self.site_budget
        )

    @property
    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def _section(raw: Mapping[str, Any], key: str, cls: type, problems: list[str], **casts) -> Any:
    entry = raw.get(key) or {}
    if not isinstance(entry, dict):
        problems.append(f"{key} must be an object")
        return cls()
    unknown = set(entry) - set(cls.__dataclass_fields__)
    if unknown:
        problems.append(f"unknown keys in {key}: {sorted(unknown)}")
    values = {}
    for name, value in entry.items():
        if name in unknown:
            continue
        try:
            values[name] = casts.get(name, float)(value) if value is not None else None
        except (TypeError, ValueError) as e:
            problems.append(f"{key}.{name}: {e}")
    return cls(**values)


def _coefficients(entries: Any, nu: int, problems: list[str]) -> dict[Vector, complex]:
    if not isinstance(entries, list):
        problems.append("coefficients must be a list of {n, re, im}")
        return {}
    table: dict[Vector, complex] = {}
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "n" not in entry:
            problems.append(f"coefficients[{i}] needs an n field")
            continue
        n = Converters.to_vector(entry["n"])
        if len(n) != nu:
            problems.append(f"coefficients[{i}]: n = {list(n)} must have {nu} entries")
            continue
        if n in table:
            problems.append(f"coefficients[{i}]: duplicate entry for n = {list(n)}")
            continue
        table[n] = Converters.to_complex(entry)
    return table


def _parse(raw: Mapping[str, Any], problems: list[str]) -> RunConfig:
    nu = int(raw["nu"])
    omega = tuple(float(w) for w in raw["omega"])
    if len(omega) != nu:
        problems.append(f"omega has {len(omega)} entries, nu is {nu}")
    ladder = _section(raw, "ladder", LadderConfig, problems, regime=Regime, u_max=int)
    k_grid = _section(raw, "k_grid", GridConfig, problems, points=int)
    if k_grid.points < 1 or not k_grid.min <= k_grid.max:
        problems.append(f"k_grid must have points >= 1 and min <= max, got {k_grid}")
    tolerances = _section(raw, "tolerances", Tolerances, problems)
    traj = _section(raw, "traj", TrajConfig, problems, host_radius=int, len_cap=int, profiles=int)
    inverse = _section(raw, "inverse", InverseConfig, problems, max_iterations=int, window=int)
    m_list = raw.get("m_list")
    if m_list is not None:
        m_list = tuple(Converters.to_vector(m) for m in m_list)
        if any(len(m) != nu or not any(m) for m in m_list):
            problems.append(f"m_list entries must be nonzero vectors with {nu} entries")
    config = RunConfig(
        nu=nu,
        omega=omega,
        a0=float(raw["a0"]),
        b0=float(raw["b0"]),
        kappa0=float(raw["kappa0"]),
        epsilon=float(raw["epsilon"]),
        coefficients=_coefficients(raw["coefficients"], nu, problems),
        ladder=ladder,
        box_radius=int(raw.get("box_radius", 8)),
        k_grid=k_grid,
        seed=int(raw.get("seed", 42)),
        tolerances=tolerances,
        site_budget=int(raw.get("site_budget", SITE_BUDGET)),
        m_list=m_list,
        geometry_k=None if raw.get("geometry_k") is None else float(raw["geometry_k"]),
        traj=traj,
        inverse=inverse,
        polynomial_windows=bool((raw.get("polynomial_windows") or {}).get("enabled", False)),
        k0=None if raw.get("k0") is None else float(raw["k0"]),
    )
    return config


def from_dict(raw: Mapping[str, Any]) -> RunConfig:
    """
    Parses the JSON schema into a RunConfig

    :raises InvalidConfig: missing or malformed keys, every problem listed in one message
    """
    missing = [key for key in REQUIRED if key not in raw]
    if missing:
        raise Errors.InvalidConfig(f"missing keys: {missing}", missing=missing)
    found: list[str] = []
    try:
        config = _parse(raw, found)
    except (TypeError, ValueError) as e:
        raise Errors.InvalidConfig(f"malformed config: {e}", e)
    if found:
        raise Errors.InvalidConfig("; ".join(found), problems=found)
    return config


def load(path: str | pathlib.Path) -> RunConfig:
    path = pathlib.Path(path)
    try:
        raw = orjson.loads(path.read_bytes())
    except FileNotFoundError as e:
        raise Errors.InvalidConfig(f"config file {path} does not exist", e)
    except orjson.JSONDecodeError as e:
        raise Errors.InvalidConfig(f"config file {path} is not valid JSON: {e}", e)
    if not isinstance(raw, dict):
        raise Errors.InvalidConfig(f"config file {path} must hold a JSON object")
    return from_dict(raw)


def problems(config: RunConfig) -> list[str]:
    """Blocking problems: frequency parameters and every non-decay potential violation."""
    found = list(config.frequency().problems())
    if config.box_radius < 1:
        found.append(f"box_radius must be at least 1, got {config.box_radius}")
    if config.jobs < 1:
        found.append(f"jobs must be at least 1, got {config.jobs}")
    if config.log_level not in LOG_LEVELS:
        found.append(f"log level must be one of {LOG_LEVELS}, got {config.log_level}")
    report = Model.validate_potential(config.potential())
    found += [f"{v.kind}: {v.detail}" for v in report.violations if v.kind != ViolationKind.decay]
    return found


def warnings(config: RunConfig) -> list[str]:
    """Decay violations of the stored table; commands renormalize with decay_epsilon instead of refusing."""
    report = Model.validate_potential(config.potential())
    return [f"decay at n={list(v.n)}: {v.detail}" for v in report.violations if v.kind == ViolationKind.decay]


def validate(config: RunConfig) -> RunConfig:
    found = problems(config)
    if found:
        raise Errors.InvalidConfig("; ".join(found), problems=found)
    for warning in warnings(config):
        logger.warning(warning)
    return config


def environment(dotenv: Optional[Mapping[str, Optional[str]]] = None) -> dict[str, str]:
    """DUALSPECTRA_* variables from the .env file, overridden by the process environment."""
    merged = {**(dotenv if dotenv is not None else dotenv_values()), **os.environ}
    return {key[len(ENV_PREFIX) :].lower(): value for key, value in merged.items() if key.startswith(ENV_PREFIX) and value}


def apply_overrides(
    config: RunConfig,
    env: Mapping[str, str],
    jobs: Optional[int] = None,
    seed: Optional[int] = None,
    regime: Optional[Regime | str] = None,
    verbose: bool = False,
) -> RunConfig:
    """Config file < environment < command-line flags."""
    changes: dict[str, Any] = {}
    if "jobs" in env:
        changes["jobs"] = Converters.to_count(env["jobs"], config.jobs)
    if "site_budget" in env:
        changes["site_budget"] = Converters.to_count(env["site_budget"], config.site_budget)
    if "log_level" in env:
        changes["log_level"] = env["log_level"].upper()
    if jobs is not None:
        changes["jobs"] = jobs
    if seed is not None:
        changes["seed"] = seed
    if regime is not None:
        changes["ladder"] = replace(config.ladder, regime=Regime(regime))
    if verbose:
        changes["log_level"] = "DEBUG"
    return replace(config, **changes) if changes else config


def geometry_k(config: RunConfig) -> float:
    return config.k_grid.min if config.geometry_k is None else config.geometry_k


def traj_log_eps0(config: RunConfig) -> float:
    return math.log(config.traj.eps0) if config.traj.eps0 > 0 else -math.inf
