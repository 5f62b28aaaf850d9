from __future__ import annotations

import argparse
import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np

from DualSpectra import Cog, command
from modules import Errors, Lattice, MSSets, Reports, Schur, Spectral, Trajectories
from modules.Config import RunConfig
from modules.DualOperator import Direction

if TYPE_CHECKING:
    from DualSpectra import DualSpectra


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passes: bool
    detail: str = ""


def within(name: str, value: float, tolerance: float, detail: str = "") -> Check:
    return Check(name, float(value), float(tolerance), bool(value <= tolerance), detail)


def hermitian_symmetries(config: RunConfig) -> list[Check]:
    op = config.operator()
    S = Lattice.ball(3, config.nu)
    k = config.k_grid.min
    scale = max(1.0, float(np.abs(op.restrict(S, k).entries).max()))
    shift = tuple(1 if i == 0 else 0 for i in range(config.nu))
    return [
        within("cocycle", op.cocycle_check(shift, S, k), 1e-12 * scale, f"shift={shift} k={k}"),
        within("reflection_conjugation", op.reflection_conjugation_check(S, k), 1e-12 * scale, f"k={k}"),
    ]


def band_symmetry(config: RunConfig) -> list[Check]:
    op = config.operator()
    threshold = Spectral.default_pair_threshold(op)
    checks = []
    for k in config.k_grid.values:
        right = Spectral.band_point(op, k, config.box_radius, threshold)
        left = Spectral.band_point(op, -k, config.box_radius, threshold)
        if right.error or left.error:
            checks.append(Check("band_symmetry", math.nan, 0.0, False, right.error or left.error))
            continue
        checks.append(within("band_symmetry", abs(right.E - left.E), 1e-10 * max(1.0, abs(right.E)), f"k={k}"))
    return checks


def schur_oracle(config: RunConfig, rng: np.random.Generator, trials: int = 50) -> list[Check]:
    op = config.operator()
    S = Lattice.ball(2, config.nu)
    k = config.k_grid.min
    H = op.restrict(S, k).entries
    values = np.linalg.eigvalsh(H)
    E = float(values[0] - 1.0)
    M = E * np.eye(len(S)) - H
    dense = np.linalg.inv(M)
    checks = []
    for trial in range(trials):
        labels = rng.integers(0, 3, size=len(S))
        blocks = [np.flatnonzero(labels == b) for b in range(3)]
        handle = Schur.block_inverse(M, blocks, E)
        error = float(np.abs(handle.inverse - dense).max() / np.abs(dense).max())
        checks.append(within("block_inverse", error, 1e-10, f"trial={trial}"))
    return checks


def feynman(config: RunConfig) -> list[Check]:
    op = config.operator()
    S = Lattice.ball(2, config.nu)
    k = config.k_grid.min
    tol = config.tolerances
    try:
        record = Spectral.feynman_derivative(op, S, k, Direction.k)
    except Errors.NearDegeneracy as e:
        return [Check("feynman_k", math.nan, tol.fd_rtol, False, e.text)]
    fd = Spectral.fd_eigen_derivative(op, S, k, Direction.k, step=tol.fd_step)
    scale = max(1.0, float(np.abs(record.derivatives).max()))
    return [within("feynman_k", float(np.abs(record.derivatives - fd).max()), tol.fd_rtol * scale, f"k={k}")]


def words() -> list[Check]:
    return [
        within("correct_word_length", abs(MSSets.max_correct_length(s) - (2**s - 1)), 0, f"s={s}") for s in range(1, 5)
    ]


def subtraction_systems(rng: np.random.Generator, trials: int = 100) -> list[Check]:
    checks = []
    for trial in range(trials):
        system = MSSets.random_proper_system(rng, levels=3)
        start = Lattice.ball(30, 2)
        fixpoint = MSSets.subtraction_fixpoint(start, system)
        stable = fixpoint.steps < 8 and MSSets.holds_dichotomy(fixpoint.final, system)
        checks.append(Check("subtraction_fixpoint", fixpoint.steps, 7, stable, f"trial={trial}"))
    return checks


def trajectory_bounds(config: RunConfig, rng: np.random.Generator, profiles: int = 50) -> list[Check]:
    host = Lattice.ball(3, config.nu)
    ambient = Lattice.ball(5, config.nu)
    origin = Lattice.zero(config.nu)
    checks = []
    for alpha in (1.0, 2.0):
        for steps in (2, 3):
            total, bound = Trajectories.gamma_sum(origin, host.sites[-1], host, steps, alpha)
            checks.append(within("gamma_sum", total, bound, f"alpha={alpha} k={steps}"))
    # eps0 itself underflows here, so the comparison runs on logs
    log_eps0 = Trajectories.smallness_log_threshold(config.nu, config.kappa0, config.traj.T) - 1
    for index in range(profiles):
        prof = Trajectories.random_profile(rng, host, config.traj.T, config.kappa0, ambient)
        for n in host.sites:
            enumerated = Trajectories.sum_enumerate(origin, n, prof, 0.0, len_cap=config.traj.len_cap, log_eps0=log_eps0)
            log_bound = Trajectories.log_closed_bound(origin, n, prof, log_eps0)
            tolerance = log_bound + 1e-12 * max(1.0, abs(log_bound))
            checks.append(within("closed_bound", enumerated.log_total, tolerance, f"profile={index} n={n}"))
    return checks


class SelfTest(Cog, name="selftest"):
    def __init__(self, app: DualSpectra):
        super().__init__(app)

    @command("selftest", help="invariant suite on the configured instance (selftest.json)")
    async def selftest(self, args: argparse.Namespace) -> None:
        config = self.app.config
        rng = config.rng
        suites: list[Callable[[], list[Check]]] = [
            lambda: hermitian_symmetries(config),
            lambda: band_symmetry(config),
            lambda: schur_oracle(config, rng),
            lambda: feynman(config),
            words,
            lambda: subtraction_systems(rng),
            lambda: trajectory_bounds(config, rng),
        ]
        checks: list[Check] = []
        for suite in suites:
            checks += await self.app.execute(suite)
        failed = [check for check in checks if not check.passes]
        Reports.write_json(
            self.app.out / "selftest.json",
            {"checks": [asdict(check) for check in checks], "failed": len(failed), "passes": not failed},
        )
        self.logger.info(f"{len(checks) - len(failed)} of {len(checks)} checks passed")
        if failed:
            raise Errors.VerificationFailed(
                f"{len(failed)} invariant check(s) failed", checks=sorted({check.name for check in failed})
            )


async def setup(app):
    await app.add_cog(SelfTest(app))
