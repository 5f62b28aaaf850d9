from __future__ import annotations

import argparse
import math
from typing import TYPE_CHECKING

from DualSpectra import Cog, command
from modules import Config, Lattice, Reports, Trajectories
from modules.Reports import Column
from modules.Trajectories import Variant, WeightProfile

if TYPE_CHECKING:
    from DualSpectra import DualSpectra
    from modules.Lattice import Vector

TRAJ_COLUMNS = (
    Column("profile", "index of the random weight profile"),
    Column("m", "start site"),
    Column("n", "end site"),
    Column("partial", "enumerated sum of eps0^(k-1) W(gamma) over trajectories of length <= len_cap"),
    Column("tail", "certified bound on the trajectories longer than len_cap"),
    Column("total", "partial + tail"),
    Column("closed", "closed-form bound"),
    Column("log_total", "natural log of total, finite when total underflows"),
    Column("log_closed", "natural log of the closed-form bound"),
    Column("in_regime", "log eps0 is below the smallness threshold, so the closed bound is claimed"),
    Column("pass", "log_total <= log_closed"),
)


def pair_row(n: Vector, m: Vector, index: int, prof: WeightProfile, eps0: float, log_eps0: float, len_cap: int, variant: Variant) -> tuple:
    enumerated = Trajectories.sum_enumerate(m, n, prof, eps0, variant, len_cap, log_eps0=log_eps0)
    log_closed = Trajectories.log_closed_bound(m, n, prof, log_eps0, strict=False)
    in_regime = log_eps0 <= Trajectories.smallness_log_threshold(prof.host.nu, prof.kappa0, prof.T)
    return (
        index,
        Reports.vector(m),
        Reports.vector(n),
        enumerated.W_partial,
        enumerated.tail,
        enumerated.total,
        math.exp(log_closed) if log_closed < 700 else math.inf,
        enumerated.log_total,
        log_closed,
        in_regime,
        Trajectories.respects_closed_bound(enumerated, log_closed),
    )


class TrajBound(Cog, name="traj-bound"):
    def __init__(self, app: DualSpectra):
        super().__init__(app)

    def add_arguments(self, name: str, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.plain.value)

    @command("traj-bound", help="enumerated trajectory sums against the closed bound (traj-bound.csv)")
    async def traj_bound(self, args: argparse.Namespace) -> None:
        config = self.app.config
        traj = config.traj
        rng = config.rng
        host = Lattice.ball(traj.host_radius, config.nu, config.site_budget)
        ambient = Lattice.ball(traj.host_radius + 2, config.nu, config.site_budget)
        origin = Lattice.zero(config.nu)
        log_eps0 = Config.traj_log_eps0(config)
        rows = []
        for index in range(traj.profiles):
            prof = Trajectories.random_profile(rng, host, traj.T, config.kappa0, ambient)
            rows += await self.app.map(
                pair_row,
                host.sites,
                m=origin,
                index=index,
                prof=prof,
                eps0=traj.eps0,
                log_eps0=log_eps0,
                len_cap=traj.len_cap,
                variant=Variant(args.variant),
            )
        threshold = Trajectories.smallness_log_threshold(config.nu, config.kappa0, traj.T)
        notes = [
            f"host=B({traj.host_radius}) ambient=B({traj.host_radius + 2}) len_cap={traj.len_cap} T={Reports.cell(traj.T)}",
            f"eps0={Reports.cell(traj.eps0)} smallness threshold log eps0 <= {Reports.cell(threshold)}",
        ]
        if log_eps0 > threshold:
            notes.append("outside the smallness regime the closed bound is reported but not claimed")
        Reports.write_csv(self.app.out / "traj-bound.csv", "trajectory sums", TRAJ_COLUMNS, rows, notes)


async def setup(app):
    await app.add_cog(TrajBound(app))
