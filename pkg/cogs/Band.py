from __future__ import annotations

import argparse
from functools import partial
from typing import TYPE_CHECKING

from DualSpectra import Cog, command
from modules import Reports, Spectral
from modules.Model import Regime
from modules.Reports import Column

if TYPE_CHECKING:
    from DualSpectra import DualSpectra

BAND_COLUMNS = (
    Column("k", "quasi-momentum"),
    Column("E", "band energy E(k) continued from site 0, NaN when the point failed"),
    Column("regime", "nonresonant | pair | gap | dense"),
    Column("partner", "resonant partner site for pair and gap points, empty otherwise"),
    Column("error", "error class and message of a failed point, empty otherwise"),
)


class Band(Cog, name="band"):
    def __init__(self, app: DualSpectra):
        super().__init__(app)

    def add_arguments(self, name: str, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--pair-threshold", type=float, default=None, help="8 sqrt(epsilon) by default")

    @command("band", help="band function E(k) on the configured k grid (band.csv)")
    async def band(self, args: argparse.Namespace) -> None:
        config = self.app.config
        op = config.operator()
        threshold = args.pair_threshold or Spectral.default_pair_threshold(op)
        points = await self.app.map(
            partial(Spectral.band_point, op),
            config.k_grid.values,
            box_radius=config.box_radius,
            pair_threshold=threshold,
        )
        rows = [
            (p.k, p.E, p.regime, Reports.vector(p.partner) if p.partner else "", p.error or "") for p in points
        ]
        notes = [f"box_radius={config.box_radius} pair_threshold={Reports.cell(threshold)} seed={config.seed}"]
        Reports.write_csv(self.app.out / "band.csv", "band function", BAND_COLUMNS, rows, notes)

        failed = sum(p.error is not None for p in points)
        if failed:
            self.logger.warning(f"{failed} of {len(points)} band points failed")
        if config.polynomial_windows:
            ladder = config.scale_ladder()
            delta0 = ladder.delta(ladder.u_max) if ladder.regime == Regime.desk else 0.0
            report = Spectral.monotone_defect(points, op, radius=config.box_radius, delta0=delta0)
            Reports.write_json(
                self.app.out / "band-monotone.json",
                {"checked": report.checked, "violations": report.violations, "holds": report.holds},
            )


async def setup(app):
    await app.add_cog(Band(app))
