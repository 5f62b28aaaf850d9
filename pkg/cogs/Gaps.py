from __future__ import annotations

import argparse
from functools import partial
from typing import TYPE_CHECKING

from DualSpectra import Cog, command
from modules import Inverse, Reports
from modules.Reports import Column

if TYPE_CHECKING:
    from DualSpectra import DualSpectra
    from modules.Config import RunConfig

GAP_COLUMNS = (
    Column("m", "gap label, the resonance sits at k_m = -m.omega/2"),
    Column("k_m", "resonance point"),
    Column("E-", "lower gap edge"),
    Column("E+", "upper gap edge"),
    Column("width", "E+ - E-"),
    Column("theoremB_bound", "2 eps' exp(-kappa0 |m| / 2), eps' the decay normalization of the coefficient table"),
    Column("pass", "width <= theoremB_bound; false for rows that failed"),
)


def m_list(config: RunConfig) -> list[tuple[int, ...]]:
    return list(config.m_list) if config.m_list else Inverse.m_list_default(config.inverse.window, config.nu)


async def table(app: DualSpectra) -> list[Inverse.GapRow]:
    config = app.config
    return await app.map(partial(Inverse.gap_row, config.operator()), m_list(config), box_radius=config.box_radius)


def gap_rows(rows: list[Inverse.GapRow], report: Inverse.ForwardReport) -> list[tuple]:
    bounds = {row.m: row for row in report.rows}
    out = []
    for row in rows:
        if row.record is None:
            out.append((Reports.vector(row.m), None, None, None, None, None, False))
            continue
        forward = bounds[row.m]
        record = row.record
        out.append(
            (
                Reports.vector(row.m),
                record.k_point,
                record.E_minus,
                record.E_plus,
                record.width,
                forward.bound,
                forward.passes,
            )
        )
    return out


class Gaps(Cog, name="gaps"):
    def __init__(self, app: DualSpectra):
        super().__init__(app)

    @command("gaps", help="gap edges and widths over the m list (gaps.csv)")
    async def gaps(self, args: argparse.Namespace) -> None:
        config = self.app.config
        rows = await table(self.app)
        report = Inverse.verify_forward(rows, config.potential())
        notes = [f"eps'={Reports.cell(report.epsilon)} kappa0={Reports.cell(report.kappa0)} box_radius={config.box_radius}"]
        if report.note:
            notes.append(report.note)
        Reports.write_csv(self.app.out / "gaps.csv", "spectral gaps", GAP_COLUMNS, gap_rows(rows, report), notes)
        for row in rows:
            if row.error:
                self.logger.warning(f"gap {row.m}: {row.error}")


async def setup(app):
    await app.add_cog(Gaps(app))
