from __future__ import annotations

import argparse
from functools import partial
from typing import TYPE_CHECKING, Any

from DualSpectra import Cog, command
from cogs.Gaps import GAP_COLUMNS, gap_rows, table
from modules import Errors, Inverse, Reports
from modules.Inverse import InverseReport

if TYPE_CHECKING:
    from DualSpectra import DualSpectra


def inverse_dict(report: InverseReport) -> dict[str, Any]:
    h = report.hypothesis
    return {
        "hypothesis": {
            "holds": h.holds,
            "eps_gap": h.eps_gap,
            "eps_gap_max": h.eps_gap_max,
            "kappa": h.kappa,
            "kappa0": h.kappa0,
            "problems": h.problems,
        },
        "recoveries": [
            {
                "n0": r.n0,
                "true_value": r.true_value,
                "gap_width": r.bound.gap_width,
                "traj_term": r.bound.traj_term,
                "rhs": r.bound.rhs,
                "rhs_computed": r.bound.rhs_computed,
                "certified_remainder": r.certified_remainder,
                "holds": r.holds,
            }
            for r in report.recoveries
        ],
        "iterations": [{"eps_hat": b.eps_hat, "kappa_hat": b.kappa_hat} for b in report.iterations],
        "stop": report.stop,
        "refusal": report.refusal,
        "pointwise": [
            {"m": m, "abs_c": size, "target": target, "holds": size <= target * (1 + Inverse.BOUND_RTOL)}
            for m, size, target in report.pointwise
        ],
        "recovery_holds": report.recovery_holds,
        "improvement_holds": report.improvement_holds,
        "pointwise_holds": report.pointwise_holds,
        "passes": report.passes,
        "caveat": report.caveat,
    }


class Verify(Cog, name="verify"):
    def __init__(self, app: DualSpectra):
        super().__init__(app)

    @command("verify-forward", help="gap widths against 2 eps' exp(-kappa0 |m| / 2) (gaps.csv, verify-forward.json)")
    async def verify_forward(self, args: argparse.Namespace) -> None:
        config = self.app.config
        rows = await table(self.app)
        report = Inverse.verify_forward(rows, config.potential())
        notes = [f"eps'={Reports.cell(report.epsilon)} kappa0={Reports.cell(report.kappa0)}"]
        if report.note:
            notes.append(report.note)
        Reports.write_csv(self.app.out / "gaps.csv", "spectral gaps", GAP_COLUMNS, gap_rows(rows, report), notes)
        Reports.write_json(
            self.app.out / "verify-forward.json",
            {
                "epsilon": report.epsilon,
                "kappa0": report.kappa0,
                "rows": [
                    {"m": r.m, "width": r.width, "bound": r.bound, "margin": r.margin, "passes": r.passes}
                    for r in report.rows
                ],
                "failed": report.failed,
                "asserted": report.asserted,
                "note": report.note,
                "passes": report.passes,
            },
        )
        if report.failed:
            self.logger.warning(f"gap computation failed for {list(report.failed)}")
        if report.violations and report.asserted:
            worst = min(report.violations, key=lambda r: r.margin)
            raise Errors.VerificationFailed(
                f"{len(report.violations)} gap(s) exceed the forward bound, worst at m={worst.m} by {-worst.margin:.6g}",
                violations=[r.m for r in report.violations],
            )

    @command("verify-inverse", help="coefficient recovery and decay improvement (inverse-report.json)")
    async def verify_inverse(self, args: argparse.Namespace) -> None:
        config = self.app.config
        op = config.operator()
        settings = config.inverse
        sites = Inverse.window_sites(settings.window, config.nu)
        rows = await self.app.map(partial(Inverse.gap_row, op), sites, box_radius=config.box_radius)
        report = await self.app.execute(
            Inverse.verify_inverse,
            op,
            window=settings.window,
            box_radius=config.box_radius,
            kappa=settings.kappa,
            max_iterations=settings.max_iterations,
            R0=settings.R0,
            table=rows,
        )
        Reports.write_json(self.app.out / "inverse-report.json", inverse_dict(report))
        if not report.hypothesis.holds:
            self.logger.warning("gap hypothesis fails; nothing is asserted")
            return
        if not report.passes:
            raise Errors.VerificationFailed(
                f"inverse verification failed (stop: {report.stop})",
                recovery=report.recovery_holds,
                improvement=report.improvement_holds,
                pointwise=report.pointwise_holds,
            )


async def setup(app):
    await app.add_cog(Verify(app))
