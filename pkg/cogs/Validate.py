from __future__ import annotations

import argparse
import sys
from typing import TYPE_CHECKING

from DualSpectra import Cog, command
from modules import Config, Errors, Model, Reports

if TYPE_CHECKING:
    from DualSpectra import DualSpectra


class Validate(Cog, name="validate"):
    def __init__(self, app: DualSpectra):
        super().__init__(app)

    def add_arguments(self, name: str, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--window", type=int, default=None, help="Diophantine search radius, box_radius by default")

    @command("validate", help="check the configuration and print a Diophantine certificate")
    async def validate(self, args: argparse.Namespace) -> None:
        config = self.app.config
        f = config.frequency()
        window = args.window or config.box_radius
        certificate = await self.app.execute(Model.diophantine_margin, f, window)
        ladder = config.scale_ladder()
        thresholds = Model.epsilon_thresholds(config.nu, config.kappa0, ladder)
        payload = {
            "certificate": {
                "margin": certificate.margin,
                "witness": certificate.witness,
                "N": certificate.N,
                "a0": certificate.a0,
                "valid": certificate.valid,
            },
            "ladder": {
                "regime": ladder.regime,
                "beta1": ladder.beta1,
                "log_R": ladder.log_R,
                "log_delta": ladder.log_delta,
                "monotone": ladder.monotone,
            },
            "epsilon_thresholds": {"log_eps0": thresholds.log_eps0, "log_eps_s": thresholds.log_eps_s},
            "decay_epsilon": Model.decay_epsilon(config.potential()),
            "warnings": Config.warnings(config),
        }
        Reports.write_json(self.app.out / "validate.json", payload)
        sys.stdout.write(Reports.dumps(payload["certificate"]).decode() + "\n")
        if not certificate.valid:
            raise Errors.InvalidConfig(
                f"Diophantine margin {certificate.margin:.6g} at n={certificate.witness} is below a0 = {f.a0}",
                margin=certificate.margin,
                witness=certificate.witness,
            )
        self.logger.info(f"configuration valid, margin {certificate.margin:.6g} on |n| <= {window}")


async def setup(app):
    await app.add_cog(Validate(app))
