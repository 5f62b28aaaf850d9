from __future__ import annotations

import argparse
from typing import TYPE_CHECKING, Any, Optional

from DualSpectra import Cog, command
from modules import Config, Converters, Errors, Reports, Resonance
from modules.MSSets import MultiscaleSets

if TYPE_CHECKING:
    from DualSpectra import DualSpectra
    from modules.Lattice import Vector
    from modules.Resonance import ResonanceProfile


def vector_arg(text: str) -> Vector:
    try:
        return Converters.to_vector(part for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def profile_dict(profile: ResonanceProfile) -> dict[str, Any]:
    return {
        "reset": profile.reset,
        "scales": profile.scales,
        "principal_sets": [S.to_list() for S in profile.principal_sets],
        "regime": {"kind": profile.regime.kind, "n0": profile.regime.n0, "level": profile.regime.level},
        "boundary": profile.boundary,
        "caveat": profile.caveat,
    }


class Geometry(Cog, name="geometry"):
    def __init__(self, app: DualSpectra):
        super().__init__(app)

    def add_arguments(self, name: str, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--k", type=float, default=None, help="geometry_k from the config by default")
        parser.add_argument("--levels", type=int, default=None, help="highest scale, u_max by default")
        parser.add_argument("--n0", type=vector_arg, default=None, help="pair partner for the paired sets, e.g. 0,1")
        parser.add_argument("--unchecked", action="store_true", help="skip the resonance-interval preconditions")

    def level(self, sets: MultiscaleSets, k: float, s: int, n0: Optional[Vector], check: bool) -> dict[str, Any]:
        out: dict[str, Any] = {"s": s}
        try:
            built = sets.lambda_plain(k, s, check)
            out["lambda"] = {"sites": built.sites.to_list(), "steps": built.steps, "size": len(built.sites)}
            if s > 1:
                classes = sets.site_classes(k, s, check=False)
                out["classes"] = {str(level): centers for level, centers in classes.classes.items()}
                out["thresholds"] = {str(level): value for level, value in classes.thresholds.items()}
            if n0 is not None:
                paired = sets.lambda_pair(k, s, n0, check)
                out["lambda_pair"] = {
                    "n0": n0,
                    "sites": paired.sites.to_list(),
                    "steps": paired.steps,
                    "dropped": paired.dropped,
                    "regime": sets.pair_regime(k, n0, s),
                }
        except Errors.RegimeError as e:
            self.logger.warning(f"geometry at s={s}: {e.text}")
            out["error"] = f"{e.__class__.__name__}: {e.text}"
        return out

    @command("geometry", help="resonance sets and multiscale site sets at one k (geometry.json)")
    async def geometry(self, args: argparse.Namespace) -> None:
        config = self.app.config
        k = Config.geometry_k(config) if args.k is None else args.k
        f = config.frequency()
        ladder = config.scale_ladder()
        profile = await self.app.execute(Resonance.reset, k, f, ladder, config.box_radius)
        payload: dict[str, Any] = {
            "k": k,
            "ladder_regime": ladder.regime,
            "resonance": profile_dict(profile),
            "admissible_level": await self.app.execute(Resonance.admissible_level, k, ladder, f),
        }
        if config.polynomial_windows:
            payload["polynomial_windows"] = profile_dict(Resonance.polynomial_window_set(k, f, config.box_radius))

        sets = MultiscaleSets(f, ladder, budget=config.site_budget)
        top = min(args.levels or ladder.u_max, ladder.u_max)
        payload["levels"] = [self.level(sets, k, s, args.n0, not args.unchecked) for s in range(1, top + 1)]
        Reports.write_json(self.app.out / "geometry.json", payload)


async def setup(app):
    await app.add_cog(Geometry(app))
