from __future__ import annotations

import argparse
import asyncio
import importlib
import logging
import pathlib
import re
import sys
import typing
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from logging import ERROR, INFO
from typing import Awaitable, Callable, Iterable, Optional, Sequence, TypeVar

from dotenv import dotenv_values

from modules import Config, Errors, Workers
from modules.Config import RunConfig
from modules.Constants import EXIT_OK, EXIT_UNHANDLED

Handler = Callable[[argparse.Namespace], Awaitable[Optional[int]]]
T = TypeVar("T")


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> typing.NoReturn:
        raise Errors.InvalidArguments(message)


@dataclass(frozen=True)
class CommandSpec:
    name: str
    help: str
    needs_config: bool = True


def command(name: str, help: str, needs_config: bool = True):
    """Marks a cog coroutine as the handler of a subcommand"""

    def decorator(fn):
        fn.__command__ = CommandSpec(name, help, needs_config)
        return fn

    return decorator


class Cog:
    qualified_name: str = "Cog"

    def __init_subclass__(cls, name: Optional[str] = None, **kwargs):
        super().__init_subclass__(**kwargs)
        cls.qualified_name = name or cls.__name__

    def __init__(self, app: DualSpectra):
        self.app = app
        self.logger = self.app.logger.getChild(self.qualified_name)

    async def cog_load(self) -> None:
        self.logger.info(f"{self.qualified_name} cog loaded")

    async def cog_unload(self) -> None:
        self.logger.info(f"{self.qualified_name} cog unloaded")

    def add_arguments(self, name: str, parser: argparse.ArgumentParser) -> None:
        """Per-command flags; the shared flags are added by the host."""

    def get_commands(self) -> list[tuple[CommandSpec, Handler]]:
        found = []
        for attribute in sorted(dir(type(self))):
            spec = getattr(getattr(type(self), attribute), "__command__", None)
            if spec is not None:
                found.append((spec, getattr(self, attribute)))
        return found


class DualSpectra:
    def __init__(self, env_values: dict[str, Optional[str]]):
        self.logger = logging.getLogger(self.__class__.__name__)
        self.cog_dir = pathlib.Path(__file__).parent / "cogs"
        self.dotenv = env_values
        self.cogs: dict[str, Cog] = {}
        self.commands: dict[str, tuple[CommandSpec, Handler]] = {}
        self.parser = ArgumentParser(prog="DualSpectra", description="Dual-lattice spectral computations")
        self.subparsers = self.parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)
        self.config: Optional[RunConfig] = None
        self.out: pathlib.Path = pathlib.Path("out")
        self.pool: Optional[ThreadPoolExecutor] = None
        self._loaded = False

    async def setup_hook(self) -> None:
        if self._loaded:
            return
        for file in self.collect_cogs(self.cog_dir):
            extension = str(file.relative_to(self.cog_dir.parent))[:-3]
            extension = re.sub(r"(\\)|(/)", ".", extension)
            try:
                await self.load_extension(extension)
            except Exception as e:
                self.logger.exception(f"Failed to load extension {extension}", exc_info=e)
        self._loaded = True

    def collect_cogs(self, root: pathlib.Path) -> typing.Generator[pathlib.Path, None, None]:
        for file in sorted(root.iterdir()):
            if file.match("[!-|_]*.py"):
                yield file
            elif file.is_dir() and not file.name.startswith("_"):
                yield from self.collect_cogs(file)

    async def load_extension(self, extension: str) -> None:
        module = importlib.import_module(extension)
        setup = getattr(module, "setup", None)
        if setup is None:
            self.logger.debug("Skipping extension %s", extension)
            return
        await setup(self)

    async def add_cog(self, cog: Cog) -> None:
        for spec, handler in cog.get_commands():
            if spec.name in self.commands:
                raise ValueError(f"command {spec.name} is registered twice")
            parser = self.subparsers.add_parser(spec.name, help=spec.help)
            if spec.needs_config:
                self.shared_arguments(parser)
            cog.add_arguments(spec.name, parser)
            self.commands[spec.name] = (spec, handler)
        self.cogs[cog.qualified_name] = cog
        await cog.cog_load()

    async def remove_cog(self, name: str) -> None:
        cog = self.cogs.pop(name, None)
        if cog is not None:
            await cog.cog_unload()

    @staticmethod
    def shared_arguments(parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", type=pathlib.Path, required=True, help="run configuration (JSON)")
        parser.add_argument("--out", type=pathlib.Path, default=pathlib.Path("out"), help="output directory")
        parser.add_argument("--jobs", type=int, default=None, help="worker threads")
        parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        regime = parser.add_mutually_exclusive_group()
        regime.add_argument("--desk", dest="regime", action="store_const", const="desk", default=None)
        regime.add_argument("--faithful", dest="regime", action="store_const", const="faithful")
        parser.add_argument("--verbose", action="store_true", help="debug logging")

    def prepare(self, args: argparse.Namespace) -> RunConfig:
        """Loads, overrides and validates the run configuration."""
        config = Config.load(args.config)
        config = Config.apply_overrides(
            config, Config.environment(self.dotenv), args.jobs, args.seed, args.regime, args.verbose
        )
        config = Config.validate(config)
        logging.getLogger().setLevel(config.log_level)
        self.out = args.out
        self.out.mkdir(parents=True, exist_ok=True)
        return config

    async def execute(self, fn: Callable[..., T], *args, **kwargs) -> T:
        return await Workers.run(self.pool, fn, *args, **kwargs)

    async def map(self, fn: Callable[..., T], items: Iterable, **kwargs) -> list[T]:
        """fn over items on the worker pool, results in input order"""
        return await Workers.map_ordered(self.pool, fn, items, **kwargs)

    async def on_error(self, name: Optional[str], error: Exception) -> int:
        self.logger.exception(f"command {name} failed", exc_info=error)
        return getattr(error, "exit_code", EXIT_UNHANDLED)

    async def run(self, argv: Sequence[str]) -> int:
        await self.setup_hook()
        name = None
        try:
            args = self.parser.parse_args(list(argv))
            name = args.command
            spec, handler = self.commands[name]
            if spec.needs_config:
                self.config = self.prepare(args)
                self.pool = Workers.executor(self.config.jobs)
            self.logger.info(f"running {name}")
            status = await handler(args)
            return EXIT_OK if status is None else status
        except Exception as e:
            return await self.on_error(name, e)
        finally:
            if self.pool is not None:
                self.pool.shutdown(wait=True)
                self.pool = None


async def start(argv: Sequence[str]) -> int:
    return await DualSpectra(dotenv_values()).run(argv)


if __name__ == "__main__":
    logging.basicConfig(level=INFO, format="%(asctime)s %(levelname)-8s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("asyncio").setLevel(ERROR)
    logging.getLogger("hypothesis").setLevel(ERROR)
    sys.exit(asyncio.run(start(sys.argv[1:])))
