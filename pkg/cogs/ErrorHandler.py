from __future__ import annotations

import sys
import traceback
from typing import TYPE_CHECKING, Optional

import orjson

from DualSpectra import Cog
from modules import Converters, Errors
from modules.Constants import EXIT_UNHANDLED

if TYPE_CHECKING:
    from DualSpectra import DualSpectra


class ErrorHandler(Cog):
    def __init__(self, app: DualSpectra):
        super().__init__(app)
        self.stream = sys.stderr

    async def cog_load(self) -> None:
        self.app.on_error = self.on_error
        self.logger.info(f"{self.qualified_name} cog loaded")

    async def cog_unload(self) -> None:
        self.app.on_error = self.app.__class__.on_error.__get__(self.app)
        self.logger.info(f"{self.qualified_name} cog unloaded")

    @staticmethod
    def format_traceback(
        exception_type: type[BaseException], exception: BaseException, exception_traceback
    ) -> str:
        traceback_lines = traceback.format_exception(exception_type, exception, exception_traceback)
        return "".join(traceback_lines)

    def send(self, payload: dict) -> None:
        self.stream.write(orjson.dumps(Converters.to_json_safe(payload), option=orjson.OPT_SORT_KEYS).decode() + "\n")
        self.stream.flush()

    async def on_error(self, command: Optional[str], error: Exception) -> int:
        match error:
            case Errors.ValidationError():
                self.logger.error(f"{command}: invalid input: {error.text}")
                payload = error.to_dict()
            case Errors.RegimeError():
                self.logger.error(f"{command}: outside the supported regime: {error.text}")
                payload = error.to_dict()
            case Errors.VerificationFailed():
                self.logger.error(f"{command}: verification failed: {error.text}")
                payload = error.to_dict()
            case Errors.Base():
                self.logger.error(f"{command}: {error.text}")
                payload = error.to_dict()
            case _:
                self.logger.error(self.format_traceback(type(error), error, error.__traceback__))
                payload = {"error": error.__class__.__name__, "text": str(error), "exit_code": EXIT_UNHANDLED}
        if command is not None:
            payload["command"] = command
        self.send(payload)
        return payload["exit_code"]


async def setup(app):
    await app.add_cog(ErrorHandler(app))
