from __future__ import annotations

import csv
import logging
import pathlib
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import orjson

from modules import Converters

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


@dataclass(frozen=True)
class Column:
    name: str
    doc: str


def cell(value: Any) -> str:
    match value:
        case bool():
            return "true" if value else "false"
        case None:
            return ""
        case int():
            return str(value)
        case float():
            return Converters.to_float_str(value)
        case tuple() | list():
            return " ".join(cell(v) for v in value)
        case _:
            if hasattr(value, "__float__") and not isinstance(value, str):
                return Converters.to_float_str(float(value))
            return str(value)


def write_csv(
    path: pathlib.Path, title: str, columns: Sequence[Column], rows: Iterable[Sequence[Any]], notes: Sequence[str] = ()
) -> pathlib.Path:
    """
    Writes a CSV table preceded by a # comment block with one line per column

    :param title: first header line
    :param columns: name and meaning of every column, in order
    :param rows: one sequence per row, aligned with columns
    :param notes: extra # lines after the column block
    :return: path written
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        handle.write(f"# {title}\n")
        for column in columns:
            handle.write(f"# {column.name}: {column.doc}\n")
        for note in notes:
            handle.write(f"# {note}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([column.name for column in columns])
        count = 0
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row {count} has {len(row)} cells, {len(columns)} columns declared")
            writer.writerow([cell(value) for value in row])
            count += 1
    logger.info(f"wrote {count} rows to {path}")
    return path


def dumps(payload: Any) -> bytes:
    return orjson.dumps(Converters.to_json_safe(payload), option=JSON_OPTIONS)


def write_json(path: pathlib.Path, payload: Any) -> pathlib.Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(payload) + b"\n")
    logger.info(f"wrote {path}")
    return path


def vector(m: Sequence[int]) -> str:
    """Lattice vector as a space-free CSV token, (0,-1) style."""
    return "(" + ",".join(str(int(x)) for x in m) + ")"
