from __future__ import annotations

import math
from typing import Any, Iterable

import numpy as np

from modules.Constants import FLOAT_FORMAT


def to_count(text: str, fallback: int) -> int:
    """
    parses a positive count from an environment value (worker jobs, site budget)

    :param text: decimal string, surrounding whitespace allowed
    :param fallback: returned when text is malformed or not positive
    :return: positive int
    """
    try:
        count = int(text.strip())
    except (AttributeError, ValueError):
        return fallback
    return count if count > 0 else fallback


def to_vector(x: Iterable[Any]) -> tuple[int, ...]:
    """
    converts any integer sequence (list, numpy row) to a hashable lattice vector

    :param x: sequence of integers
    :return: tuple of python ints
    """
    return tuple(int(v) for v in x)


def to_complex(entry: dict[str, Any]) -> complex:
    """
    converts a {"re": .., "im": ..} mapping to complex, missing parts count as 0

    :param entry: coefficient record
    :return: complex value
    """
    return complex(float(entry.get("re", 0.0)), float(entry.get("im", 0.0)))


def to_float_str(x: float) -> str:
    """
    formats a float with 17 significant digits, the shortest width that round-trips exactly

    :param x: value
    :return: formatted string ("inf", "-inf", "nan" for non-finite values)
    """
    x = float(x)
    if not math.isfinite(x):
        return str(x)
    return format(x, FLOAT_FORMAT)


def to_json_safe(value: Any) -> Any:
    """
    recursively converts numpy scalars/arrays, tuples and non-finite floats to plain JSON types

    :param value: arbitrary nested structure
    :return: structure orjson can serialize deterministically
    """
    match value:
        case np.ndarray():
            return [to_json_safe(v) for v in value.tolist()]
        case np.integer():
            return int(value)
        case np.floating() | float():
            value = float(value)
            if not math.isfinite(value):
                return str(value)
            return float(format(value, FLOAT_FORMAT))
        case complex() | np.complexfloating():
            return {"re": to_json_safe(value.real), "im": to_json_safe(value.imag)}
        case dict():
            return {str(k): to_json_safe(v) for k, v in value.items()}
        case set() | frozenset():
            return [to_json_safe(v) for v in sorted(value)]
        case list() | tuple():
            return [to_json_safe(v) for v in value]
        case _:
            return value
