"""Fallback for enum.StrEnum on Python < 3.11, matching the stdlib semantics."""

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __new__(cls, *values):
            value = str(*values)
            member = str.__new__(cls, value)
            member._value_ = value
            return member

        @staticmethod
        def _generate_next_value_(name, start, count, last_values):
            return name.lower()

        __str__ = str.__str__
        __format__ = str.__format__

__all__ = ["StrEnum"]
