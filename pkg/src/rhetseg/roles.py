"""The closed label set: seven rhetorical roles with a fixed integer mapping.

Every sentence of a judgment is assigned exactly one role. The integer ids are
part of the on-disk and CLI contracts (confusion-matrix axes, instruction
export, checkpoint label echo) and must never be renumbered.
"""

from __future__ import annotations

import enum

from .errors import DataError

ROLE_NAMES: tuple[str, ...] = (
    "None",
    "Facts",
    "Issue",
    "ArgumentsOfPetitioner",
    "ArgumentsOfRespondent",
    "Reasoning",
    "Decision",
)

NUM_ROLES = len(ROLE_NAMES)


class RhetoricalRole(enum.IntEnum):
    NONE = 0
    FACTS = 1
    ISSUE = 2
    ARGUMENTS_OF_PETITIONER = 3
    ARGUMENTS_OF_RESPONDENT = 4
    REASONING = 5
    DECISION = 6

    @property
    def canonical_name(self) -> str:
        return ROLE_NAMES[int(self)]

    @classmethod
    def from_id(cls, value: int) -> "RhetoricalRole":
        if not isinstance(value, int) or isinstance(value, bool):
            raise DataError(f"role id must be an integer, got {value!r}")
        if not 0 <= value < NUM_ROLES:
            raise DataError(f"role id out of range [0, {NUM_ROLES}): {value}")
        return cls(value)

    @classmethod
    def from_name(cls, name: str) -> "RhetoricalRole":
        try:
            return cls(ROLE_NAMES.index(name))
        except ValueError:
            raise DataError(
                f"unknown role name {name!r}; expected one of {', '.join(ROLE_NAMES)}"
            ) from None

    @classmethod
    def parse(cls, value: "int | str | RhetoricalRole") -> "RhetoricalRole":
        """Accept an id, a canonical name, or an existing role."""
        if isinstance(value, RhetoricalRole):
            return value
        if isinstance(value, bool):
            raise DataError(f"cannot parse role from {value!r}")
        if isinstance(value, int):
            return cls.from_id(value)
        if isinstance(value, str):
            return cls.from_name(value)
        raise DataError(f"cannot parse role from {value!r}")
