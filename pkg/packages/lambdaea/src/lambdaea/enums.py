from __future__ import annotations

from enum import StrEnum

from lambdaea.exceptions import ConfigurationError


class Metric(StrEnum):
    COSINE = "cosine"
    CSLS = "csls"


class NegativeStrategy(StrEnum):
    UNIFORM = "uniform"
    IN_BATCH = "in_batch"


class DropoutTarget(StrEnum):
    INPUTS = "inputs"
    ATTENTION = "attention"


class EpochKind(StrEnum):
    WARMUP = "warmup"
    EM = "em"


class Setting(StrEnum):
    RELAXED = "relaxed"
    CONSOLIDATED = "consolidated"


class VerifySuite(StrEnum):
    LEMMAS = "lemmas"
    PU = "pu"
    GRADIENTS = "gradients"
    STRUCTURE = "structure"
    ALL = "all"


class OptionNotSupportedError(ConfigurationError):
    def __init__(self, option: str, value: str, allowed: type[StrEnum]) -> None:
        choices = ", ".join(member.value for member in allowed)
        super().__init__(f"{option}={value!r} is not supported (expected one of: {choices})")


def parse_option[E: StrEnum](enum_type: type[E], value: str | E, option: str) -> E:
    """Returns the enum member for ``value`` or raises a configuration error."""
    if isinstance(value, enum_type):
        return value
    try:
        return enum_type(str(value).strip().lower())
    except ValueError:
        raise OptionNotSupportedError(option, str(value), enum_type) from None
