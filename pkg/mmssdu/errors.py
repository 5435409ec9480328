"""Exception hierarchy shared across the package."""

from __future__ import annotations

from typing import Optional


class SSDUError(Exception):
    """Base class for every error raised by mmssdu."""


class DimensionError(SSDUError, ValueError):
    pass


class ConfigError(SSDUError, ValueError):
    pass


class ModeError(ConfigError):
    pass


class PartitionError(SSDUError):
    pass


class NumericalError(SSDUError, ArithmeticError):
    def __init__(self, message: str, iteration: Optional[int] = None) -> None:
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class TrainingError(NumericalError):
    def __init__(self, message: str, parameter: Optional[str] = None, iteration: Optional[int] = None) -> None:
        if parameter is not None:
            message = f"{message} [parameter {parameter}]"
        super().__init__(message, iteration=iteration)
        self.parameter = parameter


class GraphError(SSDUError):
    pass


class ContractError(SSDUError):
    pass


class NormalizationError(SSDUError, ValueError):
    pass


class MetricError(SSDUError, ValueError):
    pass


class UndefinedReferenceError(MetricError):
    pass


class FormatError(SSDUError):
    pass


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


__all__ = [
    "BadMagicError",
    "ChecksumError",
    "ConfigError",
    "ContractError",
    "DimensionError",
    "FormatError",
    "GraphError",
    "MetricError",
    "ModeError",
    "NormalizationError",
    "NumericalError",
    "PartitionError",
    "SSDUError",
    "TrainingError",
    "TruncatedFileError",
    "UndefinedReferenceError",
    "UnsupportedVersionError",
]
