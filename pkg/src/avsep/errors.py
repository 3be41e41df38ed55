"""Shared exception types."""


class AvsepError(Exception):
    """Base class for all package errors."""


class DimensionError(AvsepError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(AvsepError):
    """Non-finite values or a numerically degenerate computation."""


class InputError(AvsepError):
    """Invalid data handed to an operation (lengths, missing pieces, ...)."""


class ConfigurationError(AvsepError):
    """Invalid or inconsistent configuration."""


class NoPitchError(AvsepError):
    """Pitch-dependent metric applied to an unvoiced signal."""
