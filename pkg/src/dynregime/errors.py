"""Exception hierarchy.

Each class carries the process exit code the CLI maps it to.
"""


class RegimeError(Exception):
    exit_code = 1


class DataFormatError(RegimeError):
    """Malformed input file (bad row, non-numeric cell, wrong magic)."""

    exit_code = 2


class ValidationError(RegimeError):
    """Input parsed fine but violates a data-model invariant."""

    exit_code = 2


class NumericalError(RegimeError):
    """Solver or fit broke down (step underflow, singular covariance, ...)."""

    exit_code = 3


class ConfigError(RegimeError):
    """Inconsistent or unsupported configuration."""

    exit_code = 4
