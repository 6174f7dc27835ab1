# tgmm_lab/errors.py
"""
Exception hierarchy shared by every module.

The CLI maps these onto exit codes:
- ConfigError        -> 1 (usage)
- ContractViolation  -> 2 (data / validation)
- DataError          -> 2
- NumericFailure     -> 3
"""


class LabError(Exception):
    """Base class for all tgmm_lab errors."""


class ContractViolation(LabError, ValueError):
    """A precondition on shapes, ranges or structure was broken."""


class NumericFailure(LabError, ArithmeticError):
    """A NaN or infinity appeared where finite numbers are required."""


class DataError(LabError):
    """A dataset, partition, checkpoint or run directory is missing or corrupt."""


class ConfigError(LabError, ValueError):
    """A config file is malformed or names unknown keys."""


class UsageError(LabError):
    """Bad command-line usage."""
