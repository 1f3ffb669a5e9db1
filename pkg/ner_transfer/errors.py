"""
Error Types
===========

Categorized exceptions raised across ner-transfer.

Every error carries a category and an exit code so the CLI can report
failures uniformly.
"""

from pathlib import Path
from typing import Optional


class NerTransferError(Exception):
    """Base class for all ner-transfer errors."""

    category = "error"
    exit_code = 1


class ContractViolation(NerTransferError, ValueError):
    """A precondition of a public operation was not met (shapes, ranges, ids)."""

    category = "contract"
    exit_code = 4


class NumericOverflowError(NerTransferError, ArithmeticError):
    """A numeric operation produced NaN or Inf."""

    category = "numeric"
    exit_code = 4


class ConfigError(NerTransferError):
    """Malformed key=value config file or inconsistent CLI options."""

    category = "config"
    exit_code = 2


class ParseError(NerTransferError):
    """Malformed line in a column-format corpus file."""

    category = "data"
    exit_code = 3

    def __init__(self, message: str, line_number: int, path: Optional[Path] = None):
        self.line_number = line_number
        self.path = path
        where = f"{path}:" if path else ""
        super().__init__(f"{where}line {line_number}: {message}")


class CheckpointIntegrityError(NerTransferError):
    """Checkpoint file is truncated, has a bad magic header or a bad checksum."""

    category = "checkpoint"
    exit_code = 5


class CheckpointVersionError(NerTransferError):
    """Checkpoint was written by an incompatible format version."""

    category = "checkpoint"
    exit_code = 5

    def __init__(self, found: int, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"checkpoint format version {found}, expected {expected}")


class LabelMismatchError(NerTransferError):
    """Source and target label vocabularies differ under require_identical."""

    category = "transfer"
    exit_code = 6


def require(condition: bool, message: str) -> None:
    """Raise ContractViolation with `message` unless `condition` holds."""
    if not condition:
        raise ContractViolation(message)
