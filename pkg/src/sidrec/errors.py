"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
DivergenceError -> 4. ContractViolation marks API misuse (broken
preconditions) and is allowed to surface as a crash.
"""


class SidrecError(Exception):
    """Base class for all package errors."""


class ConfigError(SidrecError):
    """Invalid configuration: bad bounds, inconsistent settings, unknown keys."""


class DataError(SidrecError):
    """Malformed or inconsistent data: parse failures, integrity mismatches."""


class DegenerateInputError(DataError):
    """Numerically degenerate input, e.g. a zero vector where a direction is needed."""


class ContractViolation(SidrecError):
    """A documented precondition or invariant was broken by the caller."""


class DivergenceError(SidrecError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
