"""Shared exception types.

The CLI maps these onto exit codes: ConfigError -> 1, BudgetError -> 2,
ContractError -> 3.  DomainError is a ValueError so that plain library use
fails loudly in the usual Python way.
"""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ConfigError(Exception):
    """Bad or inconsistent configuration (unknown key, wrong regime, ...)."""


class UnsupportedRegimeError(ConfigError):
    """Operation not defined for the scenario's covariance regime."""


class BudgetError(Exception):
    """An evaluation budget was exhausted before reaching the tolerance.

    Carries the best partial value so callers can decide what to do with it.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ContractError(Exception):
    """A mathematical invariant that the library guarantees was violated.

    Raised e.g. when the Parseval self-test fails or a certified inequality
    is broken beyond numerical slack; indicates a bug, not bad input.
    """


class InsufficientDataError(ValueError):
    """Not enough data points for a statistical routine."""
