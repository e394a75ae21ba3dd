"""Exception types shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific one that applies.
"""


class DataError(ValueError):
    """Malformed or out-of-contract input data (bad file, bad shape, bad range)."""


class BudgetError(RuntimeError):
    """A resource guard tripped (table too large, embedding dimension too large)."""


class InvariantError(RuntimeError):
    """An internal postcondition failed. Always a bug, never a user error."""
