"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific type that applies.
"""


class DataError(ValueError):
    """Input data is missing, malformed, or violates a precondition (CLI exit 3)."""


class NumericalError(RuntimeError):
    """A numerical procedure degenerated or failed to converge (CLI exit 4)."""


class GrammarError(ValueError):
    """A weight/method specification string failed to parse (CLI exit 2)."""
