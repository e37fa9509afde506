"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed input data: bad JSONL, unknown labels, schema violations."""


class NumericError(ArithmeticError):
    """Non-finite values or numeric failures during computation."""
