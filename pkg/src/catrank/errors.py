"""Exceptions shared across the package."""


class DataError(Exception):
    """Raised when an input file or loaded structure violates its contract.

    The CLI maps this to exit status 2; programmer errors (bad arguments to
    library functions) raise ValueError instead and are not caught.
    """
