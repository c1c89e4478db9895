"""Exception hierarchy shared by the ledger, solver and simulation modules."""


class SelfFinError(Exception):
    """Base class for all package errors."""


class DomainError(SelfFinError, ValueError):
    """An input lies outside the domain an operation accepts."""


class GridMismatchError(DomainError):
    """Series that must share a time grid have incompatible lengths."""


class NumericError(SelfFinError, ArithmeticError):
    """A numerical routine produced non-finite or otherwise unusable output."""
