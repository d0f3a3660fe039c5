"""Semantic exceptions shared across the package."""

__all__ = ["QdrxError", "CapacityError", "SingularChannelError", "SpecValidationError"]


class QdrxError(Exception):
    """Base class for package-specific failures."""


class CapacityError(QdrxError):
    """An enumeration or problem size exceeds a hard guard."""


class SingularChannelError(QdrxError):
    """A pseudo-inverse cannot be formed because a matrix is rank-deficient."""


class SpecValidationError(QdrxError, ValueError):
    """An experiment specification violates its invariants."""
