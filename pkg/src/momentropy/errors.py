"""Exception types shared across the package."""

from __future__ import annotations


class PositivityError(ValueError):
    """A matrix (or a sampled matrix field) failed a positive-definiteness check.

    Attributes
    ----------
    min_eig : float
        Smallest eigenvalue encountered.
    node : int or None
        Index of the offending grid node, when the check ran over sampled data.
    """

    def __init__(self, message: str, min_eig: float = float("nan"), node: int | None = None):
        super().__init__(message)
        self.min_eig = float(min_eig)
        self.node = node


class DualStartNotFound(RuntimeError):
    """No strictly feasible starting point could be produced for the dual flow."""
