"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DiffcfError(Exception):
    """Base class for all package errors."""


class ValidationError(DiffcfError):
    """Inputs violate a documented precondition (shape, range, emptiness)."""


class ConfigurationError(DiffcfError):
    """A config value or config file is invalid or names an unknown option."""


class AssetNotFoundError(DiffcfError):
    """A referenced model, dataset, or run does not exist."""


class IngestionError(ValidationError):
    """Strict ingestion failed; carries the per-file error report."""

    def __init__(self, message: str, report: list[str]):
        super().__init__(message)
        self.report = report


class NonFiniteGradientError(DiffcfError):
    """The attack produced a NaN/Inf gradient; carries diagnostics."""

    def __init__(self, message: str, iteration: int, objective: float):
        super().__init__(message)
        self.iteration = iteration
        self.objective = objective
