"""Exception types raised across the package."""

from __future__ import annotations

import numpy as np


class NPOGDError(Exception):
    """Base class for all package errors."""


class InvalidBodyError(NPOGDError, ValueError):
    """A convex body was constructed with invalid parameters."""


class ProjectionError(NPOGDError):
    """Iterative projection failed to converge (or the region is empty).

    Attributes:
        last_iterate: the final Dykstra iterate.
        residual: the largest membership residual at ``last_iterate``.
        sweeps: number of full sweeps performed.
        round_index: round of the online loop, when raised from inside a run.
    """

    def __init__(self, message: str, last_iterate: np.ndarray, residual: float,
                 sweeps: int, round_index: int | None = None):
        super().__init__(message)
        self.last_iterate = np.array(last_iterate, dtype=float)
        self.residual = float(residual)
        self.sweeps = sweeps
        self.round_index = round_index


class GenerationError(NPOGDError, ValueError):
    """An instance generator received an infeasible parameterization."""


class RunError(NPOGDError):
    """A run aborted; ``partial`` holds the trace up to the failing round."""

    def __init__(self, message: str, partial, cause: Exception):
        super().__init__(message)
        self.partial = partial
        self.cause = cause


class OracleError(NPOGDError):
    """The offline comparator did not reach the requested stationarity."""

    def __init__(self, message: str, best_iterate: np.ndarray, value: float, residual: float):
        super().__init__(message)
        self.best_iterate = np.array(best_iterate, dtype=float)
        self.value = float(value)
        self.residual = float(residual)


class ConfigError(NPOGDError, ValueError):
    """Malformed experiment configuration."""
