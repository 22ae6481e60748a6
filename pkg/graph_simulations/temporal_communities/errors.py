# graph_simulations/temporal_communities/errors.py

"""
errors.py

Exception hierarchy shared by every module of the toolkit.
"""

from __future__ import annotations


class TemporalCommunityError(Exception):
    """Base class for all toolkit errors."""


class GraphBuildError(TemporalCommunityError, ValueError):
    """Raised when node/edge/feature specs violate the graph contract."""


class DatasetFormatError(TemporalCommunityError, ValueError):
    """Raised for malformed dataset files; carries the file and line number."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class ConfigError(TemporalCommunityError, ValueError):
    """Raised for unknown, missing or out-of-range configuration values."""


class ShapeError(TemporalCommunityError, ValueError):
    """Raised when a tensor op receives shape-incompatible inputs."""

    def __init__(self, op: str, message: str):
        self.op = op
        super().__init__(f"[{op}] {message}")


class NonFiniteGradientError(TemporalCommunityError, FloatingPointError):
    """Raised by the optimizer when a gradient contains NaN or inf."""


class ModelStateError(TemporalCommunityError, ValueError):
    """Raised when model parameters and graph masks disagree."""


class EvaluationError(TemporalCommunityError, ValueError):
    """Raised when a metric cannot be computed on the given labels."""
