"""Distributed flock guidance with online actor-critic tracking, adaptive fuzzy
separation and Laplacian velocity consensus."""

from flockguide.errors import (
    ConfigError,
    FlockError,
    NumericDomainError,
    SingularCriticError,
    UndefinedConnectivityError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "FlockError",
    "NumericDomainError",
    "SingularCriticError",
    "UndefinedConnectivityError",
    "__version__",
]
