from __future__ import annotations


class FlockError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(FlockError):
    """Invalid configuration; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericDomainError(FlockError):
    """A state or weight left the finite reals."""

    def __init__(self, message: str, step: int | None = None, agent: int | None = None) -> None:
        self.detail = message
        self.step = step
        self.agent = agent
        where = []
        if step is not None:
            where.append(f"step {step}")
        if agent is not None:
            where.append(f"agent {agent}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SingularCriticError(FlockError):
    """The critic's control-control block is too close to zero to invert."""


class UndefinedConnectivityError(FlockError):
    """Algebraic connectivity requested for a graph with fewer than two nodes."""
