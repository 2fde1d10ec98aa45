"""Velocity consensus over a weighted undirected graph and its spectral diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from flockguide.errors import ConfigError, UndefinedConnectivityError

Array = NDArray[np.float64]


@dataclass(frozen=True)
class FlockGraph:
    weights: Array

    def __post_init__(self) -> None:
        c = np.asarray(self.weights, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ConfigError("graph weights must be a square matrix")
        if not np.array_equal(c, c.T):
            raise ConfigError("graph weights must be symmetric")
        if np.any(np.diag(c) != 0):
            raise ConfigError("graph weights must have a zero diagonal")
        if np.any(c < 0):
            raise ConfigError("graph weights must be nonnegative")
        object.__setattr__(self, "weights", c)

    @property
    def order(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def complete(cls, n: int, c0: float = 1.0) -> FlockGraph:
        """Fully connected graph with ``c_ij = c0 / (n - 1)``."""
        c = np.zeros((n, n))
        if n > 1:
            c[:] = c0 / (n - 1)
            np.fill_diagonal(c, 0.0)
        return cls(c)

    def subgraph(self, keep: ArrayLike) -> FlockGraph:
        idx = np.flatnonzero(np.asarray(keep, dtype=bool)) if np.asarray(keep).dtype == bool else np.asarray(keep)
        return FlockGraph(self.weights[np.ix_(idx, idx)])


def laplacian(graph: FlockGraph | ArrayLike) -> Array:
    c = graph.weights if isinstance(graph, FlockGraph) else np.asarray(graph, dtype=np.float64)
    return np.diag(c.sum(axis=1)) - c


def consensus_control(i: int, velocities: ArrayLike, graph: FlockGraph) -> float:
    v = np.asarray(velocities, dtype=np.float64)
    return float(-np.sum(graph.weights[i] * (v[i] - v)))


def consensus_controls(velocities: ArrayLike, graph: FlockGraph) -> Array:
    """All agents at once: ``-L v`` (columns of ``velocities`` are axes)."""
    return -laplacian(graph) @ np.asarray(velocities, dtype=np.float64)


def _deflated(L: Array) -> Array:
    # orthonormal basis of the complement of the constant vector
    n = L.shape[0]
    ones = np.ones((n, 1)) / np.sqrt(n)
    basis, _ = np.linalg.qr(np.hstack([ones, np.eye(n)[:, : n - 1]]))
    B = basis[:, 1:]
    return B.T @ L @ B


def algebraic_connectivity(L: ArrayLike) -> float:
    """Second-smallest Laplacian eigenvalue (Fiedler value)."""
    L = np.asarray(L, dtype=np.float64)
    if L.shape[0] < 2:
        raise UndefinedConnectivityError("algebraic connectivity needs at least two nodes")
    M = _deflated(0.5 * (L + L.T))
    return float(np.linalg.eigvalsh(M)[0])


def largest_eigenvalue(L: ArrayLike) -> float:
    L = np.asarray(L, dtype=np.float64)
    if L.shape[0] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(0.5 * (L + L.T))[-1])


def stable_step(L: ArrayLike, T: float) -> bool:
    """Explicit-Euler stability of the consensus term alone: ``T * lambda_max < 2``."""
    return T * largest_eigenvalue(L) < 2.0
