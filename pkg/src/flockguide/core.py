"""Agent kinematics, control aggregation and synchronous flock stepping.

Every agent is a planar double integrator sampled with period ``T``::

    p[k+1] = p[k] + T * q[k]
    q[k+1] = clamp(q[k] + T * u[k], v_min, v_max)

Positions advance with the velocity held *before* the update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from flockguide.errors import ConfigError, NumericDomainError

Pair = tuple[float, float]


@dataclass(frozen=True)
class AgentState:
    position: Pair
    velocity: Pair
    active: bool = True


@dataclass(frozen=True)
class ControlSignal:
    """Per-term accelerations of one agent and their exact componentwise sum."""

    tracking: Pair
    separation: Pair
    consensus: Pair
    total: Pair


@dataclass
class FlockState:
    """Synchronous snapshot of the whole flock at step ``step``.

    Positions and velocities are stored as ``(N, 2)`` arrays so that the
    stepping code can stay vectorised; :attr:`agents` gives the per-agent view.
    """

    positions: NDArray[np.float64]
    velocities: NDArray[np.float64]
    active: NDArray[np.bool_]
    leader_index: int
    T: float
    step: int = 0
    bounds: Pair = field(default=(-10.0, 10.0))

    def __post_init__(self) -> None:
        self.positions = np.array(self.positions, dtype=np.float64).reshape(-1, 2)
        self.velocities = np.array(self.velocities, dtype=np.float64).reshape(-1, 2)
        self.active = np.array(self.active, dtype=bool).reshape(-1)
        n = len(self.positions)
        if self.velocities.shape != (n, 2) or self.active.shape != (n,):
            raise ConfigError("positions, velocities and active flags must have matching length")
        if not 0 <= self.leader_index < n:
            raise ConfigError(f"leader index {self.leader_index} outside [0, {n})")
        if self.step < 0:
            raise ConfigError("step index must be nonnegative")
        if self.T <= 0:
            raise ConfigError("sampling period must be positive")

    @property
    def n_agents(self) -> int:
        return len(self.positions)

    @property
    def time(self) -> float:
        return self.step * self.T

    @property
    def agents(self) -> list[AgentState]:
        return [
            AgentState(
                position=(float(p[0]), float(p[1])),
                velocity=(float(q[0]), float(q[1])),
                active=bool(a),
            )
            for p, q, a in zip(self.positions, self.velocities, self.active)
        ]

    @property
    def followers(self) -> NDArray[np.int_]:
        return np.array([i for i in range(self.n_agents) if i != self.leader_index], dtype=int)

    def copy(self) -> FlockState:
        return FlockState(
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            active=self.active.copy(),
            leader_index=self.leader_index,
            T=self.T,
            step=self.step,
            bounds=self.bounds,
        )


def _euler(p, q, u, T: float, bounds: Pair):
    p_next = p + T * q
    q_next = np.clip(q + T * u, bounds[0], bounds[1])
    return p_next, q_next


def integrate_agent(
    state: AgentState, u: Sequence[float], T: float, bounds: Pair = (-10.0, 10.0), agent: int | None = None
) -> AgentState:
    """Advance one agent by one sampling period."""
    if T <= 0:
        raise ConfigError("sampling period must be positive")
    p = np.asarray(state.position, dtype=np.float64)
    q = np.asarray(state.velocity, dtype=np.float64)
    a = np.asarray(u, dtype=np.float64)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q)) and np.all(np.isfinite(a))):
        raise NumericDomainError("non-finite agent state or control", agent=agent)
    p_next, q_next = _euler(p, q, a, T, bounds)
    return AgentState(
        position=(float(p_next[0]), float(p_next[1])),
        velocity=(float(q_next[0]), float(q_next[1])),
        active=state.active,
    )


def aggregate_control(u_t: Sequence[float], u_s: Sequence[float], u_c: Sequence[float]) -> ControlSignal:
    parts = [tuple(float(x) for x in v) for v in (u_t, u_s, u_c)]
    for v in parts:
        if len(v) != 2 or not all(np.isfinite(v)):
            raise NumericDomainError("control components must be finite pairs")
    total = tuple(a + b + c for a, b, c in zip(*parts))
    return ControlSignal(tracking=parts[0], separation=parts[1], consensus=parts[2], total=total)


def synchronous_step(flock: FlockState, controls: Sequence[ControlSignal] | NDArray[np.float64]) -> FlockState:
    """Integrate every active agent with its control; inactive agents stay put.

    ``controls`` is either a list of :class:`ControlSignal` or an ``(N, 2)``
    array of total accelerations.
    """
    if isinstance(controls, np.ndarray):
        u = np.asarray(controls, dtype=np.float64)
    else:
        u = np.array([c.total for c in controls], dtype=np.float64).reshape(-1, 2)
    if u.shape != (flock.n_agents, 2):
        raise ConfigError(f"expected {flock.n_agents} controls, got {len(u)}")

    act = flock.active
    bad = act & ~np.all(np.isfinite(u), axis=1)
    if np.any(bad):
        raise NumericDomainError("non-finite control", step=flock.step, agent=int(np.flatnonzero(bad)[0]))

    p_next, q_next = _euler(flock.positions, flock.velocities, u, flock.T, flock.bounds)
    p_next = np.where(act[:, None], p_next, flock.positions)
    q_next = np.where(act[:, None], q_next, flock.velocities)

    bad = ~(np.all(np.isfinite(p_next), axis=1) & np.all(np.isfinite(q_next), axis=1))
    if np.any(bad):
        raise NumericDomainError("non-finite agent state", step=flock.step + 1, agent=int(np.flatnonzero(bad)[0]))

    return FlockState(
        positions=p_next,
        velocities=q_next,
        active=flock.active.copy(),
        leader_index=flock.leader_index,
        T=flock.T,
        step=flock.step + 1,
        bounds=flock.bounds,
    )
