"""Adaptive zero-order Takagi-Sugeno separation controller.

Each ordered pair of followers ``(i, j)`` and each axis owns a single-input
rule bank.  The input is the per-axis gap ``|zeta_i - zeta_j| - d``; the
output is a singleton-weighted average of the actor consequents ``phi``.
A critic bank ``Phi`` over the same firing strengths supplies the TD error
that tunes both.  Functions broadcast over leading dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from flockguide.errors import ConfigError

Array = NDArray[np.float64]

EPS_FIRE = 1e-12
EPS_REWARD = 1e-9
DEFAULT_CENTERS = (-6.0, -3.0, 0.0, 3.0, 6.0)


@dataclass(frozen=True)
class TriangularMembership:
    center: float
    left: float
    right: float

    def __post_init__(self) -> None:
        if not (self.left > 0 and self.right > 0):
            raise ConfigError("membership offsets must be positive")

    def __call__(self, x: ArrayLike) -> Array:
        return membership(self, x)


@dataclass(frozen=True)
class RuleGeometry:
    """Antecedent geometry shared by every bank: sorted centers and offsets."""

    centers: tuple[float, ...] = DEFAULT_CENTERS
    left: tuple[float, ...] = (3.0,) * 5
    right: tuple[float, ...] = (3.0,) * 5

    def __post_init__(self) -> None:
        c = np.asarray(self.centers, dtype=np.float64)
        if len(c) < 2:
            raise ConfigError("a fuzzy bank needs at least two rules")
        if np.any(np.diff(c) <= 0):
            raise ConfigError("rule centers must be strictly increasing")
        if len(self.left) != len(c) or len(self.right) != len(c):
            raise ConfigError("one left and one right offset per rule")
        if min(self.left) <= 0 or min(self.right) <= 0:
            raise ConfigError("membership offsets must be positive")

    @classmethod
    def symmetric(cls, centers=DEFAULT_CENTERS, offset: float = 3.0) -> RuleGeometry:
        centers = tuple(float(c) for c in centers)
        return cls(centers, (float(offset),) * len(centers), (float(offset),) * len(centers))

    @property
    def size(self) -> int:
        return len(self.centers)

    @property
    def rules(self) -> list[TriangularMembership]:
        return [TriangularMembership(c, lo, hi) for c, lo, hi in zip(self.centers, self.left, self.right)]


@dataclass(frozen=True)
class SeparationParams:
    d: float = 2.0
    alpha_a: float = 0.1
    alpha_c: float = 0.05
    universe: tuple[float, float] = (-7.5, 7.5)

    def __post_init__(self) -> None:
        if not self.d > 0:
            raise ConfigError("separation.d must be positive")
        for name in ("alpha_a", "alpha_c"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"separation.{name} must lie in (0, 1)")
        if not self.universe[0] < self.universe[1]:
            raise ConfigError("separation.universe must be an increasing interval")


def fuzzy_input(zeta_i: ArrayLike, zeta_j: ArrayLike, d: float, universe: tuple[float, float] = (-7.5, 7.5)) -> Array:
    gap = np.abs(np.asarray(zeta_i, dtype=np.float64) - np.asarray(zeta_j, dtype=np.float64)) - d
    return np.clip(gap, universe[0], universe[1])


def membership(mf: TriangularMembership, x: ArrayLike) -> Array:
    x = np.asarray(x, dtype=np.float64)
    below = 1.0 - (mf.center - x) / mf.left
    above = 1.0 - (x - mf.center) / mf.right
    return np.clip(np.where(x <= mf.center, below, above), 0.0, 1.0)


def memberships(geom: RuleGeometry, x: ArrayLike) -> Array:
    """Degrees of every rule, shape ``(..., P)``."""
    x = np.asarray(x, dtype=np.float64)[..., None]
    c = np.asarray(geom.centers)
    lo = np.asarray(geom.left)
    hi = np.asarray(geom.right)
    eta = np.where(x <= c, 1.0 - (c - x) / lo, 1.0 - (x - c) / hi)
    return np.clip(eta, 0.0, 1.0)


def firing_strengths(geom: RuleGeometry, x: ArrayLike) -> Array:
    """Normalised firing strengths; dead zones fire the nearest rule alone.

    Ties in distance go to the lower center.
    """
    eta = memberships(geom, x)
    total = eta.sum(axis=-1, keepdims=True)
    live = total > EPS_FIRE
    psi = np.divide(eta, total, out=np.zeros_like(eta), where=live)
    if not np.all(live):
        c = np.asarray(geom.centers)
        nearest = np.argmin(np.abs(np.asarray(x, dtype=np.float64)[..., None] - c), axis=-1)
        onehot = np.eye(len(c))[nearest]
        psi = np.where(live, psi, onehot)
    return psi


def defuzzify(psi: ArrayLike, phi: ArrayLike) -> Array:
    return np.sum(np.asarray(psi, dtype=np.float64) * np.asarray(phi, dtype=np.float64), axis=-1)


critic_value_S = defuzzify


def reward(x: ArrayLike, d: float) -> Array:
    """Highest (3) at the exact safety gap, negative and falling on both sides."""
    if not d > 0:
        raise ConfigError("safety distance must be positive")
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > EPS_REWARD, -x, np.where(x < -EPS_REWARD, 3.0 * x / d, 3.0))


def td_error(S_k: ArrayLike, R_k: ArrayLike, S_next: ArrayLike) -> Array:
    return np.asarray(S_k, dtype=np.float64) - (np.asarray(R_k, dtype=np.float64) + np.asarray(S_next, dtype=np.float64))


def update_pair_actor(phi: ArrayLike, psi: ArrayLike, td: ArrayLike, alpha_a: float) -> Array:
    return np.asarray(phi, dtype=np.float64) - alpha_a * np.sign(np.asarray(td, dtype=np.float64))[..., None] * np.asarray(psi)


def update_pair_critic(Phi: ArrayLike, psi: ArrayLike, td: ArrayLike, alpha_c: float) -> Array:
    return np.asarray(Phi, dtype=np.float64) - alpha_c * np.asarray(td, dtype=np.float64)[..., None] * np.asarray(psi)


def aggregate_separation(outputs: ArrayLike, neighbors: ArrayLike | None = None) -> Array:
    """Mean of per-neighbour contributions along the last axis; 0 if none.

    ``neighbors`` is a boolean mask of the same shape selecting the active
    neighbour set.
    """
    out = np.asarray(outputs, dtype=np.float64)
    if neighbors is None:
        mask = np.ones(out.shape, dtype=bool)
    else:
        mask = np.broadcast_to(np.asarray(neighbors, dtype=bool), out.shape)
    count = mask.sum(axis=-1)
    total = np.where(mask, out, 0.0).sum(axis=-1)
    return np.divide(total, count, out=np.zeros_like(total), where=count > 0)


@dataclass
class PairFuzzyUnit:
    """One ``(owner, neighbour, axis)`` controller with its own weights."""

    owner: int
    neighbor: int
    axis: int
    geometry: RuleGeometry
    phi: Array
    Phi: Array
    psi: Array | None = None
    S: float | None = None
    frozen: bool = False

    def __post_init__(self) -> None:
        if self.owner == self.neighbor:
            raise ConfigError("a pair unit needs two distinct agents")
        self.phi = np.asarray(self.phi, dtype=np.float64)
        self.Phi = np.asarray(self.Phi, dtype=np.float64)

    @classmethod
    def create(cls, owner: int, neighbor: int, axis: int, geometry: RuleGeometry | None = None) -> PairFuzzyUnit:
        geometry = geometry or RuleGeometry()
        return cls(owner, neighbor, axis, geometry, np.zeros(geometry.size), np.zeros(geometry.size))

    def output(self, x_k: float) -> float:
        self.psi = firing_strengths(self.geometry, x_k)
        return float(defuzzify(self.psi, self.phi))


def separation_step(
    unit: PairFuzzyUnit, x_k: float, x_next: float, params: SeparationParams
) -> tuple[float, PairFuzzyUnit, float]:
    """Emit the step-``k`` output, then critic and actor updates on one TD error.

    Returns ``(output, unit, td)``; a frozen unit only emits.
    """
    u = unit.output(x_k)
    psi_k = unit.psi
    psi_next = firing_strengths(unit.geometry, x_next)
    S_k = float(critic_value_S(psi_k, unit.Phi))
    S_next = float(critic_value_S(psi_next, unit.Phi))
    td = float(td_error(S_k, reward(x_k, params.d), S_next))
    unit.S = S_k
    if not unit.frozen:
        unit.Phi = update_pair_critic(unit.Phi, psi_k, td, params.alpha_c)
        unit.phi = update_pair_actor(unit.phi, psi_k, td, params.alpha_a)
    return u, unit, td
