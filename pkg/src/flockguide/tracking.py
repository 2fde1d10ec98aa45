"""Online value-iteration actor-critic for leader tracking.

One controller instance runs per follower and per axis.  Its state is a
three-sample window of tracking errors ``E = [e_k, e_{k-1}, e_{k-2}]``, a
linear actor ``u = w @ E`` and a quadratic critic ``V = 1/2 z' W z`` over
``z = [E; u]``.  All functions broadcast over leading dimensions so the
runner can update the whole flock at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from flockguide.errors import ConfigError, NumericDomainError, SingularCriticError

Array = NDArray[np.float64]

EPS_INV = 1e-6


@dataclass(frozen=True)
class TrackingParams:
    Q: tuple[tuple[float, ...], ...] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    R: float = 1.0
    rho_a: float = 1e-2
    rho_c: float = 1e-7
    gradient_consistent: bool = True
    eps_inv: float = EPS_INV

    def __post_init__(self) -> None:
        Q = np.asarray(self.Q, dtype=np.float64)
        if Q.shape != (3, 3):
            raise ConfigError("tracking.Q must be 3x3")
        if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12):
            raise ConfigError("tracking.Q must be symmetric")
        try:
            np.linalg.cholesky(Q)
        except np.linalg.LinAlgError:
            raise ConfigError("tracking.Q must be positive definite") from None
        if not self.R > 0:
            raise ConfigError("tracking.R must be positive")
        for name in ("rho_a", "rho_c"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"tracking.{name} must lie in (0, 1)")
        if not self.eps_inv > 0:
            raise ConfigError("tracking.eps_inv must be positive")

    @property
    def Q_matrix(self) -> Array:
        return np.asarray(self.Q, dtype=np.float64)


def push_error(window: ArrayLike | None, e_new: ArrayLike) -> Array:
    """Shift ``e_new`` into the newest slot; an empty window is repeat-padded."""
    e = np.asarray(e_new, dtype=np.float64)
    if not np.all(np.isfinite(e)):
        raise NumericDomainError("non-finite tracking error")
    if window is None:
        return np.repeat(e[..., None], 3, axis=-1)
    w = np.asarray(window, dtype=np.float64)
    return np.concatenate([e[..., None], w[..., :2]], axis=-1)


def utility(E: ArrayLike, u: ArrayLike, params: TrackingParams) -> Array:
    E = np.asarray(E, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    quad = np.einsum("...i,ij,...j->...", E, params.Q_matrix, E)
    return 0.5 * (quad + params.R * u * u)


def actor_policy(omega: ArrayLike, E: ArrayLike) -> Array:
    return np.sum(np.asarray(omega, dtype=np.float64) * np.asarray(E, dtype=np.float64), axis=-1)


def _stack_z(E: ArrayLike, u: ArrayLike) -> Array:
    E = np.asarray(E, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    u = np.broadcast_to(u, E.shape[:-1])
    return np.concatenate([E, u[..., None]], axis=-1)


def critic_value(Omega: ArrayLike, E: ArrayLike, u: ArrayLike) -> Array:
    z = _stack_z(E, u)
    return 0.5 * np.einsum("...i,...ij,...j->...", z, np.asarray(Omega, dtype=np.float64), z)


def target_policy(Omega: ArrayLike, E: ArrayLike, eps_inv: float = EPS_INV) -> Array:
    """Minimiser of the critic over ``u``: ``-Omega_uu^-1 Omega_uE E``."""
    Omega = np.asarray(Omega, dtype=np.float64)
    uu = Omega[..., 3, 3]
    if np.any(~(np.abs(uu) >= eps_inv)):
        raise SingularCriticError(f"|Omega_uu| below {eps_inv:g}")
    return -np.sum(Omega[..., 3, :3] * np.asarray(E, dtype=np.float64), axis=-1) / uu


def target_value(E_k, u_k, E_next, u_next, Omega, params: TrackingParams) -> Array:
    return utility(E_k, u_k, params) + critic_value(Omega, E_next, u_next)


def update_actor(omega, E_k, u_hat, u_tilde, rho_a: float, gradient_consistent: bool = False) -> Array:
    """``omega - rho_a * err * E`` with ``err`` the squared actor error (or its gradient)."""
    diff = np.asarray(u_hat, dtype=np.float64) - np.asarray(u_tilde, dtype=np.float64)
    err = diff if gradient_consistent else 0.5 * diff * diff
    return np.asarray(omega, dtype=np.float64) - rho_a * err[..., None] * np.asarray(E_k, dtype=np.float64)


def floor_uu(Omega: Array, eps_inv: float = EPS_INV) -> Array:
    uu = Omega[..., 3, 3]
    small = np.abs(uu) < eps_inv
    if np.any(small):
        Omega = Omega.copy()
        Omega[..., 3, 3] = np.where(small, np.where(uu < 0, -eps_inv, eps_inv), uu)
    return Omega


def critic_step_coefficient(V_hat, V_tilde, rho_c: float, gradient_consistent: bool = False) -> Array:
    """Scalar multiplying ``z z'`` in the critic update (subtracted from Omega)."""
    diff = np.asarray(V_hat, dtype=np.float64) - np.asarray(V_tilde, dtype=np.float64)
    err = diff if gradient_consistent else 0.5 * diff * diff
    return rho_c * err


def update_critic(
    Omega, z, V_hat, V_tilde, rho_c: float, eps_inv: float = EPS_INV, gradient_consistent: bool = False
) -> Array:
    Omega = np.asarray(Omega, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    coef = critic_step_coefficient(V_hat, V_tilde, rho_c, gradient_consistent)
    new = Omega - coef[..., None, None] * (z[..., :, None] * z[..., None, :])
    new = 0.5 * (new + np.swapaxes(new, -1, -2))
    return floor_uu(new, eps_inv)


def initial_weights(kp: float, kd: float, T: float) -> tuple[Array, Array]:
    """Actor/critic start for a PD-like admissible policy on the error window.

    ``u = -kp e_k - kd (e_k - e_{k-1}) / T``.  The critic is built so that its
    minimiser coincides with that policy and it stays positive definite:
    ``Omega = [[I + w'w, -w'], [-w, 1]]``.  ``kp = kd = 0`` gives ``w = 0`` and
    ``Omega = I``.
    """
    w = np.array([-(kp + kd / T), kd / T, 0.0])
    Omega = np.eye(4)
    Omega[:3, :3] += np.outer(w, w)
    Omega[3, :3] = -w
    Omega[:3, 3] = -w
    return w, Omega


def _check_finite(a: Array, trailing: int, what: str) -> None:
    ok = np.isfinite(a).reshape(*a.shape[: a.ndim - trailing], -1).all(axis=-1)
    if not np.all(ok):
        first = np.argwhere(~np.atleast_1d(ok))[0]
        # leading index of the first bad instance (follower slot when batched)
        raise NumericDomainError(what, agent=int(first[0]) if np.ndim(ok) else None)


@dataclass
class TrackingState:
    """Weights and error windows of a block of independent controllers.

    ``omega`` has shape ``(..., 3)``, ``Omega`` ``(..., 4, 4)`` and ``window``
    ``(..., 3)`` (``None`` until the first error has been observed).
    """

    omega: Array
    Omega: Array
    window: Array | None = None
    monotonicity_violations: int = 0
    updates: int = 0
    last_utility: Array | None = field(default=None, repr=False)

    @classmethod
    def create(cls, shape: tuple[int, ...] = (), kp: float = 0.0, kd: float = 0.0, T: float = 0.1) -> TrackingState:
        w, Om = initial_weights(kp, kd, T)
        return cls(
            omega=np.broadcast_to(w, (*shape, 3)).copy(),
            Omega=np.broadcast_to(Om, (*shape, 4, 4)).copy(),
        )

    def observe(self, e: ArrayLike) -> None:
        self.window = push_error(self.window, e)

    def emit(self) -> Array:
        if self.window is None:
            raise ConfigError("tracking controller has not observed an error yet")
        return actor_policy(self.omega, self.window)

    def learn(self, e_next: ArrayLike, params: TrackingParams, mask: ArrayLike | None = None) -> None:
        """Critic update then actor update over the transition ``k -> k+1``.

        ``mask`` (broadcastable to the leading shape) selects the instances
        allowed to learn; the others keep their weights but still advance
        their error window.
        """
        E_k = self.window
        u_k = actor_policy(self.omega, E_k)
        E_next = push_error(E_k, e_next)
        u_next = actor_policy(self.omega, E_next)

        V_hat = critic_value(self.Omega, E_k, u_k)
        V_tilde = target_value(E_k, u_k, E_next, u_next, self.Omega, params)
        z = _stack_z(E_k, u_k)
        with np.errstate(over="ignore", invalid="ignore"):
            Omega = update_critic(
                self.Omega, z, V_hat, V_tilde, params.rho_c, params.eps_inv, params.gradient_consistent
            )
            _check_finite(Omega, 2, "non-finite tracking critic")
            u_tilde = target_policy(Omega, E_k, params.eps_inv)
            omega = update_actor(self.omega, E_k, u_k, u_tilde, params.rho_a, params.gradient_consistent)
            _check_finite(omega, 1, "non-finite tracking actor")
            coef = critic_step_coefficient(V_hat, V_tilde, params.rho_c, params.gradient_consistent)
        # a positive coefficient lowers the value estimate along z
        decreased = (coef > 0) & np.any(z != 0, axis=-1)
        if mask is not None:
            m = np.broadcast_to(np.asarray(mask, dtype=bool), u_k.shape)
            Omega = np.where(m[..., None, None], Omega, self.Omega)
            omega = np.where(m[..., None], omega, self.omega)
            decreased = decreased & m
            self.updates += int(np.count_nonzero(m))
        else:
            self.updates += int(np.size(u_k))
        self.monotonicity_violations += int(np.count_nonzero(decreased))

        self.last_utility = utility(E_k, u_k, params)
        self.Omega = Omega
        self.omega = omega
        self.window = E_next


def tracking_step(
    state: TrackingState, zeta_i_k, zeta_l_k, zeta_i_next, zeta_l_next, params: TrackingParams
) -> tuple[Array, TrackingState]:
    """Emit the step-``k`` control, then learn from the observed ``k+1`` errors.

    The window is seeded with the step-``k`` error when empty; otherwise it
    is assumed to already end at step ``k``.
    """
    if state.window is None:
        state.observe(np.asarray(zeta_i_k, dtype=np.float64) - np.asarray(zeta_l_k, dtype=np.float64))
    u = state.emit()
    state.learn(np.asarray(zeta_i_next, dtype=np.float64) - np.asarray(zeta_l_next, dtype=np.float64), params)
    return u, state
