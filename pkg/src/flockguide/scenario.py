"""Experiment orchestration: leader commands, disturbances, metrics and the run loop."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from flockguide.consensus import FlockGraph, algebraic_connectivity, largest_eigenvalue, laplacian
from flockguide.core import FlockState, synchronous_step
from flockguide.errors import ConfigError, FlockError, NumericDomainError
from flockguide.fuzzy import (
    RuleGeometry,
    SeparationParams,
    critic_value_S,
    defuzzify,
    firing_strengths,
    fuzzy_input,
    reward,
    td_error,
    update_pair_actor,
    update_pair_critic,
)
from flockguide.tracking import TrackingParams, TrackingState

log = logging.getLogger(__name__)

Array = NDArray[np.float64]
Pair = tuple[float, float]

LITERAL_OFFSET = 1.5
METRIC_COLUMNS = ("k", "t", "O_t", "O_s", "O_v", "std_t", "std_s", "std_v")
ACTIONS = ("decommission", "switch_leader", "set_safety_distance")


@dataclass(frozen=True)
class LeaderCommand:
    kind: str = "circular"
    radius: float = 5.0
    rate: float = 0.03  # rad per step
    center: Pair = (0.0, 0.0)
    velocity: Pair = (0.0, 0.0)
    start: Pair = (0.0, 0.0)  # linear kind, first segment only

    def __post_init__(self) -> None:
        if self.kind not in ("circular", "linear"):
            raise ConfigError(f"unknown leader kind {self.kind!r}")


@dataclass(frozen=True)
class DisturbanceEvent:
    time: float
    action: str
    ids: tuple[int, ...] = ()
    distance: float | None = None
    command: LeaderCommand | None = None

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise ConfigError(f"unknown disturbance action {self.action!r}")
        if self.time < 0:
            raise ConfigError("disturbance times must be nonnegative")
        if self.action == "decommission" and not self.ids:
            raise ConfigError("decommission needs at least one follower id")
        if self.action == "set_safety_distance" and not (self.distance is not None and self.distance > 0):
            raise ConfigError("set_safety_distance needs a positive distance")
        if self.action == "switch_leader" and self.command is None:
            raise ConfigError("switch_leader needs a leader command")

    def step(self, T: float) -> int:
        return event_step(self.time, T)


def event_step(t: float, T: float) -> int:
    return max(0, math.ceil(t / T - 1e-9))


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario1"
    followers: int = 20
    duration: float = 40.0
    T: float = 0.1
    seed: int = 42
    position_range: Pair = (-5.0, 5.0)
    velocity_range: Pair = (0.0, 1.0)
    velocity_bounds: Pair = (-10.0, 10.0)
    tracking: TrackingParams = field(default_factory=TrackingParams)
    kp_init: float = 1.0
    kd_init: float = 2.0
    separation: SeparationParams = field(default_factory=SeparationParams)
    centers: tuple[float, ...] = (-6.0, -3.0, 0.0, 3.0, 6.0)
    offset: float = 3.0
    literal_offsets: bool = False
    shared_bank: bool = False
    directional: bool = True
    separation_frozen: bool = False
    c0: float = 1.0
    leader: LeaderCommand = field(default_factory=LeaderCommand)
    disturbances: tuple[DisturbanceEvent, ...] = ()
    use_tracking: bool = True
    use_separation: bool = True
    use_consensus: bool = True

    def __post_init__(self) -> None:
        if self.followers < 1:
            raise ConfigError("flock.followers must be at least 1")
        if not self.T > 0:
            raise ConfigError("sim.T must be positive")
        if self.duration < 0 or (0 < self.duration < self.T):
            raise ConfigError("sim.duration must be 0 or at least one sampling period")
        for name, key in (
            ("position_range", "init.position_range"),
            ("velocity_range", "init.velocity_range"),
            ("velocity_bounds", "bounds.velocity"),
        ):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"{key} must be ordered (low <= high)")
        if not self.offset > 0:
            raise ConfigError("separation.offsets must be positive")
        if self.c0 < 0:
            raise ConfigError("consensus.c0 must be nonnegative")
        if self.kp_init < 0 or self.kd_init < 0:
            raise ConfigError("tracking.kp_init and tracking.kd_init must be nonnegative")
        self.geometry  # validates centers
        times = [e.time for e in self.disturbances]
        if times != sorted(times):
            raise ConfigError("disturbance times must be sorted by index")
        gone: set[int] = set()
        for e in self.disturbances:
            for i in e.ids:
                if not 1 <= i <= self.followers:
                    raise ConfigError(f"disturbance ids: unknown follower id {i}")
                if i in gone:
                    raise ConfigError(f"disturbance ids: follower {i} decommissioned twice")
                gone.add(i)

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.T))

    @property
    def geometry(self) -> RuleGeometry:
        off = LITERAL_OFFSET if self.literal_offsets else self.offset
        return RuleGeometry.symmetric(self.centers, off)

    @property
    def n_agents(self) -> int:
        return self.followers + 1


LEADER = 0


def builtin_scenario(name: str) -> ScenarioConfig:
    if name == "scenario1":
        return ScenarioConfig(name="scenario1")
    if name == "scenario2":
        return ScenarioConfig(
            name="scenario2",
            disturbances=(
                DisturbanceEvent(10.0, "decommission", ids=(1, 2, 3, 4)),
                DisturbanceEvent(20.0, "switch_leader", command=LeaderCommand(kind="linear", velocity=(1.7321, 1.0))),
                DisturbanceEvent(30.0, "set_safety_distance", distance=2.5),
            ),
        )
    raise ConfigError(f"unknown scenario {name!r} (expected scenario1 or scenario2)")


class LeaderSchedule:
    """Piecewise leader trajectory with positional continuity at each switch."""

    def __init__(self, initial: LeaderCommand, T: float, switches: Sequence[tuple[int, LeaderCommand]] = ()):
        self.T = T
        self.segments: list[tuple[int, LeaderCommand, Array]] = []
        self._add(0, initial, None)
        for k, cmd in sorted(switches, key=lambda s: s[0]):
            self._add(k, cmd, self._raw(k))

    def _closed(self, cmd: LeaderCommand, k: int, k0: int) -> Array:
        if cmd.kind == "circular":
            a = cmd.rate * k
            return np.array([cmd.center[0] + cmd.radius * math.cos(a), cmd.center[1] + cmd.radius * math.sin(a)])
        return np.array([cmd.velocity[0], cmd.velocity[1]]) * (self.T * (k - k0))

    def _add(self, k0: int, cmd: LeaderCommand, anchor: Array | None) -> None:
        if anchor is None:
            shift = np.zeros(2) if cmd.kind == "circular" else np.array(cmd.start, dtype=np.float64)
        else:
            shift = anchor - self._closed(cmd, k0, k0)
        self.segments.append((k0, cmd, shift))

    def _raw(self, k: int) -> Array:
        seg = self._segment(k)
        k0, cmd, shift = seg
        return self._closed(cmd, k, k0) + shift

    def _segment(self, k: int):
        current = self.segments[0]
        for seg in self.segments:
            if seg[0] <= k:
                current = seg
        return current

    def position(self, k: int) -> Array:
        return self._raw(k)

    def state(self, k: int) -> tuple[Array, Array]:
        p = self.position(k)
        return p, (self.position(k + 1) - p) / self.T


def schedule_for(config: ScenarioConfig) -> LeaderSchedule:
    switches = [(e.step(config.T), e.command) for e in config.disturbances if e.action == "switch_leader"]
    return LeaderSchedule(config.leader, config.T, switches)


def leader_state(schedule: LeaderSchedule, k: int) -> tuple[Array, Array]:
    return schedule.state(k)


def sample_initial_flock(config: ScenarioConfig, rng: np.random.Generator | None = None) -> FlockState:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    n = config.n_agents
    pos = np.zeros((n, 2))
    vel = np.zeros((n, 2))
    for i in range(1, n):
        pos[i] = rng.uniform(config.position_range[0], config.position_range[1], size=2)
        vel[i] = rng.uniform(config.velocity_range[0], config.velocity_range[1], size=2)
    pos[LEADER], vel[LEADER] = schedule_for(config).state(0)
    return FlockState(pos, vel, np.ones(n, dtype=bool), LEADER, config.T, 0, config.velocity_bounds)


def compute_metrics(flock: FlockState, d: float) -> tuple[float, ...]:
    """``(O_t, O_s, O_v, std_t, std_s, std_v)`` over active followers."""
    idx = np.array([i for i in range(flock.n_agents) if i != flock.leader_index and flock.active[i]], dtype=int)
    if len(idx) == 0:
        raise FlockError("no active followers left to measure")
    p = flock.positions[idx]
    track = np.linalg.norm(p - flock.positions[flock.leader_index], axis=1)
    if len(idx) > 1:
        dist = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
        sep = (dist.sum(axis=1) - 0.0) / (len(idx) - 1) - d
    else:
        sep = np.zeros(1)
    speed = np.linalg.norm(flock.velocities[idx], axis=1)
    return (
        float(track.mean()),
        float(sep.mean()),
        float(speed.mean()),
        float(track.std()),
        float(sep.std()),
        float(speed.std()),
    )


@dataclass
class TopologyEvent:
    step: int
    time: float
    description: str
    lambda2: float | None
    lambda_max: float


@dataclass
class RunRecord:
    config: ScenarioConfig
    metrics: Array  # (K+1, 8) in METRIC_COLUMNS order
    positions: Array  # (K+1, N, 2)
    velocities: Array
    active: NDArray[np.bool_]  # (K+1, N)
    controls: Array  # (K, N, 3, 2): tracking, separation, consensus
    utilities: Array  # (K, followers, 2)
    omega: Array  # (K+1, followers, 2, 3)
    Omega: Array  # (K+1, followers, 2, 4, 4)
    safety_distance: Array  # (K+1,) d in force when row k was measured
    events: list[TopologyEvent]
    phi: Array
    Phi: Array
    monotonicity_violations: int
    critic_updates: int

    @property
    def steps(self) -> int:
        return len(self.metrics) - 1

    def column(self, name: str) -> Array:
        return self.metrics[:, METRIC_COLUMNS.index(name)]


def cumulative_cost(record: RunRecord, agent: int, axis: int) -> float:
    """Finite-horizon sum of tracking utilities for follower ``agent`` (agent id)."""
    return float(np.sum(record.utilities[:, agent - 1, axis]))


class FlockController:
    """Learning state of every follower and the per-step control law."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        nf = config.followers
        self.geometry = config.geometry
        self.tracking = TrackingState.create((nf, 2), config.kp_init, config.kd_init, config.T)
        P = self.geometry.size
        bank_shape = (nf, 2, P) if config.shared_bank else (nf, nf, 2, P)
        self.phi = np.zeros(bank_shape)
        self.Phi = np.zeros(bank_shape)
        self.d = config.separation.d

    @property
    def params(self) -> SeparationParams:
        return replace(self.config.separation, d=self.d)

    def start(self, flock: FlockState) -> None:
        self.tracking.observe(self._errors(flock))

    def _errors(self, flock: FlockState) -> Array:
        return flock.positions[1:] - flock.positions[flock.leader_index]

    def _gaps(self, p: Array) -> Array:
        return fuzzy_input(p[:, None, :], p[None, :, :], self.d, self.config.separation.universe)

    def _bank(self, i: int) -> Array:
        return self.phi[i][None] if self.config.shared_bank else self.phi[i]

    def agent_control(self, flock: FlockState, i: int) -> Array:
        """Tracking, separation and consensus accelerations of follower ``i`` (agent id), shape (3, 2)."""
        cfg = self.config
        fi = i - 1
        out = np.zeros((3, 2))
        if not flock.active[i]:
            return out
        p = flock.positions[1:]
        v = flock.velocities[1:]
        act = flock.active[1:]
        if cfg.use_tracking:
            out[0] = np.sum(self.tracking.omega[fi] * self.tracking.window[fi], axis=-1)
        neigh = act.copy()
        neigh[fi] = False
        if cfg.use_separation:
            gaps = fuzzy_input(p[fi], p, self.d, cfg.separation.universe)  # (nf, 2)
            psi = firing_strengths(self.geometry, gaps)
            pair_out = defuzzify(psi, self._bank(fi))
            if cfg.directional:
                pair_out = pair_out * np.sign(p[fi] - p)
            w = neigh[:, None]
            cnt = int(neigh.sum())
            if cnt:
                out[1] = np.where(w, pair_out, 0.0).sum(axis=0) / cnt
        if cfg.use_consensus:
            cnt = int(neigh.sum())
            if cnt:
                c = cfg.c0 / cnt
                out[2] = -c * np.where(neigh[:, None], v[fi] - v, 0.0).sum(axis=0)
        return out

    def compute_controls(self, flock: FlockState, schedule: LeaderSchedule, order: Sequence[int] | None = None) -> Array:
        """Per-term controls for every agent from one immutable snapshot, shape (N, 3, 2)."""
        n = flock.n_agents
        controls = np.zeros((n, 3, 2))
        order = range(1, n) if order is None else order
        for i in order:
            if i == flock.leader_index:
                continue
            controls[i] = self.agent_control(flock, i)
        _, q0 = schedule.state(flock.step)
        _, q1 = schedule.state(flock.step + 1)
        # leader acceleration comes only from the command generator; stored in the tracking slot
        controls[flock.leader_index] = 0.0
        controls[flock.leader_index, 0] = (q1 - q0) / flock.T
        return controls

    def learn(self, before: FlockState, after: FlockState) -> None:
        cfg = self.config
        act = before.active[1:]
        e_next = self._errors(after)
        if cfg.use_tracking:
            self.tracking.learn(e_next, cfg.tracking, mask=act[:, None])
        else:
            self.tracking.observe(e_next)
        if cfg.use_separation and not cfg.separation_frozen:
            self._learn_separation(before.positions[1:], after.positions[1:], act)

    def _learn_separation(self, p: Array, p_next: Array, act: NDArray[np.bool_]) -> None:
        sp = self.params
        nf = len(p)
        x_k = self._gaps(p)
        x_n = self._gaps(p_next)
        psi_k = firing_strengths(self.geometry, x_k)  # (nf, nf, 2, P)
        psi_n = firing_strengths(self.geometry, x_n)
        pairs = act[:, None] & act[None, :] & ~np.eye(nf, dtype=bool)
        if self.config.shared_bank:
            Phi = self.Phi[:, None]
            phi = self.phi[:, None]
        else:
            Phi, phi = self.Phi, self.phi
        td = td_error(critic_value_S(psi_k, Phi), reward(x_k, sp.d), critic_value_S(psi_n, Phi))
        new_Phi = update_pair_critic(Phi, psi_k, td, sp.alpha_c)
        new_phi = update_pair_actor(phi, psi_k, td, sp.alpha_a)
        m = pairs[:, :, None, None]
        if self.config.shared_bank:
            cnt = np.maximum(pairs.sum(axis=1), 1)[:, None, None]
            dPhi = np.where(m, new_Phi - Phi, 0.0).sum(axis=1) / cnt
            dphi = np.where(m, new_phi - phi, 0.0).sum(axis=1) / cnt
            self.Phi = self.Phi + dPhi
            self.phi = self.phi + dphi
        else:
            self.Phi = np.where(m, new_Phi, self.Phi)
            self.phi = np.where(m, new_phi, self.phi)
        ok = np.isfinite(self.phi).reshape(nf, -1).all(axis=1) & np.isfinite(self.Phi).reshape(nf, -1).all(axis=1)
        if not ok.all():
            raise NumericDomainError("non-finite separation weights", agent=int(np.flatnonzero(~ok)[0]))


def follower_graph(config: ScenarioConfig, active: NDArray[np.bool_]) -> FlockGraph:
    n = int(np.count_nonzero(active[1:]))
    return FlockGraph.complete(n, config.c0)


def _topology_event(config: ScenarioConfig, active, k: int, what: str) -> TopologyEvent:
    L = laplacian(follower_graph(config, active))
    lam2 = algebraic_connectivity(L) if L.shape[0] >= 2 else None
    return TopologyEvent(k, k * config.T, what, lam2, largest_eigenvalue(L))


def apply_disturbance(flock: FlockState, controller: FlockController, event: DisturbanceEvent) -> str:
    """Mutates ``flock`` / ``controller`` in place and returns a log description."""
    if event.action == "decommission":
        for i in event.ids:
            if not flock.active[i]:
                raise ConfigError(f"follower {i} is already inactive")
            flock.active[i] = False
        return "decommission " + ",".join(str(i) for i in event.ids)
    if event.action == "set_safety_distance":
        controller.d = float(event.distance)
        return f"set_safety_distance {event.distance!r}"
    cmd = event.command
    return f"switch_leader {cmd.kind}"


def run(config: ScenarioConfig) -> RunRecord:
    """Simulate ``config`` deterministically and return the full record."""
    K = config.steps
    schedule = schedule_for(config)
    flock = sample_initial_flock(config)
    controller = FlockController(config)
    controller.start(flock)

    L0 = laplacian(follower_graph(config, flock.active))
    if config.use_consensus and config.T * largest_eigenvalue(L0) >= 2.0:
        warnings.warn("consensus step unstable: T * lambda_max >= 2", RuntimeWarning, stacklevel=2)
    events = [_topology_event(config, flock.active, 0, "initial")]

    nf, N = config.followers, config.n_agents
    metrics = np.zeros((K + 1, len(METRIC_COLUMNS)))
    positions = np.zeros((K + 1, N, 2))
    velocities = np.zeros((K + 1, N, 2))
    active = np.zeros((K + 1, N), dtype=bool)
    controls = np.zeros((K, N, 3, 2))
    utilities = np.zeros((K, nf, 2))
    omega = np.zeros((K + 1, nf, 2, 3))
    Omega = np.zeros((K + 1, nf, 2, 4, 4))
    dist = np.zeros(K + 1)

    def record(k: int) -> None:
        metrics[k] = (k, k * config.T, *compute_metrics(flock, controller.d))
        positions[k] = flock.positions
        velocities[k] = flock.velocities
        active[k] = flock.active
        omega[k] = controller.tracking.omega
        Omega[k] = controller.tracking.Omega
        dist[k] = controller.d

    pending = sorted(config.disturbances, key=lambda e: e.time)
    while pending and pending[0].step(config.T) == 0:
        what = apply_disturbance(flock, controller, pending.pop(0))
        events.append(_topology_event(config, flock.active, 0, what))
    record(0)

    for k in range(K):
        while pending and pending[0].step(config.T) <= k:
            what = apply_disturbance(flock, controller, pending.pop(0))
            events.append(_topology_event(config, flock.active, k, what))
        snapshot = flock.copy()
        u = controller.compute_controls(snapshot, schedule)
        bad = ~np.all(np.isfinite(u.reshape(N, -1)), axis=1)
        if np.any(bad):
            raise NumericDomainError("non-finite control", step=k, agent=int(np.flatnonzero(bad)[0]))
        flock = synchronous_step(snapshot, u.sum(axis=1))
        try:
            controller.learn(snapshot, flock)
        except NumericDomainError as exc:
            agent = None if exc.agent is None else exc.agent + 1
            raise NumericDomainError(exc.detail, step=k, agent=agent) from exc
        controls[k] = u
        if config.use_tracking and controller.tracking.last_utility is not None:
            utilities[k] = controller.tracking.last_utility
        record(k + 1)

    log.info("run %s seed=%d finished after %d steps", config.name, config.seed, K)
    return RunRecord(
        config=config,
        metrics=metrics,
        positions=positions,
        velocities=velocities,
        active=active,
        controls=controls,
        utilities=utilities,
        omega=omega,
        Omega=Omega,
        safety_distance=dist,
        events=events,
        phi=controller.phi,
        Phi=controller.Phi,
        monotonicity_violations=controller.tracking.monotonicity_violations,
        critic_updates=controller.tracking.updates,
    )
