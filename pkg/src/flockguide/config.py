"""Flat ``key = value`` configuration documents.

Documents are UTF-8 text, one assignment per line, ``#`` starts a comment.
Keys are dotted (``tracking.rho_a``, ``disturbance.2.time``).  A document
overrides a base scenario, chosen with ``base = scenario1|scenario2`` or by
the caller.  :func:`to_document` writes the fully-resolved configuration
back in the same syntax; parsing that echo reproduces the configuration.
"""

from __future__ import annotations

import re
from typing import Callable

from flockguide.errors import ConfigError
from flockguide.fuzzy import SeparationParams
from flockguide.scenario import DisturbanceEvent, LeaderCommand, ScenarioConfig, builtin_scenario
from flockguide.tracking import TrackingParams


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    return int(text)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(n: int | None) -> Callable[[str], tuple[float, ...]]:
    def parse(text: str) -> tuple[float, ...]:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
        if n is not None and len(vals) != n:
            raise ValueError(f"expected {n} comma-separated numbers, got {len(vals)}")
        return vals

    return parse


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _str(text: str) -> str:
    return text


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


# key -> (parser, getter(config))
_SCALAR_KEYS: dict[str, tuple[Callable, Callable[[ScenarioConfig], object]]] = {
    "name": (_str, lambda c: c.name),
    "flock.followers": (_int, lambda c: c.followers),
    "sim.duration": (_float, lambda c: c.duration),
    "sim.T": (_float, lambda c: c.T),
    "sim.seed": (_int, lambda c: c.seed),
    "init.position_range": (_floats(2), lambda c: c.position_range),
    "init.velocity_range": (_floats(2), lambda c: c.velocity_range),
    "bounds.velocity": (_floats(2), lambda c: c.velocity_bounds),
    "tracking.Q": (_floats(9), lambda c: tuple(x for row in c.tracking.Q for x in row)),
    "tracking.R": (_float, lambda c: c.tracking.R),
    "tracking.rho_a": (_float, lambda c: c.tracking.rho_a),
    "tracking.rho_c": (_float, lambda c: c.tracking.rho_c),
    "tracking.gradient_consistent": (_bool, lambda c: c.tracking.gradient_consistent),
    "tracking.eps_inv": (_float, lambda c: c.tracking.eps_inv),
    "tracking.kp_init": (_float, lambda c: c.kp_init),
    "tracking.kd_init": (_float, lambda c: c.kd_init),
    "separation.d": (_float, lambda c: c.separation.d),
    "separation.alpha_a": (_float, lambda c: c.separation.alpha_a),
    "separation.alpha_c": (_float, lambda c: c.separation.alpha_c),
    "separation.universe": (_floats(2), lambda c: c.separation.universe),
    "separation.centers": (_floats(None), lambda c: c.centers),
    "separation.offsets": (_float, lambda c: c.offset),
    "separation.literal_offsets": (_bool, lambda c: c.literal_offsets),
    "separation.shared_bank": (_bool, lambda c: c.shared_bank),
    "separation.directional": (_bool, lambda c: c.directional),
    "separation.frozen": (_bool, lambda c: c.separation_frozen),
    "consensus.c0": (_float, lambda c: c.c0),
    "leader.kind": (_str, lambda c: c.leader.kind),
    "leader.radius": (_float, lambda c: c.leader.radius),
    "leader.rate": (_float, lambda c: c.leader.rate),
    "leader.center": (_floats(2), lambda c: c.leader.center),
    "leader.velocity": (_floats(2), lambda c: c.leader.velocity),
    "leader.start": (_floats(2), lambda c: c.leader.start),
    "terms.tracking": (_bool, lambda c: c.use_tracking),
    "terms.separation": (_bool, lambda c: c.use_separation),
    "terms.consensus": (_bool, lambda c: c.use_consensus),
}

_EVENT_FIELDS: dict[str, Callable] = {
    "time": _float,
    "action": _str,
    "ids": _ints,
    "distance": _float,
    "leader.kind": _str,
    "leader.radius": _float,
    "leader.rate": _float,
    "leader.center": _floats(2),
    "leader.velocity": _floats(2),
}

_EVENT_KEY = re.compile(r"^disturbance\.(\d+)\.(.+)$")


def _event_fields(e: DisturbanceEvent) -> dict[str, object]:
    out: dict[str, object] = {"time": e.time, "action": e.action}
    if e.ids:
        out["ids"] = e.ids
    if e.distance is not None:
        out["distance"] = e.distance
    if e.command is not None:
        out["leader.kind"] = e.command.kind
        out["leader.radius"] = e.command.radius
        out["leader.rate"] = e.command.rate
        out["leader.center"] = e.command.center
        out["leader.velocity"] = e.command.velocity
    return out


def _build(values: dict[str, object], events: dict[int, dict[str, object]]) -> ScenarioConfig:
    v = values
    q = v["tracking.Q"]
    tracking = TrackingParams(
        Q=(tuple(q[0:3]), tuple(q[3:6]), tuple(q[6:9])),
        R=v["tracking.R"],
        rho_a=v["tracking.rho_a"],
        rho_c=v["tracking.rho_c"],
        gradient_consistent=v["tracking.gradient_consistent"],
        eps_inv=v["tracking.eps_inv"],
    )
    separation = SeparationParams(
        d=v["separation.d"],
        alpha_a=v["separation.alpha_a"],
        alpha_c=v["separation.alpha_c"],
        universe=v["separation.universe"],
    )
    leader = LeaderCommand(
        kind=v["leader.kind"],
        radius=v["leader.radius"],
        rate=v["leader.rate"],
        center=v["leader.center"],
        velocity=v["leader.velocity"],
        start=v["leader.start"],
    )
    disturbances = []
    for idx in sorted(events):
        f = events[idx]
        if "time" not in f or "action" not in f:
            raise ConfigError(f"disturbance.{idx} needs both time and action")
        command = None
        if f["action"] == "switch_leader":
            base = LeaderCommand(kind="linear")
            command = LeaderCommand(
                kind=f.get("leader.kind", base.kind),
                radius=f.get("leader.radius", base.radius),
                rate=f.get("leader.rate", base.rate),
                center=f.get("leader.center", base.center),
                velocity=f.get("leader.velocity", base.velocity),
            )
        disturbances.append(
            DisturbanceEvent(
                time=f["time"],
                action=f["action"],
                ids=tuple(f.get("ids", ())),
                distance=f.get("distance"),
                command=command,
            )
        )
    return ScenarioConfig(
        name=v["name"],
        followers=v["flock.followers"],
        duration=v["sim.duration"],
        T=v["sim.T"],
        seed=v["sim.seed"],
        position_range=v["init.position_range"],
        velocity_range=v["init.velocity_range"],
        velocity_bounds=v["bounds.velocity"],
        tracking=tracking,
        kp_init=v["tracking.kp_init"],
        kd_init=v["tracking.kd_init"],
        separation=separation,
        centers=v["separation.centers"],
        offset=v["separation.offsets"],
        literal_offsets=v["separation.literal_offsets"],
        shared_bank=v["separation.shared_bank"],
        directional=v["separation.directional"],
        separation_frozen=v["separation.frozen"],
        c0=v["consensus.c0"],
        leader=leader,
        disturbances=tuple(disturbances),
        use_tracking=v["terms.tracking"],
        use_separation=v["terms.separation"],
        use_consensus=v["terms.consensus"],
    )


def _tokenize(document: str) -> list[tuple[int, str, str]]:
    out = []
    for lineno, raw in enumerate(document.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        out.append((lineno, key, value))
    return out


def parse_config(document: str, base: ScenarioConfig | str | None = None) -> ScenarioConfig:
    """Validate ``document`` on top of ``base`` (a config or builtin name).

    A ``base`` key inside the document wins over the argument.
    """
    entries = _tokenize(document)
    for lineno, key, value in entries:
        if key == "base":
            try:
                base = builtin_scenario(value)
            except ConfigError as exc:
                raise ConfigError(str(exc), lineno) from None
    if base is None:
        base = builtin_scenario("scenario1")
    elif isinstance(base, str):
        base = builtin_scenario(base)

    values = {k: getter(base) for k, (_, getter) in _SCALAR_KEYS.items()}
    events = {i: _event_fields(e) for i, e in enumerate(base.disturbances, start=1)}
    lines: dict[str, int] = {}
    for lineno, key, value in entries:
        if key == "base":
            continue
        m = _EVENT_KEY.match(key)
        try:
            if key in _SCALAR_KEYS:
                values[key] = _SCALAR_KEYS[key][0](value)
            elif m and m.group(2) in _EVENT_FIELDS:
                events.setdefault(int(m.group(1)), {})[m.group(2)] = _EVENT_FIELDS[m.group(2)](value)
            else:
                raise ConfigError(f"unknown key {key!r}", lineno)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", lineno) from None
        lines[key] = lineno

    try:
        return _build(values, events)
    except ConfigError as exc:
        msg = str(exc)
        hits = [ln for k, ln in lines.items() if k in msg]
        if not hits:
            hits = [ln for k, ln in lines.items() if re.search(rf"\b{re.escape(k.split('.')[-1])}\b", msg)]
        if not hits and "disturbance" in msg:
            hits = [ln for k, ln in lines.items() if k.startswith("disturbance")]
        raise ConfigError(msg, min(hits) if hits else None) from None


def to_document(config: ScenarioConfig) -> str:
    """Complete effective configuration; ``parse_config(to_document(c)) == c``."""
    lines = [f"# effective configuration ({config.name})"]
    for key, (_, getter) in _SCALAR_KEYS.items():
        lines.append(f"{key} = {_fmt(getter(config))}")
    for i, e in enumerate(config.disturbances, start=1):
        for field_name, value in _event_fields(e).items():
            lines.append(f"disturbance.{i}.{field_name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def with_overrides(config: ScenarioConfig, assignments: list[str]) -> ScenarioConfig:
    """Apply ``key=value`` strings (as given on the command line).

    Error line numbers count the assignments from 1.
    """
    if not assignments:
        return config
    for n, a in enumerate(assignments, start=1):
        if "\n" in a:
            raise ConfigError("an override must be a single key=value line", n)
        if a.split("=", 1)[0].strip() == "base":
            raise ConfigError("base cannot be overridden", n)
    return parse_config("\n".join(assignments), base=config)


__all__ = ["parse_config", "to_document", "with_overrides"]
