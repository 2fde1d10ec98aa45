"""Command-line front end.

Exit codes: 0 success, 1 usage or I/O failure, 2 configuration error,
3 numeric abort.  ``FLOCK_LOG`` sets the logging level (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from flockguide.config import parse_config, to_document, with_overrides
from flockguide.errors import ConfigError, FlockError
from flockguide.output import aggregate_csv, aggregate_summary, atomic_write, emit_outputs
from flockguide.scenario import ScenarioConfig, builtin_scenario, run

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("flockguide")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2), which is our config code
        raise UsageError(message)


def parse_seeds(text: str) -> list[int]:
    """``"1..8"`` (inclusive) or a comma list ``"1,3,5"``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
            if hi < lo:
                raise UsageError(f"empty seed range {text!r}")
            return list(range(lo, hi + 1))
        seeds = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad seed list {text!r}") from None
    if not seeds:
        raise UsageError("empty seed list")
    return seeds


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flockguide", description="Leader-follower flock guidance simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("config_file", nargs="?", help="configuration document (same as --config)")
        sp.add_argument("--scenario", default=None, help="builtin base scenario (scenario1, scenario2)")
        sp.add_argument("--config", default=None, help="configuration document")
        sp.add_argument("--duration", type=float, default=None, help="simulated seconds")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")

    r = sub.add_parser("run", help="simulate and write an output bundle")
    common(r)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None, help="output directory (default runs/<name>-<seed>)")

    v = sub.add_parser("validate", help="parse and validate a configuration")
    common(v)
    v.add_argument("--seed", type=int, default=None)

    s = sub.add_parser("sweep", help="repeat a run over several seeds")
    common(s)
    s.add_argument("--seeds", required=True, help="'1..8' or '1,2,5'")
    s.add_argument("--out", default=None)
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    d = sub.add_parser("describe", help="print the effective configuration")
    common(d)
    d.add_argument("--seed", type=int, default=None)
    return p


def resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    if args.config and args.config_file and args.config != args.config_file:
        raise UsageError("give the configuration either positionally or with --config, not both")
    path = args.config or args.config_file
    try:
        base = builtin_scenario(args.scenario) if args.scenario else None
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc.strerror}") from None
        cfg = parse_config(text, base=base)
    else:
        cfg = base or builtin_scenario("scenario1")
    extra = []
    if getattr(args, "seed", None) is not None:
        extra.append(f"sim.seed = {args.seed}")
    if args.duration is not None:
        extra.append(f"sim.duration = {args.duration!r}")
    cfg = with_overrides(cfg, extra)
    return with_overrides(cfg, list(args.override))


def _run_one(cfg: ScenarioConfig, out: Path) -> tuple[int, list[float]]:
    t0 = time.perf_counter()
    record = run(cfg)
    emit_outputs(record, out)
    log.info("seed %d written to %s in %.3f s", cfg.seed, out, time.perf_counter() - t0)
    return cfg.seed, list(record.metrics[-1])


def _cmd_run(cfg: ScenarioConfig, args) -> int:
    out = Path(args.out or f"runs/{cfg.name}-{cfg.seed}")
    t0 = time.perf_counter()
    record = run(cfg)
    elapsed = time.perf_counter() - t0
    emit_outputs(record, out)
    last = record.metrics[-1]
    print(f"{cfg.name} seed={cfg.seed}: O_t={last[2]:.4g} O_s={last[3]:.4g} std_v={last[7]:.4g} -> {out}")
    print(f"wall-clock: {elapsed:.3f} s")
    return EXIT_OK


def _cmd_sweep(cfg: ScenarioConfig, args) -> int:
    seeds = parse_seeds(args.seeds)
    root = Path(args.out or f"runs/{cfg.name}-sweep")
    root.mkdir(parents=True, exist_ok=True)
    configs = [with_overrides(cfg, [f"sim.seed = {s}"]) for s in seeds]
    dirs = [root / f"seed-{s}" for s in seeds]
    t0 = time.perf_counter()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, configs, dirs))
    else:
        results = [_run_one(c, d) for c, d in zip(configs, dirs)]
    rows = [(s, np.asarray(m)) for s, m in results]
    atomic_write(root / "aggregate.csv", aggregate_csv(rows))
    atomic_write(root / "aggregate_summary.txt", aggregate_summary(cfg.name, rows))
    print(f"{len(seeds)} runs -> {root}")
    print(f"wall-clock: {time.perf_counter() - t0:.3f} s")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("FLOCK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _build_parser().parse_args(argv)
        cfg = resolve_config(args)
        if args.command == "validate":
            print(f"ok: {cfg.name} ({cfg.followers} followers, {cfg.steps} steps, {len(cfg.disturbances)} disturbances)")
            return EXIT_OK
        if args.command == "describe":
            sys.stdout.write(to_document(cfg))
            return EXIT_OK
        if args.command == "run":
            return _cmd_run(cfg, args)
        return _cmd_sweep(cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FlockError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
