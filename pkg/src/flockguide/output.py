"""Output bundle: CSV logs, summary, gnuplot script and the effective-config echo.

Every number goes through ``format(x, ".17g")`` so a float read back from
the CSV is bit-identical to the one written.  Files are written to a
temporary sibling and renamed into place.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from flockguide.config import to_document
from flockguide.scenario import METRIC_COLUMNS, RunRecord

STATE_COLUMNS = (
    "k", "agent", "active", "x", "y", "vx", "vy",
    "ut_x", "ut_y", "us_x", "us_y", "uc_x", "uc_y", "u_x", "u_y",
)
TRACKING_COLUMNS = (
    "k", "agent", "axis", "w0", "w1", "w2",
    *(f"W{r}{c}" for r in range(4) for c in range(4)),
    "utility",
)
SEPARATION_COLUMNS = ("owner", "neighbor", "axis", "rule", "phi", "Phi")

FILES = ("metrics.csv", "states.csv", "tracking.csv", "separation_final.csv", "summary.txt", "plot.gp", "config.cfg")


def _current_umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


_UMASK = _current_umask()


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class OutputBundle:
    directory: Path

    def path(self, name: str) -> Path:
        return self.directory / name

    @property
    def files(self) -> list[Path]:
        return [self.directory / f for f in FILES]


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        os.chmod(tmp, 0o666 & ~_UMASK)
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def metrics_csv(record: RunRecord) -> str:
    rows = ([str(int(r[0])), *(fmt(x) for x in r[1:])] for r in record.metrics)
    return _csv(METRIC_COLUMNS, rows)


def states_csv(record: RunRecord) -> str:
    K = record.steps
    N = record.positions.shape[1]

    def rows():
        for k in range(K + 1):
            for i in range(N):
                p = record.positions[k, i]
                v = record.velocities[k, i]
                row = [str(k), str(i), "1" if record.active[k, i] else "0", fmt(p[0]), fmt(p[1]), fmt(v[0]), fmt(v[1])]
                if k < K:
                    u = record.controls[k, i]
                    total = u.sum(axis=0)
                    row += [fmt(x) for x in u.reshape(-1)] + [fmt(total[0]), fmt(total[1])]
                else:
                    row += [""] * 8
                yield row

    return _csv(STATE_COLUMNS, rows())


def tracking_csv(record: RunRecord) -> str:
    K = record.steps
    nf = record.omega.shape[1]

    def rows():
        for k in range(K + 1):
            for f in range(nf):
                for a in range(2):
                    util = fmt(record.utilities[k, f, a]) if k < K else ""
                    yield [
                        str(k), str(f + 1), "xy"[a],
                        *(fmt(x) for x in record.omega[k, f, a]),
                        *(fmt(x) for x in record.Omega[k, f, a].reshape(-1)),
                        util,
                    ]

    return _csv(TRACKING_COLUMNS, rows())


def separation_csv(record: RunRecord) -> str:
    phi, Phi = record.phi, record.Phi
    rows = []
    if phi.ndim == 3:  # one bank per follower and axis
        for f in range(phi.shape[0]):
            for a in range(2):
                for r in range(phi.shape[-1]):
                    rows.append([str(f + 1), "*", "xy"[a], str(r), fmt(phi[f, a, r]), fmt(Phi[f, a, r])])
    else:
        nf = phi.shape[0]
        for f in range(nf):
            for g in range(nf):
                if f == g:
                    continue
                for a in range(2):
                    for r in range(phi.shape[-1]):
                        rows.append([str(f + 1), str(g + 1), "xy"[a], str(r), fmt(phi[f, g, a, r]), fmt(Phi[f, g, a, r])])
    return _csv(SEPARATION_COLUMNS, rows)


def summary_text(record: RunRecord) -> str:
    cfg = record.config
    last = record.metrics[-1]
    lines = [
        f"scenario: {cfg.name}",
        f"seed: {cfg.seed}",
        f"steps: {record.steps}",
        f"followers active at end: {int(record.active[-1, 1:].sum())}/{cfg.followers}",
        "",
        "final metrics:",
    ]
    for name, value in zip(METRIC_COLUMNS[1:], last[1:]):
        lines.append(f"  {name} = {fmt(value)}")
    lines += ["", "topology epochs (follower graph):"]
    for e in record.events:
        lam2 = "undefined" if e.lambda2 is None else fmt(e.lambda2)
        lines.append(f"  k={e.step} t={fmt(e.time)} {e.description}: lambda2={lam2} lambda_max={fmt(e.lambda_max)}")
    lines += [
        "",
        "tracking critic diagnostics:",
        f"  critic updates = {record.critic_updates}",
        f"  value-decreasing updates = {record.monotonicity_violations}",
    ]
    return "\n".join(lines) + "\n"


def plot_script() -> str:
    return """\
# gnuplot script; run from this directory: gnuplot plot.gp
set datafile separator ','
set terminal pngcairo size 900,600
set key autotitle columnhead
set xlabel 't [s]'
set grid

set output 'metrics.png'
set multiplot layout 3,1
set ylabel 'tracking [m]'
plot 'metrics.csv' using 2:3 with lines title 'O_t', '' using 2:6 with lines title 'std_t'
set ylabel 'separation [m]'
plot 'metrics.csv' using 2:4 with lines title 'O_s', '' using 2:7 with lines title 'std_s'
set ylabel 'speed [m/s]'
plot 'metrics.csv' using 2:5 with lines title 'O_v', '' using 2:8 with lines title 'std_v'
unset multiplot

set output 'paths.png'
set size ratio -1
set xlabel 'x [m]'
set ylabel 'y [m]'
plot 'states.csv' using ($2==0 ? $4 : 1/0):5 with lines lw 2 title 'leader', \\
     '' using ($2>0 && $3==1 ? $4 : 1/0):5 with dots title 'followers'
"""


def emit_outputs(record: RunRecord, destination: str | os.PathLike) -> OutputBundle:
    """Write the full bundle for ``record`` into ``destination`` (created if missing)."""
    out = Path(destination)
    out.mkdir(parents=True, exist_ok=True)
    contents = {
        "metrics.csv": metrics_csv(record),
        "states.csv": states_csv(record),
        "tracking.csv": tracking_csv(record),
        "separation_final.csv": separation_csv(record),
        "summary.txt": summary_text(record),
        "plot.gp": plot_script(),
        "config.cfg": to_document(record.config),
    }
    for name, text in contents.items():
        atomic_write(out / name, text)
    return OutputBundle(out)


def read_metrics(path: str | os.PathLike) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def aggregate_csv(rows: list[tuple[int, np.ndarray]]) -> str:
    """One line per seed with its final metric row."""
    return _csv(("seed", *METRIC_COLUMNS), ([str(s), str(int(m[0])), *(fmt(x) for x in m[1:])] for s, m in rows))


def aggregate_summary(name: str, rows: list[tuple[int, np.ndarray]]) -> str:
    finals = np.array([m for _, m in rows])
    lines = [f"scenario: {name}", f"seeds: {', '.join(str(s) for s, _ in rows)}", "", "final metrics across seeds (mean, min, max):"]
    for j, col in enumerate(METRIC_COLUMNS[2:], start=2):
        c = finals[:, j]
        lines.append(f"  {col}: {fmt(c.mean())} {fmt(c.min())} {fmt(c.max())}")
    return "\n".join(lines) + "\n"
