import csv
import hashlib
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from flockguide.cli import main, parse_seeds, UsageError
from flockguide.config import parse_config
from flockguide.output import FILES, emit_outputs, fmt, read_metrics
from flockguide.scenario import METRIC_COLUMNS, builtin_scenario, run
from recompute_metrics import compare


def digests(d: Path) -> dict[str, str]:
    return {f: hashlib.sha256((d / f).read_bytes()).hexdigest() for f in FILES}


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("s1")
    rec = run(builtin_scenario("scenario1"))
    emit_outputs(rec, out)
    return rec, out


def test_metrics_csv_shape(bundle):
    rec, out = bundle
    with open(out / "metrics.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == METRIC_COLUMNS
    assert len(rows) - 1 == 401


def test_csv_round_trips_exactly(bundle):
    rec, out = bundle
    assert np.array_equal(read_metrics(out / "metrics.csv"), rec.metrics)


def test_fmt_is_round_trip_exact():
    rng = np.random.default_rng(0)
    for x in rng.normal(size=1000) * 10.0 ** rng.integers(-20, 20, size=1000):
        assert float(fmt(x)) == x


def test_states_csv_layout(bundle):
    rec, out = bundle
    with open(out / "states.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 401 * 21
    last = rows[-1]
    assert last["k"] == "400" and last["u_x"] == ""
    first = rows[1]
    total = float(first["ut_x"]) + float(first["us_x"]) + float(first["uc_x"])
    assert float(first["u_x"]) == pytest.approx(total, abs=1e-15)


def test_metrics_recomputed_from_states(bundle):
    _, out = bundle
    assert compare(out) < 1e-12


def test_config_echo_reproduces_run(bundle, tmp_path):
    rec, out = bundle
    cfg = parse_config((out / "config.cfg").read_text())
    assert cfg == rec.config
    emit_outputs(run(cfg), tmp_path)
    assert digests(tmp_path) == digests(out)


def test_zero_duration_bundle(tmp_path):
    emit_outputs(run(replace(builtin_scenario("scenario1"), duration=0.0)), tmp_path)
    assert len(read_metrics(tmp_path / "metrics.csv")) == 1


def test_no_temp_files_left(bundle):
    _, out = bundle
    assert sorted(p.name for p in out.iterdir()) == sorted(FILES)


def test_summary_lists_epochs(tmp_path):
    emit_outputs(run(builtin_scenario("scenario2")), tmp_path)
    text = (tmp_path / "summary.txt").read_text()
    for k in ("k=100", "k=200", "k=300", "lambda2=", "value-decreasing updates"):
        assert k in text
    assert compare(tmp_path) < 1e-12


def test_parse_seeds():
    assert parse_seeds("1..8") == list(range(1, 9))
    assert parse_seeds("3, 5,9") == [3, 5, 9]
    for bad in ("8..1", "x", ""):
        with pytest.raises(UsageError):
            parse_seeds(bad)


def test_cli_run_and_exit_codes(tmp_path, capsys):
    out = tmp_path / "s1"
    assert main(["run", "--scenario", "scenario1", "--seed", "42", "--out", str(out), "--duration", "2"]) == 0
    assert all((out / f).exists() for f in FILES)
    assert len(read_metrics(out / "metrics.csv")) == 21

    bad = tmp_path / "bad.cfg"
    bad.write_text("foo = 1\n")
    assert main(["validate", str(bad)]) == 2
    assert "line 1" in capsys.readouterr().err
    assert main(["validate", "--config", str(bad)]) == 2

    good = tmp_path / "good.cfg"
    good.write_text("base = scenario2\nseparation.d = 2.5\n")
    assert main(["validate", str(good)]) == 0
    assert main(["run", "--nonsense"]) == 1
    assert main([]) == 1
    assert main(["run", "--scenario", "scenario7"]) == 1
    assert main(["validate", str(tmp_path / "missing.cfg")]) == 1
    assert main(["describe", "--override", "separation.d=-1"]) == 2


def test_cli_describe_round_trips(capsys):
    assert main(["describe", "--scenario", "scenario2", "--override", "tracking.rho_a = 0.02", "--seed", "9"]) == 0
    cfg = parse_config(capsys.readouterr().out)
    assert cfg.seed == 9 and cfg.tracking.rho_a == 0.02 and cfg.name == "scenario2"


def test_cli_numeric_abort(tmp_path, capsys):
    code = main(["run", "--scenario", "scenario1", "--duration", "3", "--out", str(tmp_path),
                 "--override", "tracking.gradient_consistent=false", "--override", "tracking.rho_c=0.9"])
    err = capsys.readouterr().err
    assert code == 3, err
    assert "step" in err


def test_cli_unwritable_destination(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--duration", "1", "--out", str(blocker / "sub")]) != 0


def test_cli_sweep(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--scenario", "scenario2", "--seeds", "1..8", "--duration", "1", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir() if p.is_dir()) == sorted(f"seed-{s}" for s in range(1, 9))
    with open(out / "aggregate.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["seed"] for r in rows] == [str(s) for s in range(1, 9)]
    assert (out / "aggregate_summary.txt").exists()
    m = read_metrics(out / "seed-3" / "metrics.csv")
    assert float(rows[2]["O_t"]) == m[-1, 2]
