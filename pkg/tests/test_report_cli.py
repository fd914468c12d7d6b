import hashlib
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifcsim.cli import main
from ifcsim.errors import ConfigError, SchemaMismatch
from ifcsim.report import Aggregate, Report, report_merge
from ifcsim.runconfig import parse_config

DATA = os.path.join(os.path.dirname(__file__), "data")
SMOKE = os.path.join(DATA, "smoke.cfg")


def make_report(samples, **scalars):
    r = Report()
    r.add_samples("x", samples)
    for k, v in scalars.items():
        r.add(k, v)
    return r


def test_merge_identity_and_commutativity():
    a = make_report([1.0, 2.0, 3.5], model="Free")
    b = make_report([-1.0, 0.25])
    assert report_merge([a, Report()]).lines() == a.lines()
    assert report_merge([a, b]).lines() == report_merge([b, a]).lines()


samples = st.lists(st.floats(-1e6, 1e6), max_size=20)


@settings(max_examples=60, deadline=None)
@given(samples, samples, samples)
def test_merge_associative(a, b, c):
    ra, rb, rc = make_report(a), make_report(b), make_report(c)
    left = report_merge([report_merge([ra, rb]), rc]).aggregates.get("x", Aggregate())
    right = report_merge([ra, report_merge([rb, rc])]).aggregates.get("x", Aggregate())
    assert (left.n, left.lo, left.hi) == (right.n, right.lo, right.hi)
    scale = 1.0 + sum(abs(v) for v in a + b + c)
    assert abs(left.total - right.total) <= 4 * np.finfo(float).eps * scale


def test_merge_quarters_matches_single_pass():
    vals = np.random.default_rng(0).normal(size=400)
    full = Aggregate.of(vals)
    quarters = [make_report(vals[i::4]) for i in range(4)]
    merged = report_merge([report_merge(quarters[:2]), report_merge(quarters[2:])]).aggregates["x"]
    assert merged.n == full.n and merged.lo == full.lo and merged.hi == full.hi
    scale = math.fsum(np.abs(vals))
    assert abs(merged.total - full.total) <= 8 * np.finfo(float).eps * scale
    assert merged.mean == pytest.approx(full.mean, abs=1e-14)
    assert merged.std == pytest.approx(full.std, rel=1e-13)


def test_merge_schema_mismatch():
    old = Report(schema=0)
    with pytest.raises(SchemaMismatch):
        report_merge([Report(), old])
    with pytest.raises(SchemaMismatch):
        report_merge([make_report([1.0], model="A"), make_report([2.0], model="B")])


def test_config_parse_and_reject():
    cfg = parse_config("seed = 5  # master\nmodel.kind = SineBeta\nexperiment.dt_ladder = 0.1, 0.05\n")
    assert cfg["seed"] == 5 and cfg["model.kind"] == "SineBeta"
    assert cfg["experiment.dt_ladder"] == (0.1, 0.05)
    with pytest.raises(ConfigError, match="model.colour"):
        parse_config("model.colour = red")
    with pytest.raises(ConfigError):
        parse_config("just words")


def _digests(out):
    return {f: hashlib.sha256(open(os.path.join(out, f), "rb").read()).hexdigest() for f in sorted(os.listdir(out))}


def test_cli_smoke_and_golden(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--config", SMOKE, "--out", str(out)]) == 0
    assert sorted(os.listdir(out)) == ["brownian.csv", "report.txt", "trajectory.csv"]
    with open(os.path.join(DATA, "smoke_report.txt"), encoding="utf-8") as fh:
        assert (out / "report.txt").read_text(encoding="utf-8") == fh.read()


def test_cli_checksum_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", SMOKE, "--out", str(a)]) == 0
    assert main(["simulate", "--config", SMOKE, "--out", str(b), "--workers", "2"]) == 0
    assert _digests(a) == _digests(b)


def test_cli_bad_kind(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("model.kind = bogus\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "model.kind" in capsys.readouterr().err


def test_cli_out_env(tmp_path, monkeypatch):
    monkeypatch.setenv("IFCSIM_OUT", str(tmp_path / "env"))
    assert main(["simulate", "--config", SMOKE]) == 0
    assert (tmp_path / "env" / "report.txt").exists()


def test_cli_ladder_must_divide_horizon(tmp_path, capsys):
    cfg = tmp_path / "ladder.cfg"
    cfg.write_text("solver.T = 0.05\nexperiment.dt_ladder = 0.004, 0.002\n")
    assert main(["all", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "experiment.dt_ladder" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
