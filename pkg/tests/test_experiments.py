import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from mklsgd.experiments import cli
from mklsgd.experiments.classify import classification_benchmark
from mklsgd.experiments.config import ConfigError, ConfigFile, parse_list, parse_seeds
from mklsgd.experiments.sweep import (OptimizerDefaults, RunRecord, SweepConfig, lookup, run_sweep, summarize,
                                      write_sweep)
from mklsgd import datagen
from mklsgd.losses import InvalidInputError

GOLDEN = Path(__file__).parent / "golden"

FIXTURE_CFG = """\
[problem]
kind = quadratic
d = 1
n = 2
epsilon = 0.5
outlier_centers = [[2.0]]
w_star = [0.0]

[theory]
k = 2
steps = 20
eta = 0.25
"""

SWEEP_CFG = """\
[sweep]
seeds = 0-3

[problem]
kind = regression
n = 200
d = 5

[grid]
epsilon = 0.0, 0.2
variant = sgd, mkl, oracle
k = 2

[optimizer]
max_steps = 4000
"""


def _payload(path):
    lines = Path(path).read_text().splitlines(keepends=True)
    assert lines[0].startswith("# mklsgd-")
    return "".join(lines[1:])


def _rec(coords, seed, dist, ok=True):
    return RunRecord(coords, seed, dist, ok, "plateau" if ok else "diverged", 10, 20, 0.1)


# -- config ------------------------------------------------------------------

def test_parse_helpers():
    assert parse_seeds("0-3, 7") == (0, 1, 2, 3, 7)
    assert parse_list("0.1, 0.2") == [0.1, 0.2]
    assert parse_list("sgd, mkl") == ["sgd", "mkl"]
    with pytest.raises(ValueError):
        parse_seeds("5-2")


def test_config_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[sweep]\nseeds = 0-3\n\n[bogus]\nx = 1\n")
    with pytest.raises(ConfigError) as e:
        ConfigFile(str(p), cli.SWEEP_SCHEMA)
    assert e.value.line == 4 and f"{p}:4:" in str(e.value)
    p.write_text("[sweep]\nseeds = 0-3\nwrkers = 2\n")
    with pytest.raises(ConfigError) as e:
        ConfigFile(str(p), cli.SWEEP_SCHEMA)
    assert e.value.line == 3 and "wrkers" in str(e.value)
    p.write_text("[sweep]\nseeds 0-3\n")
    with pytest.raises(ConfigError) as e:
        ConfigFile(str(p), cli.SWEEP_SCHEMA)
    assert e.value.line == 2


def test_cli_bad_config_exit_one(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text(SWEEP_CFG.replace("n = 200", "n = 200\nkapa = 3"))
    assert cli.main(["sweep", "--config", str(p), "--out", str(tmp_path / "o.csv")]) == 1
    err = capsys.readouterr().err
    assert ":7:" in err and "kapa" in err
    assert not (tmp_path / "o.csv").exists()


def test_cli_missing_config_writes_nothing(tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert cli.main(["sweep", "--config", str(tmp_path / "missing.file"), "--out", str(out)]) == 1
    assert list(tmp_path.iterdir()) == []


def test_cli_usage_error():
    assert cli.main(["nonsense"]) == 1
    assert cli.main(["probabilities", "--n", "3"]) == 1


def test_sweep_config_validation():
    with pytest.raises(InvalidInputError):
        SweepConfig(grid={"epsilon": []})
    with pytest.raises(InvalidInputError):
        SweepConfig(seeds=(1, 1))
    with pytest.raises(InvalidInputError):
        SweepConfig(grid={"variant": ["adam"]})
    with pytest.raises(InvalidInputError):
        SweepConfig(grid={"nope": [1]})


# -- summaries ---------------------------------------------------------------

def test_summarize_examples():
    s = summarize([_rec({"e": 0}, 0, 0.7)])[0]
    assert s.median == 0.7 and s.count == 1
    s = summarize([_rec({"e": 0}, 0, 1.0), _rec({"e": 0}, 1, 3.0)])[0]
    assert s.mean == 2.0
    s = summarize([_rec({"e": 0}, 0, 1.0), _rec({"e": 0}, 1, math.nan, ok=False)])[0]
    assert s.n_diverged == 1 and s.median == 1.0
    with pytest.raises(InvalidInputError):
        summarize([])


def test_summarize_mean_dual_coding():
    rng = np.random.default_rng(0)
    vals = rng.lognormal(size=37)
    recs = [_rec({"c": 1}, i, float(v)) for i, v in enumerate(vals)]
    s = summarize(recs)[0]
    assert s.mean == pytest.approx(math.fsum(vals) / len(vals), rel=1e-12)
    assert s.q1 <= s.median <= s.q3


# -- sweeps ------------------------------------------------------------------

def test_sweep_noiseless_no_outliers_converges():
    cfg = SweepConfig(problem="regression", base={"n": 100, "d": 4}, grid={"epsilon": [0.0],
                      "variant": ["sgd", "mkl"], "k": [2]}, seeds=(0, 1), optimizer=OptimizerDefaults(max_steps=20000))
    for r in run_sweep(cfg):
        assert r.converged and r.distance <= 1e-6


def test_sweep_pairs_data_and_oracle_dominates():
    cfg = SweepConfig(problem="regression", base={"n": 200, "d": 5, "noise_sigma": 0.5},
                      grid={"epsilon": [0.2], "variant": ["sgd", "mkl", "oracle"], "k": [2]},
                      seeds=tuple(range(5)), optimizer=OptimizerDefaults(max_steps=4000))
    sums = summarize(run_sweep(cfg))
    oracle = lookup(sums, variant="oracle").median
    assert oracle <= lookup(sums, variant="mkl").median
    assert oracle <= lookup(sums, variant="sgd").median


def test_sweep_parallel_matches_serial():
    base = dict(problem="quadratic", base={"n": 12, "d": 2, "l_range": [0.5, 2.0]},
                grid={"epsilon": [0.25], "variant": ["sgd", "mkl", "median", "batched"], "k": [3]},
                seeds=(0, 1, 2), optimizer=OptimizerDefaults(max_steps=1500))
    a = run_sweep(SweepConfig(**base))
    b = run_sweep(SweepConfig(**base, workers=2))
    assert [(r.coords, r.seed, r.distance, r.steps) for r in a] == [(r.coords, r.seed, r.distance, r.steps) for r in b]


def test_write_sweep_schema_golden(tmp_path):
    cfg = SweepConfig(problem="quadratic", base={"n": 10, "d": 2},
                      grid={"epsilon": [0.2], "variant": ["sgd", "mkl"], "k": [2]},
                      seeds=(0, 1), optimizer=OptimizerDefaults(max_steps=300))
    paths = write_sweep(run_sweep(cfg), cfg, tmp_path / "s.csv")
    for key, golden in (("records", "sweep_columns.csv"), ("summary", "summary_columns.csv"),
                        ("timing", "timing_columns.csv")):
        first = _payload(paths[key]).splitlines()[0]
        assert first == (GOLDEN / golden).read_text().strip()
    rows = list(csv.DictReader(io.StringIO(_payload(paths["records"]))))
    assert len(rows) == 4 and all(float(r["distance"]) >= 0 for r in rows)


# -- CLI ---------------------------------------------------------------------

def test_cli_probabilities(capsys, tmp_path):
    assert cli.main(["probabilities", "--n", "3", "--k", "2", "--with-replacement"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "5/9 3/9 1/9"
    out = tmp_path / "p.csv"
    assert cli.main(["probabilities", "--n", "4", "--k", "2", "--without-replacement", "--out", str(out)]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "3/6 2/6 1/6 0/6"
    assert out.read_text().splitlines()[1] == "1,3,6,0.5"


def test_cli_theory_check_fixture(tmp_path):
    cfg = tmp_path / "t.ini"
    cfg.write_text(FIXTURE_CFG)
    out = tmp_path / "t.json"
    assert cli.main(["theory-check", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["bounds"]["sgd_lower_bound_slack"] == 0.0
    assert rep["bounds"]["sgd_lower_bound_ok"] and rep["violations"] == []
    assert rep["all_steps_hold"] and len(rep["steps"]) == 20
    assert rep["stationary"]["mkl"] == [0.5]


def test_cli_theory_check_from_saved_dataset(tmp_path):
    ds = datagen.gen_quadratic_ensemble(datagen.QuadraticEnsembleSpec(d=2, n=10, epsilon=0.2, seed=3))
    datagen.save_dataset(ds, tmp_path / "d.csv")
    out = tmp_path / "t.json"
    assert cli.main(["theory-check", "--dataset", str(tmp_path / "d.csv"), "--k", "3", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["all_steps_hold"]


def test_cli_landscape(tmp_path):
    cfg = tmp_path / "l.ini"
    cfg.write_text(FIXTURE_CFG.split("[theory]")[0] + "[landscape]\na = [-1.0]\nb = [3.0]\ngrid_points = 41\n")
    out = tmp_path / "scan.csv"
    assert cli.main(["landscape", "--config", str(cfg), "--out", str(out)]) == 0
    body = _payload(out).splitlines()
    assert body[0] == (GOLDEN / "landscape_columns.csv").read_text().strip()
    assert len(body) == 42
    stat = json.loads((tmp_path / "scan.stationary.json").read_text())
    assert stat["from_a"]["point"] == [0.5] and stat["from_a"]["top_ranks_clean"]


def test_cli_degenerate_exit_two(tmp_path):
    cfg = tmp_path / "t.ini"
    cfg.write_text("[problem]\nkind = regression\nd = 5\nn = 3\n")
    assert cli.main(["theory-check", "--config", str(cfg), "--out", str(tmp_path / "x.json")]) == 2
    assert not (tmp_path / "x.json").exists()


def test_cli_sweep_replay(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text(SWEEP_CFG.replace("0-3", "0-1"))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(b), "--workers", "2"]) == 0
    assert _payload(a) == _payload(b)
    assert _payload(tmp_path / "a.summary.csv") == _payload(tmp_path / "b.summary.csv")


def test_classify_eps0_within_one_point():
    t = classification_benchmark(datagen.ClassificationSpec(epsilon=0.0), seeds=range(5))
    accs = [t.mean(n) for n in t.names]
    assert max(accs) - min(accs) <= 0.01


def test_cli_classify_small(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[problem]\nd = 5\nn = 300\nn_test = 500\n\n[grid]\nepsilon = 0.1, 0.3\n\n"
                   "[classify]\nseeds = 0-1\nsteps = 400\n")
    out = tmp_path / "c.csv"
    assert cli.main(["classify", "--config", str(cfg), "--out", str(out)]) == 0
    body = _payload(out).splitlines()
    assert body[0] == (GOLDEN / "classify_columns.csv").read_text().strip()
    assert len(body) == 1 + 2 * 3
    assert (tmp_path / "c.series.csv").exists()
