import csv
import json
import subprocess
import sys

import pytest

from normverify import norms
from normverify.cli import main
from normverify.config import PipelineConfig, read_config_file, resolve
from normverify.errors import ConfigError
from normverify.synthetic import make_synthetic


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    ds = make_synthetic(n_animals=24, n_artifacts=26, n_animal_features=40, n_artifact_features=45,
                        animal_categories=3, artifact_categories=3, seed=5)
    norms.write_norms(ds, d / "concepts.csv", d / "cells.csv")
    return d, ds


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def ingested(files):
    d, ds = files
    assert run("ingest", "--concepts", d / "concepts.csv", "--cells", d / "cells.csv", "--out", d / "ds.json") == 0
    return d / "ds.json"


def test_ingest_summary_and_determinism(files, ingested, capsys, tmp_path):
    d, ds = files
    assert norms.load_dataset(ingested) == ds
    assert run("ingest", "--concepts", d / "concepts.csv", "--cells", d / "cells.csv", "--out", tmp_path / "b.json") == 0
    assert "concepts=50" in capsys.readouterr().out
    assert (tmp_path / "b.json").read_bytes() == ingested.read_bytes()


def test_ingest_missing_file(files, capsys, tmp_path):
    d, _ = files
    code = run("ingest", "--concepts", d / "concepts.csv", "--cells", d / "nope.csv", "--out", tmp_path / "x.json")
    assert code == 1
    assert "nope.csv" in capsys.readouterr().err


def test_ingest_bad_row(tmp_path, capsys):
    (tmp_path / "c.csv").write_text("name,domain,category\ntiger,animal,m\ntiger,animal,m\n")
    (tmp_path / "f.csv").write_text("concept,feature,feature_domain,raters_yes,raters_total\n")
    assert run("ingest", "--concepts", tmp_path / "c.csv", "--cells", tmp_path / "f.csv", "--out", tmp_path / "o") == 1
    assert "c.csv:3" in capsys.readouterr().err


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        run("verify", "--bogus")
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_verify_identity_mock(ingested, tmp_path):
    out = tmp_path / "m.json"
    assert run("verify", "--dataset", ingested, "--out", out, "--scope", "all", "--mock", "p_miss=0", "p_fa=0") == 0
    machine = norms.load_matrix(out)
    human = norms.binarize_human(norms.load_dataset(ingested), 1.0)
    assert machine.cells.tolist() == human.cells.tolist()
    logrec = json.loads((tmp_path / "m.json.log.json").read_text())
    assert logrec["plan_size"] == 50 * 85 and logrec["oracle_calls"] == 50 * 85

    # rerun against the same cache: no oracle calls, identical matrix bytes
    before = out.read_bytes()
    assert run("verify", "--dataset", ingested, "--out", out, "--mock", "p_miss=0", "p_fa=0") == 0
    logrec = json.loads((tmp_path / "m.json.log.json").read_text())
    assert logrec["oracle_calls"] == 0 and logrec["cache_hits"] == 50 * 85
    assert out.read_bytes() == before


def test_verify_bad_mock_param(ingested, tmp_path):
    assert run("verify", "--dataset", ingested, "--out", tmp_path / "m.json", "--mock", "p_hit=1") == 2


def test_verify_unreachable_oracle(ingested, tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("ORACLE_URL", raising=False)
    code = run("verify", "--dataset", ingested, "--out", tmp_path / "m.json",
               "--oracle-url", "http://127.0.0.1:9/x", "--retries", "0")
    assert code == 1
    assert "unreachable" in capsys.readouterr().err


@pytest.fixture(scope="module")
def machine(ingested, tmp_path_factory):
    out = tmp_path_factory.mktemp("m") / "machine.json"
    assert run("verify", "--dataset", ingested, "--out", out, "--mock", "p_miss=0.3", "p_fa=0.1",
               "--seed", "3") == 0
    return out


def _csv(text):
    return list(csv.DictReader(text.splitlines()))


def test_score_single(ingested, machine, capsys):
    assert run("score", "--dataset", ingested, "--machine", machine, "--scope", "whole", "--tau", "1.0") == 0
    rows = _csv(capsys.readouterr().out)
    assert len(rows) == 1 and rows[0]["scope"] == "whole"
    assert {"hr", "far", "dprime"} <= set(rows[0])


def test_score_sweep_and_disagreements(ingested, machine, tmp_path):
    out = tmp_path / "s.csv"
    assert run("score", "--dataset", ingested, "--machine", machine, "--sweep", "--out", out,
               "--markdown", tmp_path / "s.md", "--disagreements", "20",
               "--disagreements-out", tmp_path / "d.md") == 0
    rows = _csv(out.read_text())
    assert [r["scope"] for r in rows] == ["animals"] * 4 + ["artifacts"] * 4
    assert [r["tau"] for r in rows[:4]] == ["0.25", "0.5", "0.75", "1"]
    md = (tmp_path / "d.md").read_text()
    tables = md.split("**")[1::2]
    assert len(tables) == 2
    body = [line for line in md.splitlines() if line.startswith("| ") and "says" not in line]
    assert len(body) == 40


def test_score_dimension_mismatch(ingested, tmp_path, toy):
    other = tmp_path / "other.json"
    norms.save_matrix(norms.binarize_human(toy), other)
    assert run("score", "--dataset", ingested, "--machine", other) == 1


def test_score_invalid_threshold_is_usage_error(ingested, machine):
    assert run("score", "--dataset", ingested, "--machine", machine, "--sweep", "--thresholds", "0,0.5") == 2


def test_triplets_end_to_end(ingested, machine, tmp_path, capsys):
    trips = tmp_path / "t.csv"
    assert run("triplets", "generate", "--dataset", ingested, "--n", "50", "--seed", "7", "--out", trips) == 0
    rows = _csv(trips.read_text())
    assert len(rows) == 300
    first = trips.read_bytes()
    assert run("triplets", "generate", "--dataset", ingested, "--n", "50", "--seed", "7", "--out", trips) == 0
    assert trips.read_bytes() == first

    votes = tmp_path / "v.csv"
    assert run("triplets", "synth-votes", "--dataset", ingested, "--triplets", trips, "--space", "human",
               "--out", votes) == 0
    out = tmp_path / "eval"
    assert run("triplets", "evaluate", "--dataset", ingested, "--triplets", trips, "--votes", votes,
               "--machine", machine, "--spaces", "human,machine,combined", "--out-dir", out) == 0
    human = _csv((out / "agreement_human.csv").read_text())
    assert [r["condition"] for r in human] == ["CC", "CD", "COD", "DD", "DOD", "ODOD"]
    for r in human:
        # ODOD votes tie in the human space, so nothing is scored there
        assert r["agreement"] == ("" if r["condition"] == "ODOD" else "1.000000")
    fig = _csv((out / "figure_long.csv").read_text())
    assert len(fig) == 18


def test_triplets_unknown_vote_id(ingested, tmp_path, capsys):
    trips = tmp_path / "t.csv"
    run("triplets", "generate", "--dataset", ingested, "--n", "2", "--seed", "1", "--out", trips)
    votes = tmp_path / "v.csv"
    votes.write_text("triplet_id,votes_a,votes_b\nghost_17,3,4\n")
    code = run("triplets", "evaluate", "--dataset", ingested, "--triplets", trips, "--votes", votes,
               "--spaces", "human", "--out-dir", tmp_path / "e")
    assert code == 1
    assert "ghost_17" in capsys.readouterr().err


def test_triplets_infeasible(tmp_path):
    ds = make_synthetic(n_animals=10, n_artifacts=0, n_animal_features=5, n_artifact_features=0)
    norms.dump_dataset(ds, tmp_path / "a.json")
    assert run("triplets", "generate", "--dataset", tmp_path / "a.json", "--n", "3", "--out", tmp_path / "t.csv") == 1


def test_report(ingested, machine, tmp_path):
    trips, votes = tmp_path / "t.csv", tmp_path / "v.csv"
    run("triplets", "generate", "--dataset", ingested, "--n", "20", "--seed", "2", "--out", trips)
    run("triplets", "synth-votes", "--dataset", ingested, "--triplets", trips, "--machine", machine,
        "--space", "combined", "--out", votes)
    out = tmp_path / "report"
    assert run("report", "--dataset", ingested, "--machine", machine, "--triplets", trips, "--votes", votes,
               "--out-dir", out) == 0
    for name in ("scores.csv", "sweep.md", "disagreements.md", "figure_long.csv", "summary.md"):
        assert (out / name).exists()
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert run("report", "--dataset", ingested, "--machine", machine, "--triplets", trips, "--votes", votes,
               "--out-dir", out) == 0
    assert first == {p.name: p.read_bytes() for p in out.iterdir()}


# ------------------------------------------------------------------ config

def test_config_precedence(tmp_path):
    cfg_file = tmp_path / "nv.conf"
    cfg_file.write_text("# comment\nseed = 11\nthresholds = 0.5, 1.0\noracle_url = http://file\n")
    env = {"ORACLE_URL": "http://env", "NORMVERIFY_SEED": "3", "NORMVERIFY_CONCURRENCY": "2"}
    cfg = resolve({"seed": 99, "oracle_url": None}, cfg_file, environ=env)
    assert cfg.seed == 99  # flag beats file and env
    assert cfg.oracle_url == "http://file"  # file beats env
    assert cfg.concurrency == 2  # env beats default
    assert cfg.thresholds == [0.5, 1.0]


def test_config_errors(tmp_path):
    (tmp_path / "bad.conf").write_text("colour = blue\n")
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "bad.conf")
    with pytest.raises(ConfigError):
        PipelineConfig(concurrency=0).validate()
    with pytest.raises(ConfigError):
        PipelineConfig(thresholds=[1.5]).validate()


def test_print_config(ingested, capsys, monkeypatch):
    monkeypatch.setenv("ORACLE_TOKEN", "hidden")
    assert run("verify", "--dataset", ingested, "--out", "unused.json", "--seed", "4", "--print-config") == 0
    out = capsys.readouterr().out
    assert "seed = 4" in out and "oracle_token = ***" in out and "hidden" not in out


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "normverify.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("ingest", "verify", "score", "triplets", "report"):
        assert cmd in res.stdout
