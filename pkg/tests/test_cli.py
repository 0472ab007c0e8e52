import json

import pytest
from click.testing import CliRunner

from conftest import FAST, SMALL_COHORT
from survaudit.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def _invoke(runner, *args):
    return runner.invoke(main, [str(a) for a in args])


def test_end_to_end_commands(runner, tmp_path):
    cfg = tmp_path / "cohort.json"
    cfg.write_text(json.dumps(SMALL_COHORT))
    v, s, c, m = (tmp_path / n for n in ("v.csv", "s.json", "c.csv", "m.json"))
    r = _invoke(runner, "generate", "--config", cfg, "--out-visits", v, "--out-schema", s)
    assert r.exit_code == 0, r.output
    assert json.loads(r.stdout)["n_subjects"] == 500
    r = _invoke(runner, "preprocess", "--visits", v, "--schema", s, "--out-cohort", c,
                "--out-manifest", m, "--bins", 5)
    assert r.exit_code == 0, r.output
    cohort = ["--cohort", c, "--manifest", m]
    model = tmp_path / "model.json"
    r = _invoke(runner, "train", *cohort, "--out", model, "--epochs", 2, "--hidden", "8",
                "--objective", "rpsrank", "--seed", 2)
    assert r.exit_code == 0, r.output
    assert json.loads(r.stdout)["epochs"] == 2
    r = _invoke(runner, "evaluate", *cohort, "--model", model)
    assert r.exit_code == 0 and 0 <= json.loads(r.stdout)["c_td"] <= 1
    r = _invoke(runner, "fairness", *cohort, "--model", model, "--attribute", "sex", "--bootstrap", 20)
    assert r.exit_code == 0 and "km_fair" in json.loads(r.stdout)["sex"]
    r = _invoke(runner, "importance", *cohort, "--model", model, "--reps", 2)
    assert r.exit_code == 0 and len(json.loads(r.stdout)["features"]) == 4
    r = _invoke(runner, "km", *cohort)
    assert r.exit_code == 0
    lines = r.stdout.splitlines()
    assert lines[0] == "bin,time,all" and len(lines) == 1 + 6


def test_report_with_overrides(runner, tmp_path):
    cpath = tmp_path / "cohort.json"
    cpath.write_text(json.dumps(SMALL_COHORT))
    rcfg = tmp_path / "run.json"
    rcfg.write_text(json.dumps({"cohort_config": str(cpath), "out_dir": str(tmp_path / "run"),
                                "attributes": ["sex"], **FAST}))
    r = _invoke(runner, "report", "--config", rcfg, "--set", 'objectives=["nll"]', "--set", "seeds=[1,2]")
    assert r.exit_code == 0, r.output
    assert json.loads(r.stdout)["nll"]["n_seeds"] == 2
    assert (tmp_path / "run" / "report" / "table.csv").exists()


def test_unknown_config_key_fails_with_stage(runner, tmp_path):
    rcfg = tmp_path / "run.json"
    rcfg.write_text(json.dumps({"cohort_config": "x.json", "epoch": 3}))
    r = _invoke(runner, "report", "--config", rcfg)
    assert r.exit_code == 1
    assert r.stderr.startswith("error [config]:")
    assert "epoch" in r.stderr


def test_missing_input_fails_with_stage(runner, tmp_path):
    r = _invoke(runner, "preprocess", "--visits", tmp_path / "no.csv", "--schema", tmp_path / "no.json",
                "--out-cohort", tmp_path / "c.csv", "--out-manifest", tmp_path / "m.json")
    assert r.exit_code == 1
    assert r.stderr.startswith("error [preprocess]:")


def test_bad_hidden_is_usage_error(runner, prepared, tmp_path):
    r = _invoke(runner, "train", "--cohort", prepared / "cohort.csv", "--manifest",
                prepared / "manifest.json", "--out", tmp_path / "m.json", "--hidden", "8,x")
    assert r.exit_code == 2


def test_bad_set_is_usage_error(runner, tmp_path):
    r = _invoke(runner, "report", "--config", tmp_path / "run.json", "--set", "noequals")
    assert r.exit_code == 2


def test_help_lists_subcommands(runner):
    r = _invoke(runner, "--help")
    for name in ("generate", "preprocess", "train", "evaluate", "fairness", "importance", "km",
                 "report", "ablate", "serve"):
        assert name in r.stdout
