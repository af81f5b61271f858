import json

import numpy as np
import pytest

from splitreg.cli import main
from splitreg.simulate import SimConfig, generate
from splitreg.tabular import Dataset, write_csv

CONFIG = """
seed = 11

[schema]
outcome = "Y"
treatment = "T"
outcome_kind = "binary"
higher_is_better = true
names_influencing_treatment = ["L"]
names_influencing_rule = ["X", "G"]

[split]
fractions = [0.5, 0.25, 0.25]

[propensity]
link = "logit"

[rule]
link = "logit"

[evaluate]
bootstrap_replicates = 40

[[compare.candidates]]
label = "logistic/logistic"
propensity = { link = "logit" }
rule = { link = "logit" }

[[compare.candidates]]
label = "ridge/lasso"
propensity = { link = "logit", penalty = "ridge", lambda = 0.01 }
rule = { link = "logit", penalty = "lasso", lambda = "cv" }

[simulate]
sizes = [50, 100]
replications = 3
n_eval = 500
benchmark_rows = 5000
"""


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("SPLITREG_SEED", raising=False)
    write_csv(generate(SimConfig(), 1200, seed=3), tmp_path / "data.csv")
    (tmp_path / "run.toml").write_text(CONFIG)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def pipeline(ws, tag, threads):
    """split -> build -> compare -> evaluate, outputs suffixed with ``tag``."""
    c = ws / "run.toml"
    out = ws / tag
    assert run("split", "-c", c, "--input", ws / "data.csv", "--output-dir", out, "--threads", threads) == 0
    dev, val, ev = (out / f"{n}.csv" for n in ("development", "validation", "evaluation"))
    assert run("build", "-c", c, "--data", dev, "-o", out / "rule.json", "--threads", threads) == 0
    assert run("compare", "-c", c, "--dev", dev, "--val", val, "-o", out / "validation_report.json",
               "--threads", threads) == 0
    assert run("evaluate", "-c", c, "--rule", out / "rule.json", "--data", ev, "--manifest",
               out / "manifest.json", "-o", out / "evaluation.json", "--threads", threads) == 0
    assert run("evaluate", "-c", c, "--rule", out / "validation_report.json", "--data", ev,
               "-o", out / "evaluation_selected.json", "--threads", threads) == 0
    return out


def test_split_happy_path(workspace):
    out = pipeline(workspace, "a", 1)
    manifest = json.loads((out / "manifest.json").read_text())
    rows = [set(p["rows"]) for p in manifest["parts"]]
    assert [len(r) for r in rows] == [600, 300, 300]
    assert not (rows[0] & rows[1] or rows[0] & rows[2] or rows[1] & rows[2])
    assert manifest["schema_version"] == 1 and manifest["seed"] == 11


def test_reports_embed_resolved_config(workspace):
    out = pipeline(workspace, "a", 1)
    rule = json.loads((out / "rule.json").read_text())
    assert rule["config"]["rule"]["link"] == "logit"
    assert rule["config"]["schema"]["names_influencing_rule"] == ["X", "G"]
    ev = json.loads((out / "evaluation.json").read_text())
    assert set(ev["evaluation"]) >= {"positives", "negatives", "ate_in_positives", "ate_in_negatives", "abr"}
    assert ev["evaluation"]["bootstrap"]["replicates"] == 40
    report = json.loads((out / "validation_report.json").read_text())
    labels = {e["label"] for e in report["ranking"]}
    assert labels == {"logistic/logistic", "ridge/lasso", "treat-all", "treat-none"}


def test_byte_identical_reruns_across_threads(workspace):
    a, b = pipeline(workspace, "a", 1), pipeline(workspace, "b", 8)
    for name in ("manifest.json", "rule.json", "validation_report.json", "evaluation.json",
                 "evaluation_selected.json", "development.csv"):
        left = (a / name).read_text().replace(str(a), "<out>")
        right = (b / name).read_text().replace(str(b), "<out>")
        assert left == right, name


def test_simulate_byte_identical(workspace):
    c = workspace / "run.toml"
    assert run("simulate", "-c", c, "-o", workspace / "s1", "--threads", 1) == 0
    assert run("simulate", "-c", c, "-o", workspace / "s8", "--threads", 8) == 0
    assert (workspace / "s1.json").read_bytes() == (workspace / "s8.json").read_bytes()
    assert (workspace / "s1.csv").read_bytes() == (workspace / "s8.csv").read_bytes()
    header = (workspace / "s1.csv").read_text().splitlines()[0]
    assert header == "rule,50,100"


def test_missing_rule_inputs_exit_1(workspace, capsys):
    out = pipeline(workspace, "a", 1)
    d = generate(SimConfig(), 50, seed=4)
    write_csv(Dataset({c: d[c] for c in ("X", "L", "T", "Y")}, "Y", "T", outcome_kind="binary"),
              workspace / "no_g.csv")
    code = run("evaluate", "-c", workspace / "run.toml", "--rule", out / "rule.json",
               "--data", workspace / "no_g.csv", "-o", workspace / "x.json")
    assert code == 1
    assert "G" in capsys.readouterr().err.split("missing from evaluation data:")[1]
    assert not (workspace / "x.json").exists()


def test_manifest_rejects_overlap(workspace, capsys):
    out = pipeline(workspace, "a", 1)
    code = run("evaluate", "-c", workspace / "run.toml", "--rule", out / "rule.json",
               "--data", out / "development.csv", "--manifest", out / "manifest.json")
    assert code == 1
    assert "overlap" in capsys.readouterr().err


def test_unknown_flag_exit_1(workspace, capsys):
    assert run("build", "--bogus") == 1
    assert "usage" in capsys.readouterr().err


def test_missing_config_section(workspace, tmp_path):
    (tmp_path / "bad.toml").write_text("[schemaa]\n")
    assert run("build", "-c", tmp_path / "bad.toml") == 1


def test_numerical_failure_exit_2(workspace, capsys):
    d = generate(SimConfig(), 400, seed=5)
    sep = Dataset({**{c: d[c] for c in ("X", "L", "G", "T")}, "Y": (d["X"] > 1).astype(float)},
                  "Y", "T", outcome_kind="binary")
    write_csv(sep, workspace / "sep.csv")
    assert run("build", "-c", workspace / "run.toml", "--data", workspace / "sep.csv") == 2
    assert "arm T=" in capsys.readouterr().err


def test_bad_treatment_value_exit_1(workspace, capsys):
    (workspace / "bad.csv").write_text("X,L,G,T,Y\n0.5,0,0.1,2,1\n1.5,1,0.2,0,0\n")
    assert run("build", "-c", workspace / "run.toml", "--data", workspace / "bad.csv") == 1
    assert "0/1" in capsys.readouterr().err


def test_seed_environment_variable(workspace, monkeypatch):
    cfg = workspace / "noseed.toml"
    cfg.write_text(CONFIG.replace("seed = 11\n", ""))
    monkeypatch.setenv("SPLITREG_SEED", "77")
    assert run("split", "-c", cfg, "--input", workspace / "data.csv", "--output-dir", workspace / "e") == 0
    assert json.loads((workspace / "e" / "manifest.json").read_text())["seed"] == 77
    assert run("split", "-c", cfg, "--input", workspace / "data.csv", "--output-dir", workspace / "f",
               "--seed", 5) == 0
    assert json.loads((workspace / "f" / "manifest.json").read_text())["seed"] == 5


def test_help_exit_0(capsys):
    assert run("--help") == 0
