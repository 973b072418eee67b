import json
import subprocess
import sys

import pytest

from citl import cli
from citl.errors import NumericError

SMALL = {"c1": 4, "c2": 4, "H": 8, "H_ae": 16, "l1": 1e-3, "l2": 1e-3,
         "epochs": 3, "transfer_epochs": 3, "k_folds": 3}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "spec.json").write_text(json.dumps({"n_subjects_per_class": 6, "T": 60}))
    (d / "cfg.json").write_text(json.dumps(SMALL))
    assert cli.main(["synth", "--out", str(d / "data"), "--seed", "2", "--spec", str(d / "spec.json")]) == 0
    return d


def test_synth_layout(workdir):
    for c in ("cohort_a", "cohort_b"):
        lines = (workdir / "data" / c / "manifest.csv").read_text().splitlines()
        assert lines[0] == "subject_id,label,path" and len(lines) == 13


def test_dfc_summary(workdir, tmp_path):
    out = tmp_path / "dfc.csv"
    assert cli.main(["dfc", str(workdir / "data/cohort_a/manifest.csv"), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("subject_id,label,T,R,n_windows") and len(rows) == 13
    assert rows[1].split(",")[4] == "16"


def test_train_then_pseudo_label(workdir, tmp_path):
    ck = tmp_path / "ck.json"
    cfg = str(workdir / "cfg.json")
    assert cli.main(["train-transfer", str(workdir / "data/cohort_a/manifest.csv"),
                     "--out", str(ck), "--config", cfg, "--seed", "1"]) == 0
    doc = json.loads(ck.read_text())
    assert doc["schema_version"] == 1 and doc["source_tag"] == "cohort_a"
    assert doc["shapes"] == {"R": 30, "c1": 4, "c2": 4, "H": 8}
    out = tmp_path / "pl.csv"
    assert cli.main(["pseudo-label", str(ck), str(workdir / "data/cohort_b/manifest.csv"), "--out", str(out)]) == 0
    rows = [r.split(",") for r in out.read_text().splitlines()[1:]]
    assert len(rows) == 12 and all(int(r[2]) + int(r[3]) == 16 for r in rows)


@pytest.mark.parametrize("direction", ["a-to-b", "b-to-a"])
def test_run_and_report(workdir, tmp_path, direction, capsys):
    out = tmp_path / "run"
    assert cli.main(["run", "--data", str(workdir / "data"), "--direction", direction,
                     "--config", str(workdir / "cfg.json"), "--mode", "no_erg", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["config_echo"]["ablation_mode"] == "no_erg"
    assert rep["extra"]["direction"] == direction
    expect = "b" if direction == "a-to-b" else "a"
    assert rep["per_fold"][0]["test_ids"][0].startswith(expect)
    capsys.readouterr()
    assert cli.main(["report", str(out / "report.json")]) == 0
    assert "ACC:" in capsys.readouterr().out


def test_usage_errors_exit_1(workdir, tmp_path):
    with pytest.raises(SystemExit) as e:
        cli.main(["run", "--bogus"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        cli.main([])
    assert e.value.code == 1
    (tmp_path / "bad.json").write_text('{"nope": 1}')
    assert cli.main(["run", "--data", str(workdir / "data"), "--config", str(tmp_path / "bad.json"),
                     "--out", str(tmp_path / "o")]) == 1
    assert cli.main(["run", "--out", str(tmp_path / "o")]) == 1


def test_data_errors_exit_2(workdir, tmp_path):
    assert cli.main(["dfc", str(tmp_path / "missing.csv")]) == 2
    (tmp_path / "r.json").write_text('{"schema_version": 1, "per_fold": [')
    assert cli.main(["report", str(tmp_path / "r.json")]) == 2
    assert cli.main(["pseudo-label", str(tmp_path / "r.json"), str(workdir / "data/cohort_b/manifest.csv")]) == 2


def test_numeric_error_exit_3(workdir, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NumericError("loss became non-finite")

    monkeypatch.setattr(cli.pipeline, "run_citl", boom)
    assert cli.main(["run", "--data", str(workdir / "data"), "--out", str(tmp_path / "o")]) == 3


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "citl.cli", "report", str(tmp_path / "none.json")],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "data error" in r.stderr
