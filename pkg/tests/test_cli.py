import io
import json

import pytest

from markerhmm.cli import run
from markerhmm.config import parse_config
from markerhmm.ingest import load_dataset
from markerhmm.mixture import MixtureModel, Query, predict_state_sequence


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.setenv("MARKERHMM_OUTPUT_DIR", str(tmp_path))
    return tmp_path


def _generate(d, seed=42, subjects=None):
    argv = ["generate", "--seed", str(seed), "--out-data", str(d / "data.csv"), "--out-config", str(d / "model.ini")]
    if subjects:
        argv += ["--subjects", str(subjects)]
    assert run(argv) == 0
    return d / "data.csv", d / "model.ini"


def test_generate_then_evaluate(workdir):
    data, ini = _generate(workdir, subjects=60)
    out = workdir / "cv.json"
    status = run(["evaluate", "--config", str(ini), "--data", str(data), "--hidden", "diagnosis",
                  "--k", "10", "--seed", "7", "--out", str(out)])
    assert status == 0
    doc = json.loads(out.read_text())
    assert len(doc["per_fold_scores"]) == 10 and 0 < doc["mean"] <= 1
    manifest = json.loads((workdir / "evaluate.manifest.json").read_text())
    assert manifest["exit_status"] == 0 and manifest["seed"] == 7
    assert str(out) in manifest["outputs"]


def test_decode_matches_library(workdir):
    data, ini = _generate(workdir, subjects=40)
    model_path = workdir / "model.json"
    assert run(["build", "--config", str(ini), "--data", str(data), "--hidden", "diagnosis", "--out", str(model_path)]) == 0
    out = workdir / "decode.csv"
    assert run(["predict", "--model", str(model_path), "--mode", "decode", "--subject", "s07",
                "--data", str(data), "--out", str(out)]) == 0
    cli_states = [line.split(",")[1] for line in out.read_text().splitlines()[1:]]

    cfg = parse_config(ini.read_text())
    ds = load_dataset(str(data), cfg)
    model = MixtureModel.build(ds, "diagnosis")
    trails = ds.subjects["s07"]
    obs = {m: trails[m].states for m in model.channels}
    assert cli_states == list(predict_state_sequence(model, Query("diagnosis", obs)).states)


def test_predict_posteriors_and_future(workdir):
    data, ini = _generate(workdir, subjects=30)
    model_path = workdir / "model.json"
    run(["build", "--config", str(ini), "--data", str(data), "--hidden", "diagnosis", "--out", str(model_path)])
    obs = workdir / "obs.csv"
    obs.write_text("id,time,finemotor,mobility,neuropsych\nq,0,good,good,med\nq,1,med,med-good,med\n")
    for mode, rows in (("posteriors", 2), ("future", 5)):
        out = workdir / f"{mode}.csv"
        assert run(["predict", "--model", str(model_path), "--mode", mode, "--obs", str(obs),
                    "--steps", "5", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == rows + 1
        assert lines[0].split(",")[1:] == sorted(["good", "med-good", "med", "med-bad", "bad", "severe"])
        for line in lines[1:]:
            assert sum(float(v) for v in line.split(",")[1:]) == pytest.approx(1.0, abs=1e-9)


def test_export(workdir):
    data, ini = _generate(workdir, subjects=30)
    model_path = workdir / "model.json"
    run(["build", "--config", str(ini), "--data", str(data), "--hidden", "diagnosis", "--out", str(model_path)])
    out = workdir / "p.json"
    assert run(["export", "--model", str(model_path), "--marker", "mobility", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["transition"]) == 6


def test_check_missing_layer(workdir, capsys):
    ini = workdir / "bad.ini"
    ini.write_text("[general]\nid_column = id\ntime_column = t\n[mobility]\ndatatype = categorical\n")
    data = workdir / "d.csv"
    data.write_text("id,t,mobility\na,0,x\n")
    status = run(["check", "--config", str(ini), "--data", str(data)])
    assert status == 1
    assert "mobility" in capsys.readouterr().err
    manifest = json.loads((workdir / "check.manifest.json").read_text())
    assert manifest["exit_status"] == 1
    assert any("mobility" in e for e in manifest["error"])


def test_check_ok(workdir, capsys):
    data, ini = _generate(workdir, subjects=5)
    assert run(["check", "--config", str(ini), "--data", str(data)]) == 0
    assert json.loads(capsys.readouterr().out)["subjects"] == 5


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["evaluate", "--bogus"]])
def test_usage_errors(workdir, argv):
    assert run(argv) == 1
    assert list(workdir.glob("*.manifest.json"))


def test_runtime_error_exit_2(workdir):
    assert run(["export", "--model", str(workdir / "nope.json"), "--marker", "x"]) == 2
    manifest = json.loads((workdir / "export.manifest.json").read_text())
    assert manifest["error"]


def test_explicit_manifest_path(workdir):
    target = workdir / "sub" / "m.json"
    _generate(workdir, subjects=3)
    assert run(["--manifest", str(target), "generate", "--seed", "1", "--out-data", str(workdir / "x.csv"),
                "--out-config", str(workdir / "x.ini")]) == 0
    assert json.loads(target.read_text())["command"] == "generate"
