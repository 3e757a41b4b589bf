import hashlib
import json

import pytest

from leaddrift.cli import build_parser, main


def run(*argv):
    return main([str(a) for a in argv])


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("gen", "--minutes", 6000, "--seed", 4, "--out-trace", d / "tr.csv", "--out-annot", d / "an.json", "--quiet") == 0
    for h in (120, 60, 30):
        assert run("train", "--data", d / "tr.csv", "--annot", d / "an.json", "--horizon", h, "--epochs", 3,
                   "--seed", 4, "--out", d / f"m{h}.json", "--quiet") == 0
    return d


def test_gen_outputs(workdir):
    doc = json.loads((workdir / "an.json").read_text())
    assert doc["n_minutes"] == 6000 and doc["seed"] == 4
    assert len((workdir / "tr.csv").read_text().splitlines()) == 6001


def test_train_output_echoes_config(workdir):
    doc = json.loads((workdir / "m60.json").read_text())
    assert doc["version"] == 1 and doc["meta"]["H"] == 60
    assert doc["meta"]["config"]["epochs"] == 3 and len(doc["meta"]["loss_history"]) == 3


def test_tune_detect_explain_multi(workdir, capsys):
    d = workdir
    inputs = [d / "tr.csv", d / "an.json", d / "m60.json"]
    before = [digest(p) for p in inputs]
    assert run("tune", "--model", d / "m60.json", "--data", d / "tr.csv", "--annot", d / "an.json", "--out", d / "tau.json") == 0
    tau_doc = json.loads((d / "tau.json").read_text())
    assert {"tau", "f1", "precision", "recall", "version", "config"} <= set(tau_doc)

    assert run("detect", "--model", d / "m60.json", "--data", d / "tr.csv", "--tau", tau_doc["tau"],
               "--ema-window", 5, "--out", d / "alerts.json", "--quiet") == 0
    alerts = json.loads((d / "alerts.json").read_text())
    assert alerts["config"]["tau"] == tau_doc["tau"]
    assert alerts["alerts"] and set(alerts["alerts"][0]) == {"t", "S"}

    t = alerts["alerts"][0]["t"]
    assert run("explain", "--model", d / "m60.json", "--data", d / "tr.csv", "--t", t, "--out", d / "attr.json") == 0
    attr = json.loads((d / "attr.json").read_text())
    assert attr["t"] == t and len(attr["phi"]) == 7
    assert "risk" in capsys.readouterr().out

    models = ",".join(str(d / f"m{h}.json") for h in (120, 60, 30))
    assert run("multi", "--models", models, "--taus", "0.3,0.3,0.3", "--data", d / "tr.csv", "--out", d / "ttf.json") == 0
    ttf = json.loads((d / "ttf.json").read_text())
    assert ttf["horizons"] == [120, 60, 30] and len(ttf["timeline"]) == 6000
    assert [digest(p) for p in inputs] == before


def test_eval_baseline_compare(workdir, capsys):
    d = workdir
    common = ["--data", d / "tr.csv", "--annot", d / "an.json", "--epochs", 3, "--seed", 4, "--quiet"]
    assert run("eval", "--method", "lead", "--out", d / "lead.json", "--plot-csv", d / "lead.csv", *common) == 0
    assert run("baseline", "--method", "distance", "--out", d / "dist.json", *common) == 0
    rep = json.loads((d / "lead.json").read_text())
    assert rep["version"] == 1 and rep["config"]["seed"] == 4 and len(rep["folds"]) == 5
    assert (d / "lead.csv").read_text().startswith("method,")
    capsys.readouterr()
    assert run("compare", d / "lead.json", d / "dist.json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert {p["a"] for p in doc["pairs"]} == {"lead", "distance"}


def test_out_dir_prefixes_relative_paths(workdir, tmp_path):
    d = workdir
    assert run("tune", "--model", d / "m60.json", "--data", d / "tr.csv", "--annot", d / "an.json",
               "--out-dir", tmp_path, "--out", "nested/tau.json") == 0
    assert (tmp_path / "nested" / "tau.json").exists()


def test_sweep_command(tmp_path):
    assert run("sweep", "--sizes", "3000", "--methods", "lead", "--epochs", 2, "--out", tmp_path / "s.csv", "--quiet") == 0
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 2


@pytest.mark.parametrize(
    "argv, code",
    [
        (["gen", "--minutes", "100", "--out-trace", "x.csv", "--out-annot", "x.json"], 2),
        (["detect", "--model", "missing.json", "--data", "missing.csv", "--tau", "0.5", "--out", "a.json"], 3),
        (["sweep", "--sizes", "abc", "--out", "s.csv"], 2),
    ],
)
def test_error_exit_codes(argv, code, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: ")


def test_training_failure_exit_code(workdir, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    lines = (workdir / "tr.csv").read_text().splitlines()
    row = lines[5].split(",")
    row[1] = "nan"
    lines[5] = ",".join(row)
    bad.write_text("\n".join(lines) + "\n")
    code = run("train", "--data", bad, "--annot", workdir / "an.json", "--epochs", 1, "--out", tmp_path / "m.json")
    assert code in (3, 4)
    assert capsys.readouterr().err.startswith("error: ")


def test_tuning_without_failures_is_a_data_error(workdir, tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"n_minutes": 6000, "seed": 0, "episodes": [], "shortfall": 0}))
    assert run("tune", "--model", workdir / "m60.json", "--data", workdir / "tr.csv", "--annot", empty,
               "--out", tmp_path / "t.json") == 3


def test_help_lists_every_subcommand(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["--help"])
    out = capsys.readouterr().out
    for cmd in ("gen", "train", "tune", "detect", "explain", "multi", "baseline", "eval", "sweep", "compare", "reproduce"):
        assert cmd in out
