import json
from pathlib import Path

import pytest

from stackgame import harness
from stackgame import io as sio
from stackgame.cli import main
from stackgame.data import SyntheticSpec, generate, save_csv
from stackgame.games import EquilibriumRecord


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("STACKGAME_OUT", str(tmp_path / "out"))
    save_csv(generate(SyntheticSpec("two_gaussians", n_samples=30, class_separation=0.4,
                                    noise=0.05, seed=1)), tmp_path / "d.csv")
    (tmp_path / "m.csv").write_text("0,-0.5\n-1,0\n")
    return tmp_path


def _only_dir(root: Path, exp: str) -> Path:
    dirs = sorted((root / "out" / exp).iterdir())
    assert len(dirs) == 1
    return dirs[0]


def test_matrix_example(workdir, capsys):
    assert main(["matrix", "--file", "m.csv", "--solve", "all"]) == 0
    out = json.loads((_only_dir(workdir, "matrix") / "result.json").read_text())
    assert out["minmax"] == 0.0 and out["maxmin"] == -0.5
    assert out["mixed"] == pytest.approx(-1 / 3, abs=1e-6)
    for how in ("minmax", "maxmin"):
        assert main(["matrix", "--file", "m.csv", "--solve", how]) == 0
    assert "-0.5" in capsys.readouterr().out


def test_manifest_and_determinism(workdir):
    assert main(["matrix", "--file", "m.csv", "--solve", "mixed"]) == 0
    d = _only_dir(workdir, "matrix")
    first = json.loads((d / "manifest.json").read_text())
    assert first["status"] == "ok"
    assert str(Path("m.csv")) in first["inputs"]
    assert set(first["versions"]) >= {"stackgame", "numpy", "python"}
    assert main(["matrix", "--file", "m.csv", "--solve", "mixed"]) == 0
    second = json.loads((d / "manifest.json").read_text())
    assert first["outputs_hash"] == second["outputs_hash"]


def test_missing_input_writes_error_manifest(workdir):
    assert main(["eval", "--model", "nope.json", "--data", "d.csv"]) != 0
    m = json.loads((_only_dir(workdir, "eval") / "manifest.json").read_text())
    assert m["status"] == "error" and m["error"]["type"] == "FileNotFoundError"


def test_train_attack_eval_pipeline(workdir, capsys):
    assert main(["--seed", "3", "train", "--data", "d.csv", "--eps", "0.05", "--loss", "ce",
                 "--epochs", "10", "--layer-dims", "2-6-2"]) == 0
    model = _only_dir(workdir, "train") / "model.json"
    assert sio.load_model(model).layer_dims == [2, 6, 2]
    assert main(["attack", "--model", str(model), "--data", "d.csv", "--eps", "0.05",
                 "--loss", "cw", "--steps", "10", "--restarts", "1", "--out", "b.json"]) == 0
    assert sio.load_bundle("b.json").epsilon == 0.05
    assert main(["attack", "--model", str(model), "--data", "d.csv", "--eps", "0.05",
                 "--loss", "adv01", "--exact", "--grid-step", "0.01"]) == 0
    capsys.readouterr()
    assert main(["eval", "--model", str(model), "--data", "d.csv", "--eps", "0.05",
                 "--method", "grid"]) == 0
    text = capsys.readouterr().out
    assert "adversarial_accuracy" in text and '"method": "grid_exact"' in text
    assert main(["retrain", "--model", str(model), "--budget-pct", "3", "--data", "d.csv",
                 "--eps", "0.05", "--epochs", "5"]) == 0
    assert main(["nuprobe", "--model", str(model), "--nu", "0.001", "--trials", "2",
                 "--data", "d.csv", "--eps", "0.02"]) == 0


def test_config_file_overrides(workdir):
    Path("cfg.json").write_text(json.dumps({"solve": "maxmin"}))
    assert main(["--config", "cfg.json", "matrix", "--file", "m.csv", "--solve", "mixed"]) == 0
    out = json.loads((_only_dir(workdir, "matrix") / "result.json").read_text())
    assert out["solve"] == "maxmin" and out["value"] == -0.5


def test_games_and_report(workdir, capsys):
    common = ["--data", "d.csv", "--eps", "0.05", "--loss", "ce", "--epochs", "5",
              "--layer-dims", "2-4-2"]
    assert main(["game", "g1", *common, "--out", "g1.json"]) == 0
    assert main(["game", "g3", *common, "--seeds", "0,1", "--out", "g3.json"]) == 0
    rec = sio.load_record("g3.json")
    assert rec.game == "G3" and rec.context["gap"] <= 1e-6
    assert main(["report", "g1.json", "g3.json", "--data", "d.csv"]) == 0
    d = _only_dir(workdir, "report")
    assert (d / "report.md").exists() and (d / "table.csv").exists()
    assert (d / "plot_fp_gap.csv").exists() and (d / "plot_eps_aa.csv").exists()
    with pytest.raises(SystemExit):
        main(["report"])


def test_report_value_chain():
    ctx = {"dataset_id": "d", "eps": 0.1, "loss": "cw"}
    recs = [EquilibriumRecord(g, None, None, v, [], ctx, True)
            for g, v in (("G1", 0.0), ("G3", -1 / 3), ("G2", -0.5))]
    md, table, _ = harness.report(recs)
    assert "PASS" in md and len(table) == 4
    md, table, _ = harness.report(recs[:1])
    assert len(table) == 2
    with pytest.raises(harness.UsageError):
        harness.report([])


def test_unknown_experiment_is_usage_error(tmp_path):
    res = harness.run({"experiment": "dance"}, root=tmp_path)
    assert res.status == 2 and res.manifest["status"] == "error"


def test_tradeoff_cli(workdir):
    assert main(["--threads", "2", "tradeoff", "--data", "d.csv", "--eps", "0.05",
                 "--lambda", "0.5", "--seeds", "0,1", "--epochs", "5", "--layer-dims", "2-4-2",
                 "--out", "t.json"]) == 0
    rep = json.loads(Path("t.json").read_text())
    assert rep["lam"] == 0.5 and rep["seeds"] == [0, 1]
