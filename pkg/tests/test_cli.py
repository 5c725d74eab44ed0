import csv
import json

import numpy as np
import pytest

from ranksim.cli import main
from ranksim.experiment import OUTPUT_ROOT_ENV

TINY_DATA = {"n_train": 300, "n_val_per_bin": 1, "n_test_per_bin": 2}


@pytest.fixture
def root(monkeypatch, tmp_path):
    out = tmp_path / "out"
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(out))
    return out


def call(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_run_under_env_root(capsys, root, tmp_path):
    cfg = write_json(tmp_path / "c.json", {"dataset": TINY_DATA, "training": {"epochs": 2}})
    code, out, err = call(capsys, "run", "--config", cfg, "--ranksim", "--gamma", "5", "--name", "demo")
    assert code == 0 and err == ""
    summary = json.loads(out)
    assert summary["status"] == "ok"
    assert summary["output_dir"].startswith(str(root))
    saved = json.loads((root / summary["output_dir"].split("/")[-1] / "config.json").read_text())
    assert saved["ranksim"]["gamma"] == 5.0 and saved["name"] == "demo"
    assert "all" in summary["test_mae"]


def test_run_explicit_output_dir_and_determinism(capsys, root, tmp_path):
    cfg = write_json(tmp_path / "c.json", {"dataset": TINY_DATA, "training": {"epochs": 2}, "ranksim": {}})
    assert call(capsys, "run", "--config", cfg, "--output-dir", "a")[0] == 0
    assert call(capsys, "run", "--config", cfg, "--output-dir", "b")[0] == 0
    assert (root / "a" / "metrics.json").read_text() == (root / "b" / "metrics.json").read_text()


def test_run_gamma_without_ranksim_is_usage_error(capsys, root):
    code, out, err = call(capsys, "run", "--no-ranksim", "--gamma", "1")
    assert code == 2 and out == ""
    doc = json.loads(err)
    assert doc["error"] == "invalid_input" and "--gamma" in doc["message"]


def test_bad_config_reports_json_error(capsys, root, tmp_path):
    cfg = write_json(tmp_path / "c.json", {"trainign": {}})
    code, _, err = call(capsys, "run", "--config", cfg)
    assert code == 2 and "trainign" in json.loads(err)["message"]
    (tmp_path / "broken.json").write_text("{not json")
    code, _, err = call(capsys, "run", "--config", str(tmp_path / "broken.json"))
    assert code == 2 and "invalid JSON" in json.loads(err)["message"]
    code, _, err = call(capsys, "run", "--config", str(tmp_path / "missing.json"))
    assert code == 2 and json.loads(err)["error"] == "io"


def test_unknown_subcommand_and_bad_flag(capsys):
    code, _, err = call(capsys, "train")
    assert code == 2 and json.loads(err)["error"] == "usage"
    code, _, err = call(capsys, "run", "--epochs", "many")
    assert code == 2 and json.loads(err)["error"] == "usage"


def test_divergent_run_exits_one(capsys, root, monkeypatch, tmp_path):
    import ranksim.estimator as est_mod

    monkeypatch.setattr(est_mod, "regression_loss", lambda p, y, w, k: (float("nan"), np.zeros_like(p)))
    cfg = write_json(tmp_path / "c.json", {"dataset": TINY_DATA, "training": {"epochs": 2}})
    code, out, err = call(capsys, "run", "--config", cfg)
    assert code == 1 and out == ""
    doc = json.loads(err)
    assert doc["error"] == "diverged" and "output_dir" in doc


def test_sweep(capsys, root, tmp_path):
    grid = {
        "base": {"dataset": TINY_DATA, "training": {"epochs": 1}, "ranksim": {}},
        "grid": {"ranksim.gamma": [0.01, 1, 100]},
    }
    cfg = write_json(tmp_path / "g.json", grid)
    code, out, _ = call(capsys, "sweep", "--config", cfg, "--name", "gam")
    assert code == 0
    summary = json.loads(out)
    assert summary["runs"] == 3 and summary["failed"] == []
    rows = list(csv.DictReader(open(root / "gam" / "summary.csv")))
    assert len(rows) == 3 and all(r["status"] == "ok" for r in rows)


def test_sweep_partial_failure(capsys, root, tmp_path):
    cfg = write_json(tmp_path / "l.json", [{"dataset": TINY_DATA, "training": {"epochs": 1}}, {"bogus": 1}])
    code, out, _ = call(capsys, "sweep", "--config", cfg)
    summary = json.loads(out)
    assert code == 0 and summary["status"] == "partial" and len(summary["failed"]) == 1
    assert (root / "l" / "summary.csv").exists()


def test_gen_data_and_rank_matrices(capsys, root, tmp_path):
    code, out, _ = call(capsys, "gen-data", "--seed", "3", "--n-train", "400", "--zero-shot-bins", "40-44")
    assert code == 0
    gen = json.loads(out)
    assert gen["n_train"] == 400 and gen["bins_per_region"]["zero"] >= 5
    header = open(gen["dataset"]).readline().strip().split(",")
    assert header[-2:] == ["y", "split"]
    spec = json.loads(open(gen["spec"]).read())
    assert spec["zero_shot_bins"] == [40, 41, 42, 43, 44]

    cfg = write_json(
        tmp_path / "c.json",
        {"dataset_path": {"csv": gen["dataset"], "spec": gen["spec"]}, "training": {"epochs": 1}, "output_dir": "m"},
    )
    assert call(capsys, "run", "--config", cfg)[0] == 0
    code, out, _ = call(
        capsys,
        "rank-matrices",
        "--checkpoint",
        str(root / "m" / "best.ckpt.json"),
        "--data",
        gen["dataset"],
        "--spec",
        gen["spec"],
        "--batch-size",
        "16",
        "--out",
        str(tmp_path / "rm"),
    )
    assert code == 0
    res = json.loads(out)
    mat = np.loadtxt(res["label_matrix"], delimiter=",")
    assert mat.shape == (16, 16) and res["batch_count"] > 0


def test_rank_matrices_input_mismatch(capsys, root, tmp_path):
    _, out, _ = call(capsys, "gen-data", "--n-train", "200", "--out", str(tmp_path / "d"))
    gen = json.loads(out)
    cfg = write_json(tmp_path / "c.json", {"dataset": {**TINY_DATA, "input_dim": 4}, "training": {"epochs": 1}, "output_dir": "x"})
    assert call(capsys, "run", "--config", cfg)[0] == 0
    code, _, err = call(
        capsys,
        "rank-matrices",
        "--checkpoint",
        str(root / "x" / "final.ckpt.json"),
        "--data",
        gen["dataset"],
        "--spec",
        gen["spec"],
    )
    assert code == 2 and "expects 4 inputs" in json.loads(err)["message"]
