import json

import numpy as np
import pytest

from lassoviz.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, run
from lassoviz.flowergen import tree_checksum
from lassoviz.selector import RelevanceMatrix


def test_usage_errors_exit_2(tmp_path, capsys):
    assert run([]) == EXIT_CONFIG
    assert run(["frobnicate"]) == EXIT_CONFIG
    assert run(["--out", str(tmp_path), "select", "--matrices", "x", "--model", "y", "--mu", "0"]) == EXIT_CONFIG
    assert "usage" in capsys.readouterr().err


def test_missing_data_exits_3(tmp_path):
    assert run(["--out", str(tmp_path), "train", "--dataset", str(tmp_path / "nope")]) == EXIT_DATA
    bad = tmp_path / "m.llnet"
    bad.write_bytes(b"garbage")
    assert run(["--out", str(tmp_path), "extract", "--dataset", str(tmp_path), "--model", str(bad)]) == EXIT_DATA


def test_non_finite_matrices_exit_4(tmp_path):
    from lassoviz.descriptor import layout_of
    from lassoviz.network import flower_net, save_model

    net = flower_net(2)
    save_model(net, tmp_path / "m.llnet")
    m = layout_of(net).size
    X = np.full((m, 3), 0.1)
    X[0, 0] = np.nan
    with open(tmp_path / "mat.txt", "w") as fh:
        fh.write(f"{m} 3 2\n")
        for row in X:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        fh.write("1 0 1\n0 1 0\n")
    assert run(["--out", str(tmp_path), "select", "--matrices", str(tmp_path / "mat.txt"),
                "--model", str(tmp_path / "m.llnet")]) == EXIT_NUMERIC


def test_out_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("LASSOVIZ_OUT", str(tmp_path / "env"))
    assert run(["--seed", "3", "gen-dataset", "--variant", "part-2c", "--profile", "mini"]) == EXIT_OK
    info = json.loads((tmp_path / "env" / "gen-dataset" / "run.json").read_text())
    assert info["seed"] == 3 and info["config"]["variant"] == "part-2c"


@pytest.mark.slow
def test_mini_pipeline_is_deterministic(tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        base = ["--seed", "7", "--out", str(out)]
        assert run(base + ["gen-dataset", "--variant", "single-6c", "--profile", "mini"]) == EXIT_OK
        ds = str(out / "gen-dataset" / "single-6c")
        assert run(base + ["train", "--dataset", ds, "--fold", "0", "--epochs", "3"]) == EXIT_OK
        model = str(out / "train" / "model.llnet")
        assert run(base + ["extract", "--dataset", ds, "--model", model, "--fold", "0"]) == EXIT_OK
        assert run(base + ["select", "--matrices", str(out / "extract" / "matrices.txt"),
                           "--model", model, "--mu", "10"]) == EXIT_OK
        wfile = out / "select" / "W_mu10.txt"
        W = RelevanceMatrix.load(wfile)
        assert np.all(np.abs(W.dense()).sum(axis=0) <= 10 + 1e-8)
        assert run(base + ["explain", "--model", model, "--weights", str(wfile), "--dataset", ds,
                           "--index", "0"]) == EXIT_OK
        assert run(base + ["eval-iou", "--dataset", ds, "--model", model, "--weights", str(wfile)]) == EXIT_OK
        tsvs = sorted((out / "eval-iou").glob("iou_*.tsv"))
        assert len(tsvs) == 3
        assert run(base + ["report", "--results", str(out / "eval-iou")]) == EXIT_OK
        outs.append((tree_checksum(ds), wfile.read_bytes(), [t.read_bytes() for t in tsvs]))
    assert outs[0] == outs[1]
