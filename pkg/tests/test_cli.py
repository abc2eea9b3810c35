import json

import pytest

from asaga.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NOCONV, EXIT_OK, main, parse_gamma, parse_grid
from asaga.metrics import read_csv

SYN = "n=200,d=30,nnz=4,seed=2"


def test_train_writes_traces_and_figures(tmp_path, capsys):
    out = tmp_path / "o"
    rc = main(["train", "--synthetic", SYN, "--algo", "asaga", "saga", "--p", "1", "--seeds", "0,1",
               "--epochs", "3", "--out", str(out)])
    assert rc == EXIT_OK
    for name in ["asaga_1_0.csv", "asaga_1_1.csv", "saga_1_0.csv", "train_epochs.png", "train_time.png",
                 "manifest.json"]:
        assert (out / name).exists()
    assert read_csv(out / "asaga_1_0.csv")[-1].record.ticket == 600
    man = json.loads((out / "manifest.json").read_text())
    assert man["algorithms"] == ["asaga", "saga"] and "fstar" in man["extra"]


def test_unreached_target_exit_code(tmp_path):
    rc = main(["train", "--synthetic", SYN, "--epochs", "0.5", "--target", "1e-14", "--out", str(tmp_path)])
    assert rc == EXIT_NOCONV


def test_speedup_and_overlap(tmp_path):
    rc = main(["speedup", "--synthetic", SYN, "--p", "1,2", "--epochs", "40", "--target", "1e-6",
               "--out", str(tmp_path)])
    assert rc == EXIT_OK
    assert (tmp_path / "speedup_asaga.csv").read_text().count("\n") == 3
    assert (tmp_path / "speedup_asaga.png").exists()
    rc = main(["overlap", "--synthetic", SYN, "--p", "1,2", "--epochs", "2", "--out", str(tmp_path)])
    assert rc == EXIT_OK and (tmp_path / "overlap.png").exists()


def test_gridsearch(tmp_path, capsys):
    rc = main(["gridsearch", "--synthetic", SYN, "--algo", "saga", "--grid", "0.1:1:3", "--epochs", "30",
               "--out", str(tmp_path)])
    assert rc == EXIT_OK
    assert (tmp_path / "gridsearch.csv").read_text().count("\n") == 4
    assert "best gamma" in capsys.readouterr().out


def test_bias_demo(tmp_path, capsys):
    assert main(["bias-demo", "--samples", "2000", "--out", str(tmp_path)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "P(i_0=1)=0.75" in text and (tmp_path / "bias_branch0.csv").exists()


@pytest.mark.parametrize("argv", [
    ["train", "--out", "x"],
    ["train", "--synthetic", "n=10", "--out", "x"],
    ["train", "--synthetic", SYN, "--p", "2", "--algo", "saga", "--out", "x"],
    ["train", "--synthetic", SYN, "--gamma", "fast", "--out", "x"],
    ["train", "--synthetic", SYN, "--p", "0", "--out", "x"],
])
def test_config_errors(tmp_path, argv, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_CONFIG


def test_data_errors(tmp_path):
    bad = tmp_path / "bad.svm"
    bad.write_text("1 1:1\n1 zz\n")
    assert main(["train", "--data", str(bad), "--out", str(tmp_path)]) == EXIT_DATA
    assert main(["train", "--data", str(tmp_path / "missing.svm"), "--out", str(tmp_path)]) == EXIT_DATA


def test_thread_cap(tmp_path, monkeypatch):
    monkeypatch.setenv("ASAGA_THREADS", "1")
    assert main(["train", "--synthetic", SYN, "--p", "4", "--epochs", "1", "--out", str(tmp_path)]) == EXIT_OK


def test_parsers():
    assert parse_gamma("0.5/L", 2.0) == 0.25 and parse_gamma("0.3", 2.0) == 0.3
    g = parse_grid("1:2:2", 4.0)
    assert list(g) == [0.25, 0.5]
