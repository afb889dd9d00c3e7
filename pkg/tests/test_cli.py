import numpy as np
import pytest

from conftest import MNIST_IMAGES, MNIST_LABELS
from sparse_dbm.cli import ExperimentConfig, run
from sparse_dbm.model import load_model
from sparse_dbm.tasks import read_pgm

SMALL = ["--set", f"train_images={MNIST_IMAGES}", "--set", f"train_labels={MNIST_LABELS}",
         "--set", "graph_nodes=900", "--set", "graph_degree=6", "--set", "per_class=2",
         "--set", "batch_size=5", "--set", "n_batches=2", "--set", "sweeps_per_image=2",
         "--set", "eval_every=1", "--set", "eval_sweeps=5", "--set", "train_eval_size=5",
         "--set", "test_eval_size=5"]


def test_validate_small_model(tmp_path, capsys):
    code = run(["validate", "--out", str(tmp_path), "--set", "validate_nodes=6",
                "--set", "validate_sweeps=200000"])
    assert code == 0
    assert "TVD" in capsys.readouterr().out
    assert (tmp_path / "validate.tsv").exists() and (tmp_path / "validate.cfg").exists()


def test_validate_chromatic(tmp_path):
    assert run(["validate", "--engine", "chromatic", "--workers", "1", "--out", str(tmp_path),
                "--set", "validate_nodes=6", "--set", "validate_sweeps=200000"]) == 0


def test_train_zero_epochs_writes_initial_checkpoint(tmp_path):
    assert run(["train", "--out", str(tmp_path), "--epochs", "0", *SMALL]) == 0
    assert (tmp_path / "checkpoint.pbm").exists()
    assert (tmp_path / "metrics.tsv").read_text().count("\n") == 1
    m = load_model(tmp_path / "checkpoint.pbm")
    assert m.graph.node_count == 900 and np.std(m.J) < 0.02


def test_train_then_inference_commands(tmp_path):
    out = str(tmp_path)
    assert run(["train", "--out", out, "--epochs", "1", *SMALL]) == 0
    assert run(["generate", "--out", out, "--class", "7", "--set", "n_samples=3",
                "--set", "beta_step=2.5", "--set", "sweeps_per_step=4"]) == 0
    grid = read_pgm(tmp_path / "generate_class7.pgm")
    assert grid.shape == (1 + 29, 3 * 29 + 1)
    assert run(["classify", "--out", out, *SMALL, "--set", "classify_count=4"]) == 0
    assert len((tmp_path / "predictions.tsv").read_text().splitlines()) == 5
    assert run(["complete", "--out", out, *SMALL, "--set", "beta_step=2.5", "--set", "sweeps_per_step=4"]) == 0
    assert (tmp_path / "complete_0.pgm").exists()


def test_effective_config_is_rerunnable(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["train", "--out", str(a), "--epochs", "1", *SMALL]) == 0
    cfg_text = (a / "train.cfg").read_text()
    (tmp_path / "again.cfg").write_text(cfg_text.replace(f"out={a}", f"out={b}"))
    assert run(["train", "--config", str(tmp_path / "again.cfg")]) == 0

    def strip_time(p):
        return [line.rsplit("\t", 1)[0] for line in p.read_text().splitlines()]

    assert strip_time(a / "metrics.tsv") == strip_time(b / "metrics.tsv")
    assert (a / "checkpoint.pbm").read_bytes() == (b / "checkpoint.pbm").read_bytes()


def test_config_errors(tmp_path, capsys):
    assert run(["validate", "--out", str(tmp_path), "--set", "nonsense=1"]) == 2
    err = capsys.readouterr().err.strip()
    assert err.count("\n") == 0 and "config" in err
    assert run(["validate", "--out", str(tmp_path), "--set", "validate_nodes=abc"]) == 2
    assert run(["frobnicate"]) == 2
    assert run(["train", "--out", str(tmp_path)]) == 2            # no data files
    assert run(["train", "--out", str(tmp_path), "--set", "momentum=1.5"]) == 2


def test_io_and_dimension_errors(tmp_path, capsys):
    assert run(["generate", "--out", str(tmp_path)]) == 3             # no checkpoint
    bad = tmp_path / "g.txt"
    bad.write_text("0 0\n")
    assert run(["train", "--out", str(tmp_path), "--graph", str(bad), *SMALL]) == 4
    assert run(["train", "--out", str(tmp_path), *SMALL, "--set", "n_visible=100"]) == 4


def test_workers_environment(monkeypatch, tmp_path):
    from sparse_dbm.cli import build_parser, resolve_config
    monkeypatch.setenv("SPARSE_DBM_WORKERS", "3")
    assert resolve_config(build_parser().parse_args(["bench"])).workers == 3
    assert resolve_config(build_parser().parse_args(["bench", "--workers", "1"])).workers == 1


def test_bench(tmp_path):
    assert run(["bench", "--out", str(tmp_path), "--engine", "chromatic", "--set", "bench_sizes=100,200",
                "--set", "bench_duration=0.2", "--set", "bench_repetitions=2", "--set", "graph_degree=4"]) == 0
    rows = (tmp_path / "throughput.tsv").read_text().splitlines()
    assert len(rows) == 3


def test_mix(tmp_path):
    assert run(["mix", "--out", str(tmp_path), *SMALL, "--epochs", "1", "--set", "cd_values=10"]) == 0
    rows = (tmp_path / "mixing.tsv").read_text().splitlines()
    assert rows[0].split("\t") == ["cd_sweeps", "epoch", "train_acc", "test_acc"] and len(rows) == 2


def test_experiment_config_round_trip():
    cfg = ExperimentConfig(epochs=7, precision="s{6}{3}", out="x")
    from sparse_dbm.trainer import parse_key_values
    assert ExperimentConfig.from_mapping(parse_key_values(cfg.to_text())) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_mapping({"epochs": "x"})
