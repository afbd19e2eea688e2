import csv
import json
import statistics

import numpy as np
import pytest

from bido import config as cfgmod
from bido.attack import AttackConfig
from bido.cli import main
from bido.data import split, synthetic_digits
from bido.dependency import coco, hsic
from bido.experiments import train_and_attack
from bido.model import load_checkpoint
from bido.selftest import run_selftest
from bido.training import BiDOConfig, TrainConfig

from conftest import MNIST_IMAGES, MNIST_LABELS


def toy_config(out, **overrides):
    cfg = {
        "version": 1, "seed": 0, "output_dir": str(out),
        "dataset": {"kind": "synthetic_digits", "per_class": 30},
        "model": {"hidden": [32, 16]},
        "evaluator": {"hidden": [64, 32], "max_epochs": 10},
        "train": {"batch_size": 32, "learning_rate": 0.01, "optimizer": "adam", "max_epochs": 5},
        "bido": {"mode": "plain"},
        "attack": {"steps": 10, "restarts": 1, "trials_per_class": 100, "repetitions": 1},
    }
    for key, value in overrides.items():
        cfg[key] = {**cfg.get(key, {}), **value} if isinstance(value, dict) else value
    return cfg


def write_config(path, cfg):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_missing_lambda_y_is_config_error(tmp_path, capsys):
    cfg = toy_config(tmp_path, bido={"mode": "bilateral", "lambda_x": 2})
    code = main(["train", "--config", write_config(tmp_path / "c.json", cfg)])
    assert code == 2
    assert "bido.lambda_y" in capsys.readouterr().err


def test_unknown_field_rejected(tmp_path, capsys):
    cfg = toy_config(tmp_path, train={"lerning_rate": 0.1})
    assert main(["train", "--config", write_config(tmp_path / "c.json", cfg)]) == 2
    assert "train.lerning_rate" in capsys.readouterr().err


@pytest.mark.parametrize("bad, field", [
    ({"version": 2}, "version"),
    ({"seed": "x"}, "seed"),
    ({"dataset": {"kind": "cifar"}}, "dataset.kind"),
    ({"train": {"optimizer": "lbfgs"}}, "train.optimizer"),
    ({"bido": {"mode": "bilateral", "lambda_x": -1, "lambda_y": 1}}, "bido.lambda_x"),
    ({"attack": {"box": [1, 0]}}, "attack.box"),
])
def test_config_validation_names_field(tmp_path, bad, field):
    raw = toy_config(tmp_path)
    raw.update(bad)
    with pytest.raises(cfgmod.ConfigError) as info:
        cfgmod.normalize(raw)
    assert field in info.value.fields


def test_config_hash_changes_with_config(tmp_path):
    a = cfgmod.normalize(toy_config(tmp_path))
    b = cfgmod.normalize(toy_config(tmp_path, train={"max_epochs": 6}))
    assert cfgmod.config_hash(a) != cfgmod.config_hash(b)
    assert cfgmod.config_hash(a) == cfgmod.config_hash(cfgmod.normalize(toy_config(tmp_path)))
    assert len(cfgmod.config_hash(a)) == 16


def test_missing_data_file_is_usage_error(tmp_path):
    cfg = toy_config(tmp_path, dataset={"kind": "mnist_idx", "images": str(tmp_path / "no"),
                                        "labels": str(tmp_path / "no")})
    cfg["dataset"].pop("per_class")
    assert main(["train", "--config", write_config(tmp_path / "c.json", cfg)]) == 2


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = write_config(root / "c.json", toy_config(root / "out"))
    assert main(["train", "--config", cfg_path]) == 0
    assert main(["train", "--config", cfg_path, "--evaluator"]) == 0
    return root, cfg_path


def test_train_artifacts(trained):
    root, cfg_path = trained
    out = root / "out"
    h = cfgmod.config_hash(cfgmod.load(cfg_path))
    rows = read_csv(out / "target_train_report.csv")
    assert len(rows) == 5
    assert all(r["config_hash"] == h for r in rows)
    echo = json.loads((out / "config.json").read_text())
    assert echo["config_hash"] == h and echo["config"]["train"]["max_epochs"] == 5
    summary = json.loads((out / "target_train_summary.json").read_text())
    assert summary["config_hash"] == h and summary["epochs"] == 5
    _, meta = load_checkpoint(out / "target.npz")
    assert meta["config_hash"] == h and meta["role"] == "target"


def test_train_summary_deterministic(tmp_path, trained):
    root, cfg_path = trained
    first = (root / "out" / "target_train_summary.json").read_bytes()
    assert main(["train", "--config", cfg_path, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "target_train_summary.json").read_bytes() == first


def test_attack_outputs_and_determinism(tmp_path, trained):
    root, cfg_path = trained
    out = root / "out"
    args = ["attack", "--config", cfg_path, "--target", str(out / "target.npz"),
            "--eval", str(out / "evaluator.npz")]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "attack_summary.json").read_bytes()
    assert a == (tmp_path / "b" / "attack_summary.json").read_bytes()
    rows = read_csv(tmp_path / "a" / "attack_report.csv")
    assert len(rows) == 1000
    h = cfgmod.config_hash(cfgmod.load(cfg_path))
    assert json.loads(a)["config_hash"] == h and rows[0]["config_hash"] == h


def test_attack_class_mismatch_exit_2(tmp_path, trained, capsys):
    root, cfg_path = trained
    other = toy_config(tmp_path / "o", dataset={"kind": "synthetic_blobs", "classes": 3,
                                                "dim": 144})
    other["dataset"].pop("per_class")
    other["dataset"]["per_class"] = 20
    other_cfg = write_config(tmp_path / "o.json", other)
    assert main(["train", "--config", other_cfg]) == 0
    code = main(["attack", "--config", cfg_path, "--target", str(tmp_path / "o" / "target.npz"),
                 "--eval", str(root / "out" / "evaluator.npz"), "--out", str(tmp_path / "x")])
    assert code == 2
    assert "class-count mismatch" in capsys.readouterr().err


def test_attack_missing_checkpoint_exit_2(tmp_path, trained):
    _, cfg_path = trained
    assert main(["attack", "--config", cfg_path, "--target", str(tmp_path / "none.npz"),
                 "--eval", str(tmp_path / "none.npz"), "--out", str(tmp_path)]) == 2


def test_evaluate(tmp_path, trained):
    root, cfg_path = trained
    assert main(["evaluate", "--config", cfg_path, "--model", str(root / "out" / "target.npz"),
                 "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "evaluate_summary.json").read_text())
    assert 0 <= s["test_acc"] <= 1 and s["test_size"] == 30


def _sweep_config(root, trained, grid, seeds=None, **overrides):
    troot, _ = trained
    cfg = toy_config(root, bido={"mode": "bilateral", "lambda_x": 0, "lambda_y": 0},
                     evaluator={"checkpoint": str(troot / "out" / "evaluator.npz")},
                     sweep={"grid": grid, "seeds": seeds}, **overrides)
    return write_config(root / "s.json", cfg)


def test_sweep_zero_point_reproduces_plain(tmp_path, trained):
    troot, _ = trained
    path = _sweep_config(tmp_path, trained, [[0, 0]])
    assert main(["sweep", "--config", path]) == 0
    (row,) = read_csv(tmp_path / "sweep.csv")
    assert row["status"] == "ok"
    tr, va, te = split(synthetic_digits(30, seed=0), (0.8, 0.1, 0.1), seed=0)
    evaluator, _ = load_checkpoint(troot / "out" / "evaluator.npz")
    plain = train_and_attack(tr, va, te, (32, 16),
                             TrainConfig(32, 0.01, 5, "adam", 0), BiDOConfig.plain(),
                             AttackConfig(steps=10, restarts=1, trials_per_class=100,
                                          repetitions=1), evaluator)
    for key in ("val_acc", "test_acc", "attack_acc", "attack_acc5"):
        assert float(row[key]) == plain[key]


def test_sweep_isolates_failed_point(tmp_path, trained):
    # plain SGD lets a 1e308 weight blow the parameters up to inf within a few steps
    path = _sweep_config(tmp_path, trained, [[0, 0], [1e308, 1e308], [0.1, 1]],
                         train={"optimizer": "sgd", "learning_rate": 0.05})
    with np.errstate(all="ignore"):
        assert main(["sweep", "--config", path]) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert [r["status"] for r in rows] == ["ok", "ok", "failed"]
    ok = [float(r["val_acc"]) for r in rows[:2]]
    assert ok == sorted(ok, reverse=True)
    assert rows[2]["lambda_x"] == "1e+308"
    assert all(r["config_hash"] == rows[0]["config_hash"] for r in rows)
    assert len(list(tmp_path.glob("point_s0_*/point.json"))) == 3


def test_sweep_parallel_matches_serial(tmp_path, trained, monkeypatch):
    grid = [[0, 0], [0.5, 5]]
    serial = _sweep_config(tmp_path / "s", trained, grid)
    assert main(["sweep", "--config", serial]) == 0
    monkeypatch.setenv("BIDO_WORKERS", "2")
    par = _sweep_config(tmp_path / "p", trained, grid)
    assert main(["sweep", "--config", par]) == 0
    strip = lambda rows: [{k: v for k, v in r.items() if k != "config_hash"} for r in rows]
    assert strip(read_csv(tmp_path / "s" / "sweep.csv")) == \
        strip(read_csv(tmp_path / "p" / "sweep.csv"))


def test_bad_worker_count(tmp_path, trained, monkeypatch):
    monkeypatch.setenv("BIDO_WORKERS", "zero")
    assert main(["sweep", "--config", _sweep_config(tmp_path, trained, [[0, 0]])]) == 2


def test_sweep_needs_grid(tmp_path):
    cfg = toy_config(tmp_path, bido={"mode": "bilateral", "lambda_x": 1, "lambda_y": 1})
    assert main(["sweep", "--config", write_config(tmp_path / "c.json", cfg)]) == 2


@pytest.mark.slow
def test_sweep_attack_acc_non_increasing_along_ratio(tmp_path):
    cfg = toy_config(tmp_path, dataset={"per_class": 100},
                     model={"hidden": [128, 64]},
                     evaluator={"hidden": [256, 128], "max_epochs": 20},
                     train={"learning_rate": 0.001, "max_epochs": 15},
                     attack={"steps": 60, "trials_per_class": 30, "repetitions": 2},
                     bido={"mode": "bilateral", "lambda_x": 0, "lambda_y": 0},
                     sweep={"grid": [[0, 0], [2, 20], [10, 100]], "seeds": [0, 1, 2]})
    assert main(["sweep", "--config", write_config(tmp_path / "c.json", cfg)]) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    med = [statistics.median(float(r["attack_acc"]) for r in rows
                             if float(r["lambda_x"]) == lx) for lx in (0, 2, 10)]
    assert med[0] >= med[1] >= med[2]


@pytest.mark.slow
def test_mnist_bilateral_train_run(tmp_path):
    cfg = {"version": 1, "seed": 0, "output_dir": str(tmp_path),
           "dataset": {"kind": "mnist_idx", "images": str(MNIST_IMAGES),
                       "labels": str(MNIST_LABELS)},
           "train": {"optimizer": "adam", "learning_rate": 0.001, "max_epochs": 15},
           "bido": {"mode": "bilateral", "measure": "hsic", "lambda_x": 2, "lambda_y": 20}}
    assert main(["train", "--config", write_config(tmp_path / "c.json", cfg)]) == 0
    for name in ("target.npz", "target_train_report.csv", "config.json",
                 "target_train_summary.json"):
        assert (tmp_path / name).exists()
    rows = read_csv(tmp_path / "target_train_report.csv")
    cols = [c for c in rows[0] if c.startswith("dxz_")]
    med = [statistics.median(float(r[c]) for c in cols) for r in rows[-5:]]
    assert all(b <= a for a, b in zip(med, med[1:]))


def test_selftest_passes_and_is_deterministic(capsys):
    assert main(["selftest"]) == 0
    first = capsys.readouterr().out
    assert main(["selftest"]) == 0
    assert capsys.readouterr().out == first
    assert first.count("PASS") == 8


def test_selftest_catches_perturbed_hsic():
    lines = []

    def perturbed(K, L):
        v = hsic(K, L)
        return type(v)(v.value * (1 + 1e-3), v.measure, v.sample_count)

    ok, results = run_selftest(hsic_fn=perturbed, coco_fn=coco, emit=lines.append)
    assert not ok
    assert lines[-1] == "first failure: hsic-oracle"
    assert results[0].name == "hsic-oracle" and not results[0].passed
