"""Glue between configs, training and the attack: targets, evaluators, ablations, sweeps."""

import csv
import logging
from dataclasses import replace

import numpy as np

from .attack import AttackConfig, run_attack
from .data import load_mnist_idx, split, synthetic_blobs, synthetic_digits
from .dependency import DependencyMeasureConfig
from .model import mlp
from .training import BiDOConfig, TrainConfig, train

log = logging.getLogger(__name__)


def build_datasets(ds_cfg, seed):
    kind = ds_cfg["kind"]
    if kind == "mnist_idx":
        full = load_mnist_idx(ds_cfg["images"], ds_cfg["labels"], limit=ds_cfg.get("limit"))
    elif kind == "synthetic_blobs":
        full = synthetic_blobs(ds_cfg["classes"], ds_cfg["per_class"], ds_cfg["dim"],
                               ds_cfg["separation"], seed, ds_cfg["std"])
    elif kind == "synthetic_digits":
        full = synthetic_digits(ds_cfg["per_class"], ds_cfg["size"], seed)
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    return split(full, tuple(ds_cfg["split"]), seed)


def bido_from_config(b):
    mode = b["mode"]
    if mode == "plain":
        return BiDOConfig.plain()
    measure = DependencyMeasureConfig(b["measure"])
    if mode == "unilateral_xy":
        return BiDOConfig("unilateral_xy", measure, lam=float(b["lam"]))
    return BiDOConfig("bilateral", measure, float(b["lambda_x"]), float(b["lambda_y"]))


def train_config_from(t, seed):
    return TrainConfig(t["batch_size"], float(t["learning_rate"]), t["max_epochs"],
                       t["optimizer"], seed, t["eval_every"])


def attack_config_from(a, seed):
    return AttackConfig(a["steps"], float(a["step_size"]), a["restarts"], a["trials_per_class"],
                        tuple(a["box"]), seed, a["repetitions"], a["cosine_decay"],
                        a["normalize_grad"])


def train_evaluator(train_set, val_set, hidden=(1024, 512), seed=1, train_config=None):
    """Independent judge: wider network, different seed, plain cross-entropy."""
    train_config = train_config or TrainConfig(learning_rate=1e-3, max_epochs=15, optimizer="adam")
    model = mlp(train_set.dim, hidden, train_set.class_count, seed=seed, tap_hidden=False)
    train(model, train_set, val_set, replace(train_config, seed=seed), BiDOConfig.plain())
    return model


def train_and_attack(train_set, val_set, test_set, hidden, train_config, bido_config,
                     attack_config, evaluator):
    """Train one target and measure its privacy-utility point."""
    model = mlp(train_set.dim, hidden, train_set.class_count, seed=train_config.seed)
    report = train(model, train_set, val_set, train_config, bido_config)
    attack = run_attack(model, evaluator, attack_config)
    return {
        "val_acc": report.best_val_acc,
        "test_acc": model.accuracy(test_set),
        "attack_acc": attack.attack_acc,
        "attack_acc5": attack.attack_acc5,
        "std_acc": attack.std_acc,
        "std_acc5": attack.std_acc5,
        "dxz_sum": report.final_dxz_sum(),
    }


def ablation_run(train_set, val_set, test_set, variants, train_config, attack_config,
                 evaluator, hidden=(512, 256, 128), csv_path=None):
    """Train and attack one target per named BiDO variant with a shared seed.

    ``variants`` maps a name to a :class:`BiDOConfig`; typically the full
    objective plus copies with ``lambda_x = 0`` and ``lambda_y = 0``.
    """
    rows = []
    for name, cfg in variants.items():
        row = {"variant": name, "mode": cfg.mode, "lambda_x": cfg.lambda_x,
               "lambda_y": cfg.lambda_y}
        row.update(train_and_attack(train_set, val_set, test_set, hidden, train_config, cfg,
                                    attack_config, evaluator))
        log.info("ablation %s: %s", name, row)
        rows.append(row)
    if csv_path is not None:
        write_rows(csv_path, rows)
    return rows


def standard_ablation(lambda_x, lambda_y, measure="hsic"):
    m = DependencyMeasureConfig(measure)
    return {
        "full": BiDOConfig("bilateral", m, lambda_x, lambda_y),
        "no_dzy": BiDOConfig("bilateral", m, lambda_x, 0.0),
        "no_dxz": BiDOConfig("bilateral", m, 0.0, lambda_y),
    }


def dominates(a, b):
    """True if point ``a`` is at least as accurate and at most as leaky as ``b``."""
    return a["test_acc"] >= b["test_acc"] and a["attack_acc"] <= b["attack_acc"]


SWEEP_COLUMNS = ["seed", "mode", "lambda_x", "lambda_y", "lam", "status", "val_acc", "test_acc",
                 "attack_acc", "attack_acc5", "std_acc", "std_acc5", "dxz_sum"]


def write_rows(path, rows, columns=None, config_hash=None):
    columns = list(columns or rows[0].keys())
    if config_hash:
        columns.append("config_hash")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            vals = []
            for c in columns:
                v = config_hash if c == "config_hash" else r.get(c, "")
                if isinstance(v, (float, np.floating)):
                    v = repr(float(v))
                vals.append(v)
            w.writerow(vals)


def sort_sweep_rows(rows):
    """Sort by validation accuracy, failed points last."""
    return sorted(rows, key=lambda r: (r.get("status") != "ok",
                                       -(r.get("val_acc") if r.get("status") == "ok" else 0.0),
                                       r.get("seed", 0)))
