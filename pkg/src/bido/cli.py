"""Command-line entry point: ``bido {train,evaluate,attack,sweep,selftest}``.

Exit codes: 0 success, 1 a run or invariant failed, 2 bad config or input.
Every file written carries the config hash of the normalized config.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from .attack import AttackError, run_attack, save_reconstructions
from .data import ConsistencyError, FormatError
from .experiments import (
    SWEEP_COLUMNS,
    attack_config_from,
    bido_from_config,
    build_datasets,
    sort_sweep_rows,
    train_and_attack,
    train_config_from,
    write_rows,
)
from .model import load_checkpoint, mlp
from .training import BiDOConfig, TrainConfig, TrainingDiverged, train
from .training import ConfigError as TrainConfigError

log = logging.getLogger("bido")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _dump_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _out_dir(cfg, override):
    out = Path(override or cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_datasets(cfg):
    try:
        return build_datasets(cfg["dataset"], cfg["seed"])
    except (OSError, FormatError, ConsistencyError) as exc:
        raise UsageError(f"dataset: {exc}") from None


def _evaluator_train_config(cfg):
    return TrainConfig(batch_size=cfg["train"]["batch_size"], learning_rate=1e-3,
                       max_epochs=cfg["evaluator"]["max_epochs"], optimizer="adam",
                       seed=cfg["seed"] + 1)


def cmd_train(cfg, out, evaluator=False):
    h = cfgmod.config_hash(cfg)
    tr, va, te = _load_datasets(cfg)
    if evaluator:
        hidden, tcfg, bido = (cfg["evaluator"]["hidden"], _evaluator_train_config(cfg),
                              BiDOConfig.plain())
        name = "evaluator"
    else:
        hidden, tcfg, bido = (cfg["model"]["hidden"], train_config_from(cfg["train"], cfg["seed"]),
                              bido_from_config(cfg["bido"]))
        name = "target"
    model = mlp(tr.dim, tuple(hidden), tr.class_count, seed=tcfg.seed, tap_hidden=not evaluator)
    _dump_json(out / "config.json", {"config": cfg, "config_hash": h})
    report = train(model, tr, va, tcfg, bido, checkpoint_path=out / f"{name}.npz",
                   checkpoint_metadata={"config_hash": h, "role": name})
    report.to_csv(out / f"{name}_train_report.csv", config_hash=h)
    deterministic = [{k: v for k, v in r.items() if k != "seconds"} for r in report.records]
    summary = {"config_hash": h, "role": name, "epochs": len(report.records),
               "best_epoch": report.best_epoch, "val_acc": report.best_val_acc,
               "test_acc": model.accuracy(te) if len(te) else None, "records": deterministic}
    _dump_json(out / f"{name}_train_summary.json", summary)
    print(f"{name}: val_acc={report.best_val_acc:.4f} test_acc={summary['test_acc']} "
          f"-> {out / (name + '.npz')}")
    return EXIT_OK


def _load_model(path, what):
    try:
        return load_checkpoint(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load {what} checkpoint {path}: {exc}") from None


def cmd_evaluate(cfg, out, model_path):
    h = cfgmod.config_hash(cfg)
    _, _, te = _load_datasets(cfg)
    model, meta = _load_model(model_path, "model")
    if model.input_dim != te.dim or model.class_count != te.class_count:
        raise UsageError("checkpoint shape does not match the configured dataset")
    summary = {"config_hash": h, "checkpoint_config_hash": meta.get("config_hash"),
               "test_acc": model.accuracy(te), "test_size": len(te)}
    _dump_json(out / "evaluate_summary.json", summary)
    print(f"test_acc={summary['test_acc']:.4f}")
    return EXIT_OK


def cmd_attack(cfg, out, target_path, eval_path, dump=False):
    h = cfgmod.config_hash(cfg)
    target, _ = _load_model(target_path, "target")
    evaluator, _ = _load_model(eval_path, "evaluation")
    if target.class_count != evaluator.class_count:
        raise UsageError(f"class-count mismatch: target {target.class_count}, "
                         f"evaluator {evaluator.class_count}")
    if target.input_dim != evaluator.input_dim:
        raise UsageError(f"input-dimension mismatch: target {target.input_dim}, "
                         f"evaluator {evaluator.input_dim}")
    acfg = attack_config_from(cfg["attack"], cfg["seed"])
    report = run_attack(target, evaluator, acfg, keep_reconstructions=dump)
    report.write(out / "attack_report.csv", out / "attack_summary.json", config_hash=h)
    if dump:
        save_reconstructions(str(out / "reconstruction"), report.reconstructions)
    print(f"attack_acc={report.attack_acc:.4f} attack_acc5={report.attack_acc5:.4f} "
          f"std={report.std_acc:.4f}")
    return EXIT_OK


def _sweep_worker(job):
    (tr, va, te, hidden, tcfg, bido, acfg, evaluator, label, point_dir) = job
    row = dict(label)
    point_dir.mkdir(parents=True, exist_ok=True)
    try:
        row.update(train_and_attack(tr, va, te, hidden, tcfg, bido, acfg, evaluator))
        row["status"] = "ok"
    except (TrainingDiverged, FloatingPointError, AttackError) as exc:
        row["status"] = "failed"
        row["error"] = str(exc)
    _dump_json(point_dir / "point.json", row)
    return row


def _workers():
    raw = os.environ.get("BIDO_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"BIDO_WORKERS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("BIDO_WORKERS must be >= 1")
    return n


def cmd_sweep(cfg, out):
    h = cfgmod.config_hash(cfg)
    sweep, b = cfg["sweep"], cfg["bido"]
    if b["mode"] == "bilateral":
        if not sweep["grid"]:
            raise cfgmod.ConfigError("bilateral sweep needs sweep.grid", ["sweep.grid"])
        points = [{"mode": "bilateral", "measure": b["measure"], "lambda_x": float(lx),
                   "lambda_y": float(ly)} for lx, ly in sweep["grid"]]
    elif b["mode"] == "unilateral_xy":
        if not sweep["lams"]:
            raise cfgmod.ConfigError("unilateral sweep needs sweep.lams", ["sweep.lams"])
        points = [{"mode": "unilateral_xy", "measure": b["measure"], "lam": float(lam)}
                  for lam in sweep["lams"]]
    else:
        raise cfgmod.ConfigError("sweeps need bido.mode bilateral or unilateral_xy", ["bido.mode"])
    workers = _workers()
    seeds = sweep["seeds"] or [cfg["seed"]]
    tr, va, te = _load_datasets(cfg)

    if cfg["evaluator"]["checkpoint"]:
        evaluator, _ = _load_model(cfg["evaluator"]["checkpoint"], "evaluation")
    else:
        evaluator = mlp(tr.dim, tuple(cfg["evaluator"]["hidden"]), tr.class_count,
                        seed=cfg["seed"] + 1, tap_hidden=False)
        train(evaluator, tr, va, _evaluator_train_config(cfg), BiDOConfig.plain())

    base_t = train_config_from(cfg["train"], cfg["seed"])
    jobs = []
    for seed in seeds:
        for i, p in enumerate(points):
            bido = bido_from_config(p)
            label = {"seed": seed, "mode": p["mode"], "lambda_x": p.get("lambda_x", ""),
                     "lambda_y": p.get("lambda_y", ""), "lam": p.get("lam", "")}
            jobs.append((tr, va, te, tuple(cfg["model"]["hidden"]), replace(base_t, seed=seed),
                         bido, attack_config_from(cfg["attack"], seed), evaluator, label,
                         out / f"point_s{seed}_{i:03d}"))
    if workers == 1 or len(jobs) == 1:
        rows = [_sweep_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_worker, jobs))
    rows = sort_sweep_rows(rows)
    write_rows(out / "sweep.csv", rows, SWEEP_COLUMNS, config_hash=h)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"sweep: {len(rows)} points, {failed} failed -> {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_selftest():
    from .selftest import run_selftest

    ok, _ = run_selftest()
    return EXIT_OK if ok else EXIT_FAILED


def build_parser():
    p = argparse.ArgumentParser(prog="bido", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a target (or the evaluation classifier)")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="output directory (default: config output_dir)")
    t.add_argument("--evaluator", action="store_true",
                   help="train the evaluation classifier instead of the target")

    e = sub.add_parser("evaluate", help="test accuracy of a checkpoint")
    e.add_argument("--config", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--out")

    a = sub.add_parser("attack", help="invert a target and score it with an evaluator")
    a.add_argument("--config", required=True)
    a.add_argument("--target", required=True)
    a.add_argument("--eval", required=True, dest="eval_ckpt")
    a.add_argument("--out")
    a.add_argument("--dump-reconstructions", action="store_true")

    s = sub.add_parser("sweep", help="privacy-utility table over a lambda grid")
    s.add_argument("--config", required=True)
    s.add_argument("--out")

    sub.add_parser("selftest", help="oracle, gradient and permutation checks")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "selftest":
            return cmd_selftest()
        cfg = cfgmod.load(args.config)
        out = _out_dir(cfg, args.out)
        if args.command == "train":
            return cmd_train(cfg, out, evaluator=args.evaluator)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, out, args.model)
        if args.command == "attack":
            return cmd_attack(cfg, out, args.target, args.eval_ckpt, args.dump_reconstructions)
        return cmd_sweep(cfg, out)
    except cfgmod.ConfigError as exc:
        fields = f" [fields: {', '.join(exc.fields)}]" if exc.fields else ""
        print(f"config error: {exc}{fields}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, TrainConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, AttackError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
