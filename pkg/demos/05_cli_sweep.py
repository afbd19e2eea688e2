"""Driving the command line tool from a JSON config: train, attack, sweep.

Equivalent shell session::

    bido train  --config cfg.json
    bido train  --config cfg.json --evaluator
    bido attack --config cfg.json --target runs/target.npz --eval runs/evaluator.npz
    bido sweep  --config cfg.json

Run: python3 demos/05_cli_sweep.py [output-dir]
"""

import csv
import json
import sys
import tempfile
from pathlib import Path

from bido.cli import main

out = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="bido-demo-"))
out.mkdir(parents=True, exist_ok=True)
cfg = {
    "version": 1, "seed": 0, "output_dir": str(out),
    "dataset": {"kind": "synthetic_digits", "per_class": 60},
    "model": {"hidden": [128, 64]},
    "evaluator": {"hidden": [256, 128], "max_epochs": 15},
    "train": {"learning_rate": 0.001, "optimizer": "adam", "max_epochs": 10},
    "bido": {"mode": "bilateral", "measure": "hsic", "lambda_x": 2, "lambda_y": 20},
    "attack": {"steps": 60, "restarts": 1, "trials_per_class": 20, "repetitions": 2},
    "sweep": {"grid": [[0, 0], [2, 20], [10, 100]]},
}
path = out / "cfg.json"
path.write_text(json.dumps(cfg, indent=2))

main(["train", "--config", str(path)])
main(["train", "--config", str(path), "--evaluator"])
main(["attack", "--config", str(path), "--target", str(out / "target.npz"),
      "--eval", str(out / "evaluator.npz")])
print(json.loads((out / "attack_summary.json").read_text()))

cfg["evaluator"]["checkpoint"] = str(out / "evaluator.npz")
path.write_text(json.dumps(cfg, indent=2))
main(["sweep", "--config", str(path)])
with open(out / "sweep.csv") as f:
    for row in csv.DictReader(f):
        print(f"({row['lambda_x']}, {row['lambda_y']}): val {float(row['val_acc']):.3f} "
              f"attack {float(row['attack_acc']):.3f} [{row['status']}]")

print("\nA bad config exits with status 2 and names the field:")
bad = dict(cfg, bido={"mode": "bilateral", "lambda_x": 2})
(out / "bad.json").write_text(json.dumps(bad))
print("exit status", main(["train", "--config", str(out / "bad.json")]))
