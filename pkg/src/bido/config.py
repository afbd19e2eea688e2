"""JSON experiment configs: strict validation, defaults, and a provenance hash.

A config is a JSON object with ``"version": 1`` and these sections (all
optional except where noted)::

    seed, output_dir
    dataset   {"kind": "mnist_idx" | "synthetic_blobs" | "synthetic_digits", ...}
    model     {"hidden": [...]}
    evaluator {"hidden": [...], "max_epochs": ..., "checkpoint": path-or-null}
    train     {"batch_size", "learning_rate", "max_epochs", "optimizer", "eval_every"}
    bido      {"mode", "measure", "lambda_x", "lambda_y", "lam"}
    attack    {"steps", "step_size", "restarts", "trials_per_class", "box",
               "repetitions", "cosine_decay", "normalize_grad"}
    sweep     {"grid": [[lambda_x, lambda_y], ...] | "lams": [...], "seeds": [...]}

Unknown keys anywhere are rejected, so a typo in a lambda cannot silently
fall back to a default.
"""

import copy
import hashlib
import json
from pathlib import Path

SCHEMA_VERSION = 1
REQUIRED = object()


class ConfigError(ValueError):
    """Invalid experiment config; ``fields`` names the offending keys."""

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = list(fields)


DATASET_FIELDS = {
    "mnist_idx": {"kind": REQUIRED, "images": REQUIRED, "labels": REQUIRED, "limit": None,
                  "split": [0.8, 0.1, 0.1]},
    "synthetic_blobs": {"kind": REQUIRED, "classes": 2, "per_class": 100, "dim": 2,
                        "separation": 8.0, "std": 0.05, "split": [0.8, 0.1, 0.1]},
    "synthetic_digits": {"kind": REQUIRED, "per_class": 100, "size": 12,
                         "split": [0.8, 0.1, 0.1]},
}

SECTIONS = {
    "model": {"hidden": [512, 256, 128]},
    "evaluator": {"hidden": [1024, 512], "max_epochs": 15, "checkpoint": None},
    "train": {"batch_size": 64, "learning_rate": 0.05, "max_epochs": 20, "optimizer": "sgd",
              "eval_every": 1},
    "attack": {"steps": 500, "step_size": 0.01, "restarts": 5, "trials_per_class": 100,
               "box": [0.0, 1.0], "repetitions": 5, "cosine_decay": True,
               "normalize_grad": True},
    "sweep": {"grid": None, "lams": None, "seeds": None},
}

BIDO_FIELDS = {
    "bilateral": {"mode": REQUIRED, "measure": "hsic", "lambda_x": REQUIRED, "lambda_y": REQUIRED},
    "unilateral_xy": {"mode": REQUIRED, "measure": "coco", "lam": REQUIRED},
    "plain": {"mode": REQUIRED},
}

TOP_LEVEL = {"version", "seed", "output_dir", "dataset", "bido", *SECTIONS}


def _fill(section_name, given, spec):
    if not isinstance(given, dict):
        raise ConfigError(f"{section_name} must be an object", [section_name])
    unknown = sorted(set(given) - set(spec))
    if unknown:
        raise ConfigError(
            f"unknown field(s) in {section_name}: {', '.join(unknown)}",
            [f"{section_name}.{u}" for u in unknown],
        )
    missing = sorted(k for k, v in spec.items() if v is REQUIRED and k not in given)
    if missing:
        raise ConfigError(
            f"missing required field(s) in {section_name}: {', '.join(missing)}",
            [f"{section_name}.{m}" for m in missing],
        )
    out = {k: copy.deepcopy(v) for k, v in spec.items() if v is not REQUIRED}
    out.update(copy.deepcopy(given))
    return out


def _require(cond, message, field):
    if not cond:
        raise ConfigError(message, [field])


def normalize(raw):
    """Validate ``raw`` and return a fully populated config dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown top-level field(s): {', '.join(unknown)}", unknown)
    if raw.get("version") != SCHEMA_VERSION:
        raise ConfigError(f"version must be {SCHEMA_VERSION}", ["version"])
    cfg = {"version": SCHEMA_VERSION, "seed": raw.get("seed", 0),
           "output_dir": raw.get("output_dir", "runs")}
    _require(isinstance(cfg["seed"], int) and not isinstance(cfg["seed"], bool),
             "seed must be an integer", "seed")

    ds = raw.get("dataset")
    _require(isinstance(ds, dict) and ds.get("kind") in DATASET_FIELDS,
             f"dataset.kind must be one of {sorted(DATASET_FIELDS)}", "dataset.kind")
    cfg["dataset"] = _fill("dataset", ds, DATASET_FIELDS[ds["kind"]])
    fr = cfg["dataset"]["split"]
    _require(isinstance(fr, list) and len(fr) == 3 and abs(sum(fr) - 1) < 1e-9
             and all(f >= 0 for f in fr), "dataset.split must be three fractions summing to 1",
             "dataset.split")

    for name, spec in SECTIONS.items():
        cfg[name] = _fill(name, raw.get(name, {}), spec)

    bido = raw.get("bido", {"mode": "plain"})
    _require(isinstance(bido, dict) and bido.get("mode") in BIDO_FIELDS,
             f"bido.mode must be one of {sorted(BIDO_FIELDS)}", "bido.mode")
    cfg["bido"] = _fill("bido", bido, BIDO_FIELDS[bido["mode"]])
    b = cfg["bido"]
    if "measure" in b:
        _require(b["measure"] in ("coco", "hsic"), "bido.measure must be coco or hsic",
                 "bido.measure")
    for key in ("lambda_x", "lambda_y", "lam"):
        if key in b:
            _require(isinstance(b[key], (int, float)) and not isinstance(b[key], bool)
                     and b[key] >= 0, f"bido.{key} must be a nonnegative number", f"bido.{key}")

    t = cfg["train"]
    _require(isinstance(t["batch_size"], int) and t["batch_size"] >= 2,
             "train.batch_size must be an integer >= 2", "train.batch_size")
    _require(t["learning_rate"] > 0, "train.learning_rate must be positive", "train.learning_rate")
    _require(isinstance(t["max_epochs"], int) and t["max_epochs"] >= 1,
             "train.max_epochs must be a positive integer", "train.max_epochs")
    _require(t["optimizer"] in ("sgd", "adam"), "train.optimizer must be sgd or adam",
             "train.optimizer")
    a = cfg["attack"]
    for key in ("steps", "restarts", "trials_per_class", "repetitions"):
        _require(isinstance(a[key], int) and a[key] >= 1, f"attack.{key} must be >= 1",
                 f"attack.{key}")
    _require(a["step_size"] > 0, "attack.step_size must be positive", "attack.step_size")
    _require(len(a["box"]) == 2 and a["box"][0] < a["box"][1], "attack.box must be [lo, hi]",
             "attack.box")
    s = cfg["sweep"]
    if s["grid"] is not None:
        _require(isinstance(s["grid"], list) and len(s["grid"]) >= 1
                 and all(isinstance(p, list) and len(p) == 2 for p in s["grid"]),
                 "sweep.grid must be a non-empty list of [lambda_x, lambda_y] pairs", "sweep.grid")
    if s["lams"] is not None:
        _require(isinstance(s["lams"], list) and len(s["lams"]) >= 1,
                 "sweep.lams must be a non-empty list", "sweep.lams")
    return cfg


def load(path):
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return normalize(raw)


def config_hash(cfg):
    """Short SHA-256 of the canonical JSON form of a normalized config."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
