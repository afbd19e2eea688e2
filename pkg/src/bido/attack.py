"""White-box model inversion by projected gradient ascent on ``log f_i(x)``.

Each attacked class gets ``trials_per_class`` reconstructions. A trial runs
``restarts`` independent chains from uniform random starts inside the box and
keeps the chain with the highest final log-confidence. An independently
trained evaluation classifier then judges whether reconstructions look like
the attacked class (top-1 and top-5 hits).
"""

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List

import numpy as np

from .model import backward, load_checkpoint, log_softmax

log = logging.getLogger(__name__)


class AttackError(RuntimeError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    steps: int = 500
    step_size: float = 0.01
    restarts: int = 5
    trials_per_class: int = 100
    box: tuple = (0.0, 1.0)
    seed: int = 0
    repetitions: int = 5
    cosine_decay: bool = True
    normalize_grad: bool = True

    def __post_init__(self):
        if self.steps < 1 or self.restarts < 1 or self.trials_per_class < 1 or self.repetitions < 1:
            raise ValueError("steps, restarts, trials_per_class and repetitions must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        lo, hi = self.box
        if not lo < hi:
            raise ValueError(f"empty box {self.box}")


def _chain_start(config, class_index, trial, restart, dim, reseed=0, repetition=0):
    ss = np.random.SeedSequence([config.seed, repetition, class_index, trial, restart, reseed])
    lo, hi = config.box
    return np.random.default_rng(ss).uniform(lo, hi, size=dim)


def _step_sizes(config):
    t = np.arange(config.steps)
    if not config.cosine_decay:
        return np.full(config.steps, config.step_size)
    return config.step_size * 0.5 * (1.0 + np.cos(np.pi * t / config.steps))


def log_confidence_and_grad(model, x, class_index):
    """``log f_i(x)`` for each row of ``x`` and its gradient w.r.t. ``x``."""
    trace = model.forward(x)
    logp = log_softmax(trace.logits)
    onehot = np.zeros_like(trace.probs)
    onehot[:, class_index] = 1.0
    # d log p_i / d logits = e_i - p
    _, gx = backward(model, trace, grad_logits=onehot - trace.probs)
    return logp[:, class_index], gx


def invert_class(model, class_index, config, repetition=0, return_confidence=False):
    """Reconstruct ``trials_per_class`` inputs for one class.

    Returns an array ``(trials_per_class, input_dim)``; with
    ``return_confidence`` also the final ``f_i(x)`` of every reconstruction.
    """
    k, d = model.class_count, model.input_dim
    if not 0 <= class_index < k:
        raise ValueError(f"class_index {class_index} outside 0..{k - 1}")
    lo, hi = config.box
    T, R = config.trials_per_class, config.restarts
    starts = [(t, r) for t in range(T) for r in range(R)]
    x = np.stack([_chain_start(config, class_index, t, r, d, repetition=repetition)
                  for t, r in starts])
    reseeds = np.zeros(len(starts), dtype=int)
    for eta in _step_sizes(config):
        _, g = log_confidence_and_grad(model, x, class_index)
        bad = ~np.all(np.isfinite(g), axis=1)
        for c in np.flatnonzero(bad):
            reseeds[c] += 1
            t, r = starts[c]
            if reseeds[c] > 3:
                raise AttackError(
                    f"class {class_index} trial {t} restart {r}: non-finite gradient after 3 re-seeds"
                )
            x[c] = _chain_start(config, class_index, t, r, d, reseeds[c], repetition)
            g[c] = 0.0
        if config.normalize_grad:
            norms = np.linalg.norm(g, axis=1, keepdims=True)
            g = np.divide(g, norms, out=np.zeros_like(g), where=norms > 0) * np.sqrt(d)
        x = np.clip(x + eta * g, lo, hi)
    final, _ = log_confidence_and_grad(model, x, class_index)
    final = final.reshape(T, R)
    best = np.argmax(final, axis=1)
    recon = x.reshape(T, R, d)[np.arange(T), best]
    if return_confidence:
        return recon, np.exp(final[np.arange(T), best])
    return recon


@dataclass
class AttackReport:
    attack_acc: float
    attack_acc5: float
    std_acc: float
    std_acc5: float
    per_class_acc: Dict[int, float]
    repetition_acc: List[float]
    repetition_acc5: List[float]
    rows: List[dict] = field(default_factory=list)
    reconstructions: Dict[int, np.ndarray] = field(default_factory=dict)

    def summary(self):
        return {"attack_acc": self.attack_acc, "attack_acc5": self.attack_acc5,
                "std_acc": self.std_acc, "std_acc5": self.std_acc5}

    def write(self, csv_path, json_path, config_hash=None):
        cols = ["repetition", "class", "trial", "final_confidence", "eval_top1", "eval_top5_hit"]
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(cols + (["config_hash"] if config_hash else []))
            for r in self.rows:
                vals = [r["repetition"], r["class"], r["trial"], repr(float(r["final_confidence"])),
                        r["eval_top1"], int(r["eval_top5_hit"])]
                w.writerow(vals + ([config_hash] if config_hash else []))
        summary = self.summary()
        if config_hash:
            summary["config_hash"] = config_hash
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")


def evaluate_attack(reconstructions, evaluation_model):
    """Top-1 / top-5 hit rates of the evaluation model on reconstructions.

    ``reconstructions`` maps attacked class -> array of inputs. Returns
    ``(attack_acc, attack_acc5, per_class_acc, predictions)``.
    """
    k = evaluation_model.class_count
    hits = hits5 = total = 0
    per_class, preds = {}, {}
    for c, xs in sorted(reconstructions.items()):
        if not 0 <= c < k:
            raise ValueError(f"attacked class {c} does not exist for a {k}-class evaluator")
        probs = evaluation_model.predict_proba(xs)
        top1 = probs.argmax(axis=1)
        # rank of the attacked class: number of classes scored strictly higher
        rank = np.sum(probs > probs[:, [c]], axis=1)
        h1 = top1 == c
        h5 = rank < 5
        per_class[c] = float(h1.mean())
        preds[c] = (top1, h5)
        hits += int(h1.sum())
        hits5 += int(h5.sum())
        total += len(xs)
    return hits / total, hits5 / total, per_class, preds


def run_attack(target, evaluator, config, classes=None, keep_reconstructions=False):
    """Invert every class ``config.repetitions`` times and aggregate the hit rates."""
    if target.class_count != evaluator.class_count:
        raise ValueError(
            f"target has {target.class_count} classes, evaluator {evaluator.class_count}"
        )
    classes = list(range(target.class_count)) if classes is None else list(classes)
    accs, accs5, rows = [], [], []
    per_class_sum = {c: 0.0 for c in classes}
    kept = {}
    for rep in range(config.repetitions):
        recon, conf = {}, {}
        for c in classes:
            recon[c], conf[c] = invert_class(target, c, config, repetition=rep,
                                             return_confidence=True)
        acc, acc5, per_class, preds = evaluate_attack(recon, evaluator)
        accs.append(acc)
        accs5.append(acc5)
        for c in classes:
            per_class_sum[c] += per_class[c]
            top1, h5 = preds[c]
            for t in range(len(top1)):
                rows.append({"repetition": rep, "class": c, "trial": t,
                             "final_confidence": conf[c][t], "eval_top1": int(top1[t]),
                             "eval_top5_hit": bool(h5[t])})
        if keep_reconstructions and rep == 0:
            kept = recon
        log.info("repetition %d: attack acc %.4f acc5 %.4f", rep, acc, acc5)
    return AttackReport(
        attack_acc=float(np.mean(accs)), attack_acc5=float(np.mean(accs5)),
        std_acc=float(np.std(accs)), std_acc5=float(np.std(accs5)),
        per_class_acc={c: v / config.repetitions for c, v in per_class_sum.items()},
        repetition_acc=accs, repetition_acc5=accs5, rows=rows, reconstructions=kept,
    )


def privacy_utility_point(target_checkpoint, attack_config, evaluation_checkpoint, test_set=None):
    """One (utility, leakage) row for a trained target."""
    target, meta = load_checkpoint(target_checkpoint)
    evaluator, _ = load_checkpoint(evaluation_checkpoint)
    report = run_attack(target, evaluator, attack_config)
    row = {"val_acc": meta.get("val_acc", float("nan"))}
    if test_set is not None:
        row["test_acc"] = target.accuracy(test_set)
    row.update(attack_acc=report.attack_acc, attack_acc5=report.attack_acc5,
               std_acc=report.std_acc, std_acc5=report.std_acc5)
    return row


def save_reconstructions(path_prefix, reconstructions, image_shape=None):
    """Dump each class's reconstructions as raw little-endian float64 plus a JSON sidecar."""
    for c, xs in reconstructions.items():
        xs = np.ascontiguousarray(xs, dtype="<f8")
        xs.tofile(f"{path_prefix}_class{c}.f64")
        with open(f"{path_prefix}_class{c}.json", "w", encoding="utf-8") as f:
            json.dump({"class": int(c), "shape": list(xs.shape), "trials": len(xs),
                       "image_shape": list(image_shape) if image_shape else None,
                       "dtype": "float64-le"}, f, sort_keys=True)
