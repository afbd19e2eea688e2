"""Mini-batch training under the bilateral dependency objective.

The objective on a batch is::

    CE + lambda_x * sum_j d(X, Z_j) - lambda_y * sum_j d(Z_j, Y)

where ``Z_j`` are the tapped latent outputs and ``d`` is COCO or HSIC
computed on the batch alone. ``mode="unilateral_xy"`` instead penalizes
``lam * d(X, Y_hat)`` with ``Y_hat`` the softmax output, and ``mode="plain"``
is ordinary cross-entropy training.
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .data import BatchIterator
from .dependency import DependencyMeasureConfig, dependency_and_gradient_wrt_z
from .kernels import ParameterError
from .model import backward, cross_entropy, cross_entropy_grad_logits, save_checkpoint

log = logging.getLogger(__name__)

MODES = ("bilateral", "unilateral_xy", "plain")


class ConfigError(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class BiDOConfig:
    mode: str = "bilateral"
    measure: Optional[DependencyMeasureConfig] = field(default_factory=DependencyMeasureConfig)
    lambda_x: float = 0.0
    lambda_y: float = 0.0
    lam: float = 0.0  # weight of d(X, Y_hat) in unilateral mode

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "plain" and self.measure is not None:
            raise ConfigError("plain mode takes no dependency measure")
        if self.mode != "plain" and self.measure is None:
            raise ConfigError(f"{self.mode} mode needs a dependency measure")
        for name in ("lambda_x", "lambda_y", "lam"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")

    @classmethod
    def plain(cls):
        return cls(mode="plain", measure=None)

    @classmethod
    def hsic(cls, lambda_x, lambda_y):
        return cls("bilateral", DependencyMeasureConfig("hsic"), lambda_x, lambda_y)

    @classmethod
    def coco(cls, lambda_x, lambda_y):
        return cls("bilateral", DependencyMeasureConfig("coco"), lambda_x, lambda_y)

    @classmethod
    def unilateral(cls, lam, measure="coco"):
        return cls("unilateral_xy", DependencyMeasureConfig(measure), lam=lam)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 0.05
    max_epochs: int = 20
    optimizer: str = "sgd"
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 for the dependency estimators")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if not self.learning_rate > 0 or self.max_epochs < 1 or self.eval_every < 1:
            raise ConfigError("learning_rate, max_epochs and eval_every must be positive")


@dataclass
class ObjectiveResult:
    value: float
    cross_entropy: float
    dxz: List[float]
    dzy: List[float]
    grad_logits: np.ndarray
    tap_grads: Optional[list]


def bido_objective(trace, labels, config):
    """Objective value on a batch plus the gradients it sends into the network."""
    labels = np.asarray(labels, dtype=np.float64)
    B = len(labels)
    if B < 2:
        raise ParameterError("the dependency terms need a batch of at least 2 samples")
    ce = cross_entropy(trace.probs, labels)
    grad_logits = cross_entropy_grad_logits(trace.probs, labels)
    if config.mode == "plain":
        return ObjectiveResult(ce, ce, [], [], grad_logits, None)

    measure = config.measure
    Kx = measure.gram_x(trace.inputs)

    if config.mode == "unilateral_xy":
        value, g_probs = dependency_and_gradient_wrt_z(measure, Kx, trace.probs, z_first=False)
        if config.lam:
            p = trace.probs
            g = config.lam * g_probs
            grad_logits = grad_logits + p * (g - np.sum(p * g, axis=1, keepdims=True))
        return ObjectiveResult(ce + config.lam * value, ce, [value], [], grad_logits, None)

    Ky = measure.gram_y(labels)
    dxz, dzy, tap_grads = [], [], []
    for z in trace.taps:
        vx, gx = dependency_and_gradient_wrt_z(measure, Kx, z, z_first=False)
        vy, gy = dependency_and_gradient_wrt_z(measure, Ky, z, z_first=True)
        dxz.append(vx)
        dzy.append(vy)
        tg = None
        if config.lambda_x:
            tg = config.lambda_x * gx
        if config.lambda_y:
            tg = -config.lambda_y * gy if tg is None else tg - config.lambda_y * gy
        tap_grads.append(tg)
    value = ce + config.lambda_x * sum(dxz) - config.lambda_y * sum(dzy)
    return ObjectiveResult(value, ce, dxz, dzy, grad_logits, tap_grads)


def objective_and_param_grads(model, x, y, config):
    trace = model.forward(x)
    res = bido_objective(trace, y, config)
    grads, _ = backward(model, trace, res.grad_logits, res.tap_grads)
    return res, grads


# -- optimizers -----------------------------------------------------------

class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, model, grads):
        for p, g in zip(model.params, grads):
            if p is not None:
                p["W"] -= self.lr * g["W"]
                p["b"] -= self.lr * g["b"]


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = self.v = None

    def step(self, model, grads):
        if self.m is None:
            self.m = [None if g is None else {k: np.zeros_like(a) for k, a in g.items()} for g in grads]
            self.v = [None if g is None else {k: np.zeros_like(a) for k, a in g.items()} for g in grads]
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(model.params, grads, self.m, self.v):
            if p is None:
                continue
            for k in ("W", "b"):
                m[k] = self.beta1 * m[k] + (1 - self.beta1) * g[k]
                v[k] = self.beta2 * v[k] + (1 - self.beta2) * g[k] ** 2
                p[k] -= self.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + self.eps)


def make_optimizer(train_config):
    if train_config.optimizer == "sgd":
        return SGD(train_config.learning_rate)
    return Adam(train_config.learning_rate)


# -- training loop --------------------------------------------------------

@dataclass
class TrainReport:
    records: List[dict] = field(default_factory=list)
    tap_count: int = 0
    checkpoint_path: Optional[str] = None
    best_epoch: int = 0
    best_val_acc: float = float("nan")
    seconds: float = 0.0

    @property
    def columns(self):
        return (["epoch", "train_loss", "train_acc", "val_acc"]
                + [f"dxz_{j + 1}" for j in range(self.tap_count)]
                + [f"dzy_{j + 1}" for j in range(self.tap_count)]
                + ["seconds"])

    def final(self, key):
        return self.records[-1][key]

    def final_dxz_sum(self):
        return sum(self.records[-1][f"dxz_{j + 1}"] for j in range(self.tap_count))

    def to_csv(self, path, config_hash=None):
        cols = self.columns + (["config_hash"] if config_hash else [])
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(cols)
            for r in self.records:
                row = [_fmt(r[c]) for c in self.columns]
                w.writerow(row + ([config_hash] if config_hash else []))


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def monitor_dependencies(model, dataset, measure, batch_size, seed, n_batches=4):
    """Mean per-tap ``d(X, Z_j)`` and ``d(Z_j, Y)`` over fixed, seeded batches."""
    rng = np.random.default_rng(seed)
    n_taps = len(model.tap_indices)
    dxz, dzy = np.zeros(n_taps), np.zeros(n_taps)
    size = min(batch_size, len(dataset))
    for _ in range(n_batches):
        idx = rng.choice(len(dataset), size=size, replace=False)
        trace = model.forward(dataset.inputs[idx])
        Kx = measure.gram_x(trace.inputs)
        Ky = measure.gram_y(dataset.labels[idx])
        for j, z in enumerate(trace.taps):
            Kz = measure.gram_z(z)
            dxz[j] += measure.value(Kx, Kz).value
            dzy[j] += measure.value(Kz, Ky).value
    return dxz / n_batches, dzy / n_batches


def train(model, train_set, val_set, train_config, bido_config, checkpoint_path=None,
          checkpoint_metadata=None, monitor_measure=None):
    """Train ``model`` in place and return a :class:`TrainReport`.

    Parameters end at the epoch with the best validation accuracy, which is
    also what gets written to ``checkpoint_path``.
    """
    if train_config.batch_size > len(train_set):
        raise ConfigError("batch_size exceeds the training set size")
    if monitor_measure is None:
        monitor_measure = bido_config.measure or DependencyMeasureConfig("hsic")
    batches = BatchIterator(train_set, train_config.batch_size, seed=train_config.seed)
    opt = make_optimizer(train_config)
    report = TrainReport(tap_count=len(model.tap_indices))
    best_params = model.copy().params
    best_val = -np.inf
    start = time.perf_counter()
    for epoch in range(1, train_config.max_epochs + 1):
        losses = []
        for b, idx in enumerate(batches.epoch_indices()):
            x, y = train_set.inputs[idx], train_set.labels[idx]
            res, grads = objective_and_param_grads(model, x, y, bido_config)
            if not np.isfinite(res.value):
                raise TrainingDiverged(
                    f"non-finite objective at epoch {epoch}, batch {b} "
                    f"(lambda_x={bido_config.lambda_x}, lambda_y={bido_config.lambda_y}, "
                    f"lam={bido_config.lam})"
                )
            opt.step(model, grads)
            losses.append(res.cross_entropy)
        record = {"epoch": epoch, "train_loss": float(np.mean(losses)),
                  "train_acc": model.accuracy(train_set)}
        if epoch % train_config.eval_every == 0 or epoch == train_config.max_epochs:
            record["val_acc"] = model.accuracy(val_set)
        else:
            record["val_acc"] = float("nan")
        dxz, dzy = monitor_dependencies(model, train_set, monitor_measure,
                                        train_config.batch_size, train_config.seed)
        for j in range(report.tap_count):
            record[f"dxz_{j + 1}"] = float(dxz[j])
            record[f"dzy_{j + 1}"] = float(dzy[j])
        record["seconds"] = time.perf_counter() - start
        report.records.append(record)
        log.info("epoch %d loss %.4f train %.4f val %.4f", epoch, record["train_loss"],
                 record["train_acc"], record["val_acc"])
        if record["val_acc"] > best_val:
            best_val = record["val_acc"]
            best_params = model.copy().params
            report.best_epoch = epoch
    model.params = best_params
    report.best_val_acc = float(best_val)
    report.seconds = time.perf_counter() - start
    if checkpoint_path is not None:
        meta = dict(checkpoint_metadata or {})
        meta.update(best_epoch=report.best_epoch, val_acc=report.best_val_acc,
                    seed=train_config.seed)
        save_checkpoint(model, checkpoint_path, meta)
        report.checkpoint_path = str(checkpoint_path)
    return report


def regularizer_seconds(measure, batch_size, input_dim=784, tap_dims=(128,), class_count=10,
                        repeats=5, seed=0):
    """Best-of-``repeats`` wall-clock of one batch's dependency terms and gradients."""
    rng = np.random.default_rng(seed)
    config = BiDOConfig("bilateral", DependencyMeasureConfig(measure), 1.0, 1.0)
    x = rng.uniform(size=(batch_size, input_dim))
    labels = np.eye(class_count)[rng.integers(0, class_count, batch_size)]
    taps = [np.maximum(rng.normal(size=(batch_size, d)), 0) for d in tap_dims]
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        Kx = config.measure.gram_x(x)
        Ky = config.measure.gram_y(labels)
        for z in taps:
            dependency_and_gradient_wrt_z(config.measure, Kx, z, z_first=False)
            dependency_and_gradient_wrt_z(config.measure, Ky, z, z_first=True)
        best = min(best, time.perf_counter() - t0)
    return best
