"""Feedforward classifier with designated latent taps and hand-written backprop."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .numerics import DimensionError

CHECKPOINT_VERSION = 1
LAYER_KINDS = ("dense", "relu", "softmax_output")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    tap: bool = False

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind != "dense" and self.in_dim != self.out_dim:
            raise ValueError(f"{self.kind} layer must keep its width")
        if self.kind == "softmax_output" and self.tap:
            raise ValueError("the softmax output cannot be a latent tap")


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    activations: List[np.ndarray]  # output of every layer, in order
    taps: List[np.ndarray]
    logits: np.ndarray
    probs: np.ndarray
    losses: Optional[np.ndarray] = None


@dataclass
class ClassifierModel:
    layers: List[LayerSpec]
    params: List[Optional[dict]] = field(default_factory=list)

    def __post_init__(self):
        layers = self.layers
        if not layers or layers[-1].kind != "softmax_output":
            raise ValueError("the last layer must be softmax_output")
        if sum(l.kind == "softmax_output" for l in layers) != 1:
            raise ValueError("softmax_output must appear exactly once")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer widths do not chain: {a} -> {b}")
        if not self.params:
            self.params = [
                {"W": np.zeros((l.in_dim, l.out_dim)), "b": np.zeros(l.out_dim)}
                if l.kind == "dense" else None
                for l in layers
            ]

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def class_count(self):
        return self.layers[-1].out_dim

    @property
    def tap_indices(self):
        return [i for i, l in enumerate(self.layers) if l.tap]

    @property
    def n_params(self):
        return sum(p["W"].size + p["b"].size for p in self.params if p is not None)

    def copy(self):
        return ClassifierModel(
            list(self.layers),
            [None if p is None else {k: v.copy() for k, v in p.items()} for p in self.params],
        )

    # -- flat parameter view, handy for gradient checks and optimizers --
    def get_flat(self):
        return np.concatenate([np.concatenate([p["W"].ravel(), p["b"]])
                               for p in self.params if p is not None])

    def set_flat(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        pos = 0
        for p in self.params:
            if p is None:
                continue
            for key in ("W", "b"):
                size = p[key].size
                p[key] = theta[pos:pos + size].reshape(p[key].shape).copy()
                pos += size
        if pos != theta.size:
            raise DimensionError(f"expected {pos} parameters, got {theta.size}")

    @staticmethod
    def flatten_grads(grads):
        return np.concatenate([np.concatenate([g["W"].ravel(), g["b"]])
                               for g in grads if g is not None])

    def forward(self, batch):
        return forward_with_taps(self, batch)

    def predict_proba(self, batch):
        return forward_with_taps(self, batch).probs

    def predict(self, batch):
        return self.predict_proba(batch).argmax(axis=1)

    def accuracy(self, dataset):
        if len(dataset) == 0:
            return float("nan")
        return float(np.mean(self.predict(dataset.inputs) == dataset.targets))


def mlp(input_dim, hidden, class_count, seed=0, tap_hidden=True):
    """Dense/ReLU stack with a softmax head; every hidden ReLU output is a tap."""
    layers = []
    prev = input_dim
    for width in hidden:
        layers.append(LayerSpec("dense", prev, width))
        layers.append(LayerSpec("relu", width, width, tap=tap_hidden))
        prev = width
    layers.append(LayerSpec("dense", prev, class_count))
    layers.append(LayerSpec("softmax_output", class_count, class_count))
    model = ClassifierModel(layers)
    init_params(model, seed)
    return model


def default_target(input_dim=784, class_count=10, seed=0):
    return mlp(input_dim, (512, 256, 128), class_count, seed)


def default_evaluator(input_dim=784, class_count=10, seed=1):
    return mlp(input_dim, (1024, 512), class_count, seed, tap_hidden=False)


def init_params(model, seed):
    """Uniform ``+-sqrt(6 / (fan_in + fan_out))`` weights, zero biases."""
    rng = np.random.default_rng(seed)
    for layer, p in zip(model.layers, model.params):
        if p is None:
            continue
        bound = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
        p["W"] = rng.uniform(-bound, bound, size=(layer.in_dim, layer.out_dim))
        p["b"] = np.zeros(layer.out_dim)
    return model


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward_with_taps(model, batch):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    x = x.reshape(len(x), -1)
    if x.shape[1] != model.input_dim:
        raise DimensionError(f"inputs have dimension {x.shape[1]}, model expects {model.input_dim}")
    acts, taps = [], []
    a = x
    logits = None
    for layer, p in zip(model.layers, model.params):
        if layer.kind == "dense":
            a = a @ p["W"] + p["b"]
        elif layer.kind == "relu":
            a = np.maximum(a, 0.0)
        else:
            logits = a
            a = softmax(a)
        acts.append(a)
        if layer.tap:
            taps.append(a)
    return ForwardTrace(x, acts, taps, logits, a)


def _check_one_hot(labels, k):
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2 or labels.shape[1] != k:
        raise ValueError(f"labels must be one-hot with {k} columns, got shape {labels.shape}")
    if not (np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=1) == 1)):
        raise ValueError("labels are not one-hot")
    return labels


def cross_entropy(probabilities, labels):
    """Mean ``-ln p[true class]`` with probabilities clamped at 1e-12."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = _check_one_hot(labels, p.shape[1])
    true_p = np.sum(p * y, axis=1)
    return float(np.mean(-np.log(np.maximum(true_p, 1e-12))))


def cross_entropy_grad_logits(probabilities, labels):
    """Gradient of mean cross-entropy w.r.t. the logits, ``(p - y) / B``."""
    p = np.asarray(probabilities, dtype=np.float64)
    return (p - labels) / len(p)


def backward(model, trace, grad_logits=None, tap_grads=None):
    """Backpropagate gradients arriving at the logits and at the taps.

    A gradient injected at a tap is added to whatever flows back from the
    layers above it. Returns ``(param_grads, input_grad)`` where
    ``param_grads`` mirrors ``model.params``.
    """
    B = len(trace.inputs)
    k = model.class_count
    g = np.zeros((B, k)) if grad_logits is None else np.asarray(grad_logits, dtype=np.float64)
    if g.shape != (B, k):
        raise DimensionError(f"grad_logits shape {g.shape} != {(B, k)}")
    tap_idx = model.tap_indices
    if tap_grads is not None and len(tap_grads) != len(tap_idx):
        raise DimensionError(f"got {len(tap_grads)} tap gradients for {len(tap_idx)} taps")
    tap_pos = {layer_i: j for j, layer_i in enumerate(tap_idx)}
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 2, -1, -1):
        layer = model.layers[i]
        if tap_grads is not None and i in tap_pos and tap_grads[tap_pos[i]] is not None:
            tg = np.asarray(tap_grads[tap_pos[i]], dtype=np.float64)
            if tg.shape != g.shape:
                raise DimensionError(f"tap gradient {tg.shape} does not match layer output {g.shape}")
            g = g + tg
        a_in = trace.activations[i - 1] if i > 0 else trace.inputs
        if layer.kind == "dense":
            p = model.params[i]
            grads[i] = {"W": a_in.T @ g, "b": g.sum(axis=0)}
            g = g @ p["W"].T
        elif layer.kind == "relu":
            g = g * (trace.activations[i] > 0)
    return grads, g


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(model, path, metadata=None):
    """Store architecture, float64 parameters and metadata in one ``.npz`` file."""
    header = {
        "format": "bido-checkpoint",
        "version": CHECKPOINT_VERSION,
        "layers": [[l.kind, l.in_dim, l.out_dim, l.tap] for l in model.layers],
        "class_count": model.class_count,
        "input_dim": model.input_dim,
        "metadata": metadata or {},
    }
    arrays = {}
    for i, p in enumerate(model.params):
        if p is not None:
            arrays[f"W{i}"] = p["W"]
            arrays[f"b{i}"] = p["b"]
    path = Path(path)
    with open(path, "wb") as f:
        np.savez(f, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != "bido-checkpoint":
            raise ValueError(f"{path} is not a model checkpoint")
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        layers = [LayerSpec(k, i, o, t) for k, i, o, t in header["layers"]]
        params = [
            {"W": z[f"W{i}"].astype(np.float64), "b": z[f"b{i}"].astype(np.float64)}
            if l.kind == "dense" else None
            for i, l in enumerate(layers)
        ]
    return ClassifierModel(layers, params), header["metadata"]
