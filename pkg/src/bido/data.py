"""Datasets: MNIST IDX parsing, synthetic corpora, stratified splits and batching."""

import gzip
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class FormatError(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # (n, d) float64 in [0, 1]
    labels: np.ndarray  # (n, k) one-hot float64
    class_count: int
    split: str = "train"
    provenance: str = "synthetic_blobs"
    image_shape: tuple = None

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ConsistencyError(
                f"{len(self.inputs)} inputs but {len(self.labels)} labels"
            )
        if self.labels.ndim != 2 or self.labels.shape[1] != self.class_count:
            raise ConsistencyError(f"labels must be (n, {self.class_count}) one-hot")
        if len(self.labels) and not (
            np.all((self.labels == 0) | (self.labels == 1))
            and np.all(self.labels.sum(axis=1) == 1)
        ):
            raise ConsistencyError("every label must be exactly one-hot")
        if self.inputs.size and (self.inputs.min() < 0 or self.inputs.max() > 1):
            raise ConsistencyError("input entries must lie in [0, 1]")

    def __len__(self):
        return len(self.inputs)

    @property
    def dim(self):
        return self.inputs.shape[1]

    @property
    def targets(self):
        """Integer class indices."""
        return self.labels.argmax(axis=1)

    def subset(self, idx, split=None):
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, inputs=self.inputs[idx], labels=self.labels[idx],
                       split=split or self.split)


def one_hot(classes, k):
    classes = np.asarray(classes, dtype=np.int64)
    out = np.zeros((len(classes), k))
    out[np.arange(len(classes)), classes] = 1.0
    return out


# --- IDX -------------------------------------------------------------------

def _read_maybe_gzip(path):
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw, expected_magic, what):
    if len(raw) < 8:
        raise FormatError(f"{what} file too short for an IDX header")
    magic, = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(
            f"{what} file has magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    payload = np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim)
    if payload.size != int(np.prod(dims)):
        raise FormatError(f"{what} file holds {payload.size} bytes, header declares {dims}")
    return payload.reshape(dims)


def read_idx_images(path):
    return _parse_idx(_read_maybe_gzip(path), IDX_IMAGE_MAGIC, "image")


def read_idx_labels(path):
    return _parse_idx(_read_maybe_gzip(path), IDX_LABEL_MAGIC, "label")


def write_idx(path, array, compress=None):
    """Write a uint8 array as IDX (3-d images or 1-d labels)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    blob = struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes()
    path = Path(path)
    if compress is None:
        compress = path.suffix == ".gz"
    path.write_bytes(gzip.compress(blob, mtime=0) if compress else blob)


def load_mnist_idx(images_path, labels_path, limit=None):
    """Parse an MNIST image/label IDX pair (plain or gzipped) into a Dataset."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise ConsistencyError(
            f"image file has {len(images)} items, label file has {len(labels)}"
        )
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    if labels.size and labels.max() > 9:
        raise FormatError(f"label value {labels.max()} outside 0..9")
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(x, one_hot(labels, 10), 10, "train", "mnist_idx", tuple(images.shape[1:]))


# --- synthetic corpora -------------------------------------------------------

def synthetic_blobs(classes, per_class, dim, separation=8.0, seed=0, std=0.05,
                    max_tries=10_000):
    """Gaussian clusters whose centers are at least ``separation * std`` apart.

    Centers are drawn inside ``[3 std, 1 - 3 std]^dim``; points are clipped to
    the unit cube.
    """
    if classes < 2 or per_class < 2:
        raise GenerationError("need classes >= 2 and per_class >= 2")
    rng = np.random.default_rng(seed)
    lo, hi = 3 * std, 1 - 3 * std
    min_dist = separation * std
    if hi <= lo or min_dist > (hi - lo) * np.sqrt(dim):
        raise GenerationError(
            f"separation {separation} std infeasible in [0,1]^{dim} for std={std}"
        )
    centers = []
    tries = 0
    while len(centers) < classes:
        tries += 1
        if tries > max_tries:
            raise GenerationError(
                f"could not place {classes} centers {min_dist:.3f} apart in [0,1]^{dim}"
            )
        c = rng.uniform(lo, hi, size=dim)
        if all(np.linalg.norm(c - o) >= min_dist for o in centers):
            centers.append(c)
    x = np.concatenate([c + std * rng.standard_normal((per_class, dim)) for c in centers])
    y = np.repeat(np.arange(classes), per_class)
    return Dataset(np.clip(x, 0.0, 1.0), one_hot(y, classes), classes, "train", "synthetic_blobs")


# seven-segment layout: a top, b top-right, c bottom-right, d bottom,
# e bottom-left, f top-left, g middle
_SEGMENTS = {
    0: "abcdef", 1: "bc", 2: "abged", 3: "abgcd", 4: "fgbc",
    5: "afgcd", 6: "afgedc", 7: "abc", 8: "abcdefg", 9: "abcdfg",
}


def _render_digit(digit, size, rng):
    img = np.zeros((size, size))
    thick = rng.integers(1, 3)
    h0, w0 = 2 + rng.integers(-1, 2), 3 + rng.integers(-1, 2)
    height, width = size - 4, size - 6
    top, mid, bot = h0, h0 + height // 2, h0 + height - 1
    left, right = w0, w0 + width - 1
    strokes = {
        "a": (slice(top, top + thick), slice(left, right + 1)),
        "g": (slice(mid, mid + thick), slice(left, right + 1)),
        "d": (slice(bot - thick + 1, bot + 1), slice(left, right + 1)),
        "f": (slice(top, mid + 1), slice(left, left + thick)),
        "b": (slice(top, mid + 1), slice(right - thick + 1, right + 1)),
        "e": (slice(mid, bot + 1), slice(left, left + thick)),
        "c": (slice(mid, bot + 1), slice(right - thick + 1, right + 1)),
    }
    for seg in _SEGMENTS[digit]:
        img[strokes[seg]] = rng.uniform(0.7, 1.0)
    img += rng.normal(0.0, 0.08, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synthetic_digits(per_class, size=12, seed=0):
    """Seven-segment style digit glyphs with jittered position, stroke and noise."""
    if per_class < 2:
        raise GenerationError("need per_class >= 2")
    if size < 8:
        raise GenerationError("glyph size must be >= 8 pixels")
    rng = np.random.default_rng(seed)
    x = np.stack([_render_digit(d, size, rng).ravel()
                  for d in range(10) for _ in range(per_class)])
    y = np.repeat(np.arange(10), per_class)
    return Dataset(x, one_hot(y, 10), 10, "train", "synthetic_digits", (size, size))


# --- splitting and batching --------------------------------------------------

def split(dataset, fractions=(0.8, 0.1, 0.1), seed=0):
    """Stratified, seeded split into (train, val, test)."""
    fractions = np.asarray(fractions, dtype=np.float64)
    if len(fractions) != 3 or np.any(fractions < 0) or abs(fractions.sum() - 1) > 1e-9:
        raise ValueError(f"fractions must be three nonnegative numbers summing to 1: {fractions}")
    parts = int(np.count_nonzero(fractions))
    rng = np.random.default_rng(seed)
    buckets = [[], [], []]
    targets = dataset.targets
    for c in range(dataset.class_count):
        idx = np.flatnonzero(targets == c)
        if 0 < len(idx) < parts:
            raise ValueError(f"class {c} has {len(idx)} samples, fewer than {parts} split parts")
        idx = idx[rng.permutation(len(idx))]
        raw = fractions * len(idx)
        counts = np.floor(raw).astype(int)
        # largest remainder, ties broken towards earlier parts
        for i in np.argsort(-(raw - counts), kind="stable")[: len(idx) - counts.sum()]:
            counts[i] += 1
        bounds = np.concatenate([[0], np.cumsum(counts)])
        for p in range(3):
            buckets[p].extend(idx[bounds[p]:bounds[p + 1]])
    names = ("train", "val", "test")
    return tuple(dataset.subset(np.sort(np.array(b, dtype=np.int64)), names[p])
                 for p, b in enumerate(buckets))


class BatchIterator:
    """Shuffled mini-batches over a dataset, one pass per ``epoch()`` call.

    With ``drop_small`` a trailing batch of fewer than two samples is skipped,
    since the dependency estimators need at least two.
    """

    def __init__(self, dataset, batch_size, seed=0, drop_small=True):
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.dataset = dataset
        self.batch_size = batch_size
        self.drop_small = drop_small
        self.rng = np.random.default_rng(seed)

    def epoch_indices(self):
        order = self.rng.permutation(len(self.dataset))
        for start in range(0, len(order), self.batch_size):
            idx = order[start:start + self.batch_size]
            if self.drop_small and len(idx) < 2:
                continue
            yield idx

    def epoch(self):
        for idx in self.epoch_indices():
            yield self.dataset.inputs[idx], self.dataset.labels[idx]


# --- raw dump ----------------------------------------------------------------

def dump_dataset(dataset, path):
    """Write ``<json header>\\n`` followed by inputs then labels as little-endian float64."""
    header = {
        "format": "bido-dataset",
        "version": 1,
        "n": len(dataset),
        "dim": int(dataset.inputs.shape[1]),
        "class_count": dataset.class_count,
        "split": dataset.split,
        "provenance": dataset.provenance,
        "image_shape": list(dataset.image_shape) if dataset.image_shape else None,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(np.ascontiguousarray(dataset.inputs, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(dataset.labels, dtype="<f8").tobytes())


def load_dataset_dump(path):
    with open(path, "rb") as f:
        header = json.loads(f.readline())
        if header.get("format") != "bido-dataset":
            raise FormatError(f"{path} is not a dataset dump")
        body = np.frombuffer(f.read(), dtype="<f8")
    n, d, k = header["n"], header["dim"], header["class_count"]
    if body.size != n * (d + k):
        raise FormatError(f"dump body has {body.size} values, expected {n * (d + k)}")
    x = body[: n * d].reshape(n, d).astype(np.float64)
    y = body[n * d:].reshape(n, k).astype(np.float64)
    shape = tuple(header["image_shape"]) if header["image_shape"] else None
    return Dataset(x, y, k, header["split"], header["provenance"], shape)
