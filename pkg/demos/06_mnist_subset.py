"""Reading the bundled MNIST subset (IDX format) and a quick plain baseline.

``data/`` holds 5000 real MNIST digits, 500 per class, as gzipped IDX files.
Regenerate them with ``scripts/build_mnist5k.py``. Point ``load_mnist_idx``
at the full MNIST files instead if you have them.

Run: python3 demos/06_mnist_subset.py
"""

from pathlib import Path

import numpy as np

from bido.data import load_mnist_idx, split
from bido.model import default_target
from bido.training import BiDOConfig, TrainConfig, train

root = Path(__file__).resolve().parents[1] / "data"
ds = load_mnist_idx(root / "mnist5k-images-idx3-ubyte.gz", root / "mnist5k-labels-idx1-ubyte.gz")
print(f"{len(ds)} images of shape {ds.image_shape}, class counts {ds.labels.sum(0).astype(int)}")

img = ds.inputs[1234].reshape(28, 28)
print(f"image 1234, label {ds.targets[1234]}:")
for row in img[::2]:
    print("".join("#" if p > 0.5 else ("+" if p > 0.2 else " ") for p in row[::1]))

tr, va, te = split(ds, (0.8, 0.1, 0.1), seed=0)
model = default_target()
report = train(model, tr, va, TrainConfig(learning_rate=1e-3, optimizer="adam", max_epochs=5),
               BiDOConfig.plain())
print(f"plain 784-512-256-128-10 MLP, 5 epochs: val {report.best_val_acc:.3f}, "
      f"test {model.accuracy(te):.3f} ({report.seconds:.0f}s)")
print("per-class test accuracy:",
      np.round([np.mean(model.predict(te.inputs[te.targets == c]) == c) for c in range(10)], 2))
