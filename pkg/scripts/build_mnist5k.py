"""Convert the 5000-image MNIST subset bundled with mlxtend into gzipped IDX files.

The sandbox this project was built in cannot reach the MNIST mirrors, but
PyPI is reachable and the mlxtend wheel ships ``mnist_5k.csv.gz`` (500 images
per digit, 784 pixels then the label on each row). Usage::

    pip download --no-deps -d /tmp/wheels mlxtend
    python scripts/build_mnist5k.py /tmp/wheels/mlxtend-*.whl data/

If you have the full MNIST IDX files, point the configs at them instead.
"""

import gzip
import io
import sys
import zipfile
from pathlib import Path

import numpy as np

from bido.data import write_idx


def main(wheel, out_dir):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    images = table[:, :-1].reshape(-1, 28, 28).astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "mnist5k-images-idx3-ubyte.gz", images)
    write_idx(out / "mnist5k-labels-idx1-ubyte.gz", labels)
    print(f"wrote {len(labels)} images to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
