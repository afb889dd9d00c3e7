"""Build the small MNIST IDX fixture used by the test suite.

The sandbox cannot reach the MNIST mirrors, so the fixture is cut from the
5000-image MNIST sample that ships inside the ``mlxtend`` wheel
(``mlxtend/data/data/mnist_5k.csv.gz``). Images are written as gzip-compressed
IDX files, identical in layout to the official distribution.

    pip download mlxtend --no-deps -d /tmp/dl
    python scripts/make_mnist_fixture.py /tmp/dl/mlxtend-*.whl tests/data
"""
import gzip
import io
import sys
import zipfile
from pathlib import Path

import numpy as np

PER_CLASS = 150


def main(wheel, out_dir):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",")
    pixels = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)

    keep = np.concatenate([np.flatnonzero(labels == c)[:PER_CLASS] for c in range(10)])
    keep.sort()
    pixels, labels = pixels[keep], labels[keep]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(labels)
    img_header = np.array([0x803, n, 28, 28], dtype=">u4").tobytes()
    lbl_header = np.array([0x801, n], dtype=">u4").tobytes()
    (out / "mnist-sample-images-idx3-ubyte.gz").write_bytes(
        gzip.compress(img_header + pixels.tobytes(), mtime=0))
    (out / "mnist-sample-labels-idx1-ubyte.gz").write_bytes(
        gzip.compress(lbl_header + labels.tobytes(), mtime=0))
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
