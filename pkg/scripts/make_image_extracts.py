"""Write the two-class image CSV extracts shipped under data/.

Sources (both redistributed inside public packages):

* MNIST: ``mlxtend`` wheel, ``mlxtend/data/data/mnist_5k.csv.gz``
  (784 pixel columns followed by the digit label).
* Fashion-MNIST: ``fashion-mnist`` npm tarball, ``package/src/clothes/<k>.json``
  (``{"data": [[784 pixels], ...]}`` per class).

Usage::

    python scripts/make_image_extracts.py --mlxtend-wheel mlxtend-*.whl \
        --fashion-dir package/src/clothes --out data --per-class 200
"""
import argparse
import gzip
import io
import json
import zipfile
from pathlib import Path

import numpy as np


def write_extract(path, labels, pixels):
    header = "label," + ",".join(f"px{i}" for i in range(pixels.shape[1]))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for lab, row in zip(labels, pixels):
            fh.write(f"{int(lab)}," + ",".join(str(int(v)) for v in row) + "\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mlxtend-wheel", required=True)
    ap.add_argument("--fashion-dir", required=True)
    ap.add_argument("--out", default="data")
    ap.add_argument("--per-class", type=int, default=200)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    k = args.per_class

    with zipfile.ZipFile(args.mlxtend_wheel) as zf:
        raw = gzip.decompress(zf.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",")
    pix, lab = table[:, :-1], table[:, -1].astype(int)
    rows = np.concatenate([np.flatnonzero(lab == d)[:k] for d in (0, 1)])
    write_extract(out / "mnist_0_1.csv", lab[rows], pix[rows])

    labels, pixels = [], []
    for cls in (0, 1):
        with open(Path(args.fashion_dir) / f"{cls}.json") as fh:
            data = np.asarray(json.load(fh)["data"][:k])
        labels.append(np.full(len(data), cls))
        pixels.append(data)
    write_extract(out / "fashion_0_1.csv", np.concatenate(labels), np.vstack(pixels))


if __name__ == "__main__":
    main()
