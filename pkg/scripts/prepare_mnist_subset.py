#!/usr/bin/env python3
"""Write the 5,000-image MNIST sample bundled with mlxtend as IDX files.

The sample is split per class into train/test (stratified, seeded) and saved
under the standard MNIST file names, so ``--dataset DIR`` works unchanged.
Full MNIST IDX files, where available, can be used in its place.
"""

import argparse
import gzip
from importlib import resources
from pathlib import Path

import numpy as np

from ssvae.data import write_idx


def load_bundled():
    path = resources.files("mlxtend.data") / "data" / "mnist_5k.csv.gz"
    with gzip.open(path, "rt") as f:
        table = np.loadtxt(f, delimiter=",", dtype=np.int64)
    return table[:, :-1].astype(np.uint8).reshape(-1, 28, 28), table[:, -1].astype(np.uint8)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path)
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    images, labels = load_bundled()
    rng = np.random.default_rng(args.seed)
    test_idx = np.concatenate(
        [rng.permutation(np.flatnonzero(labels == k))[: args.test_per_class] for k in range(10)]
    )
    is_test = np.zeros(len(labels), dtype=bool)
    is_test[test_idx] = True
    train_idx = rng.permutation(np.flatnonzero(~is_test))
    test_idx = rng.permutation(test_idx)

    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(args.out / "train-images-idx3-ubyte.gz", images[train_idx])
    write_idx(args.out / "train-labels-idx1-ubyte.gz", labels[train_idx])
    write_idx(args.out / "t10k-images-idx3-ubyte.gz", images[test_idx])
    write_idx(args.out / "t10k-labels-idx1-ubyte.gz", labels[test_idx])
    print(f"wrote {len(train_idx)} train / {len(test_idx)} test images to {args.out}")


if __name__ == "__main__":
    main()
