#!/usr/bin/env python3
"""Build IDX files for a ~10k-sample MNIST subset.

The original MNIST distribution servers are not always reachable, so this
pulls the digits bundled in the npm package ``mnist`` (~1000 real MNIST
digits per class, intensities stored as value/255 with three decimals),
recovers the uint8 pixels and writes ``train-images-idx3-ubyte.gz`` /
``train-labels-idx1-ubyte.gz``. No test split is produced.

    python scripts/fetch_mnist_subset.py --out data/mnist
    python scripts/fetch_mnist_subset.py --tarball mnist-1.1.0.tgz --out data/mnist
"""

import argparse
import json
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path

import numpy as np

from snnlab.data import FILENAMES, write_idx

PACKAGE = "mnist@1.1.0"


def npm_pack(dest: Path) -> Path:
    subprocess.run(["npm", "pack", PACKAGE, "--silent"], cwd=dest, check=True, stdout=subprocess.DEVNULL)
    (tgz,) = dest.glob("mnist-*.tgz")
    return tgz


def read_digits(tgz: Path) -> tuple[np.ndarray, np.ndarray]:
    per_class = []
    with tarfile.open(tgz) as tar:
        for digit in range(10):
            member = tar.extractfile(f"package/src/digits/{digit}.json")
            flat = np.asarray(json.load(member)["data"], dtype=np.float64)
            per_class.append(np.rint(flat * 255.0).clip(0, 255).astype(np.uint8).reshape(-1, 28, 28))
    # interleave classes so that any prefix is roughly balanced
    longest = max(len(c) for c in per_class)
    images, labels = [], []
    for i in range(longest):
        for digit, imgs in enumerate(per_class):
            if i < len(imgs):
                images.append(imgs[i])
                labels.append(digit)
    return np.stack(images), np.asarray(labels, dtype=np.uint8)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("data/mnist"))
    ap.add_argument("--tarball", type=Path, help="use an already downloaded npm tarball")
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tgz = args.tarball or npm_pack(Path(tmp))
        images, labels = read_digits(tgz)
    img_name, lbl_name = FILENAMES["train"]
    write_idx(args.out / (img_name + ".gz"), args.out / (lbl_name + ".gz"), images, labels, compress=True)
    print(f"wrote {len(labels)} samples to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
