"""Convert the 5000-image MNIST sample shipped with mlxtend to IDX files.

Usage: python3 tools/mnist5k_to_idx.py <mlxtend wheel or mnist_5k.csv.gz> [out_dir]

Rows are 784 pixel values followed by the label, sorted by label. Each class
is split 80/20 into train-* and t10k-* after a fixed-seed shuffle, so both
splits are balanced and the output is reproducible.
"""

import argparse
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"
TRAIN_FRACTION = 0.8
SEED = 0


def read_rows(source: Path) -> np.ndarray:
    if source.suffix == ".whl":
        with zipfile.ZipFile(source) as z:
            raw = z.read(MEMBER)
    else:
        raw = source.read_bytes()
    text = gzip.decompress(raw).decode()
    return np.loadtxt(io.StringIO(text), delimiter=",", dtype=np.int64)


def write_idx(path: Path, array: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(bytes([0, 0, 0x08, array.ndim]))
        for d in array.shape:
            f.write(struct.pack(">I", d))
        f.write(array.astype(np.uint8).tobytes())


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("source", type=Path)
    parser.add_argument("out_dir", type=Path, nargs="?", default=Path("data/mnist5k"))
    args = parser.parse_args()

    rows = read_rows(args.source)
    if rows.shape != (5000, 785):
        print(f"unexpected table shape {rows.shape}", file=sys.stderr)
        return 1
    if rows[:, :784].min() < 0 or rows[:, :784].max() > 255 or not np.isin(rows[:, 784], range(10)).all():
        print("pixel or label values out of range", file=sys.stderr)
        return 1
    rng = np.random.default_rng(SEED)
    train_idx, test_idx = [], []
    for c in range(10):
        members = rng.permutation(np.flatnonzero(rows[:, 784] == c))
        cut = int(round(TRAIN_FRACTION * len(members)))
        train_idx.extend(members[:cut])
        test_idx.extend(members[cut:])
    train_idx = rng.permutation(train_idx)
    test_idx = rng.permutation(test_idx)
    images = rows[:, :784].reshape(-1, 28, 28)
    labels = rows[:, 784]

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for prefix, sl in (("train", train_idx), ("t10k", test_idx)):
        write_idx(args.out_dir / f"{prefix}-images-idx3-ubyte", images[sl])
        write_idx(args.out_dir / f"{prefix}-labels-idx1-ubyte", labels[sl])
    print(f"wrote {len(train_idx)} train and {len(test_idx)} test images to {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
