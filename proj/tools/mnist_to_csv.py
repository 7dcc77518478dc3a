#!/usr/bin/env python3
"""Convert MNIST IDX files to CSV: 784 pixel columns scaled to [0, 1], then the class."""

import argparse
import gzip
import struct
from pathlib import Path

import numpy as np


def read_idx(path: Path) -> np.ndarray:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        _, dtype, ndim = struct.unpack(">HBB", f.read(4))
        if dtype != 0x08:
            raise ValueError(f"{path}: expected unsigned byte data")
        shape = struct.unpack(">" + "I" * ndim, f.read(4 * ndim))
        return np.frombuffer(f.read(), dtype=np.uint8).reshape(shape)


def write_csv(images: np.ndarray, labels: np.ndarray, out: Path, limit: int | None) -> None:
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    header = ",".join([f"p{i}" for i in range(x.shape[1])] + ["label"])
    np.savetxt(out, np.column_stack([x, labels]), delimiter=",", header=header, comments="",
               fmt=["%.6g"] * x.shape[1] + ["%d"])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("idx_dir", type=Path, help="directory with the four MNIST IDX files")
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--train-limit", type=int, default=10000)
    args = ap.parse_args()

    def find(stem: str) -> Path:
        for name in (stem, stem + ".gz"):
            if (args.idx_dir / name).exists():
                return args.idx_dir / name
        raise FileNotFoundError(args.idx_dir / stem)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(read_idx(find("train-images-idx3-ubyte")), read_idx(find("train-labels-idx1-ubyte")),
              args.out_dir / "mnist_train.csv", args.train_limit)
    write_csv(read_idx(find("t10k-images-idx3-ubyte")), read_idx(find("t10k-labels-idx1-ubyte")),
              args.out_dir / "mnist_test.csv", None)


if __name__ == "__main__":
    main()
