#!/usr/bin/env python3
"""Convert a USPS archive to the plain-binary bundle the trainer reads.

Input formats (auto-detected):
  * usps.h5                 -- HDF5 with /train/data, /train/target,
                               /test/data, /test/target (requires h5py)
  * usps / usps.t (text)    -- libsvm-style lines: "<label> idx:val ..."
                               with labels 1..10 (10 means digit 0) and
                               pixel values in [-1, 1]

Output (one file per split):
  u32 N (little endian), N * 256 float64 pixels in [0, 1], N label bytes.

Usage:
  usps_convert.py --h5 usps.h5 --out-dir data/
  usps_convert.py --train usps --test usps.t --out-dir data/
"""

import argparse
import struct
import sys
from pathlib import Path

import numpy as np


def write_bundle(path: Path, images: np.ndarray, labels: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.float64).reshape(len(labels), 256)
    if images.min() < 0.0 or images.max() > 1.0:
        # Rescale from [-1, 1].
        images = (images + 1.0) / 2.0
    images = np.clip(images, 0.0, 1.0)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() > 9:
        raise SystemExit(f"{path}: labels outside [0, 9] after conversion")
    with open(path, "wb") as out:
        out.write(struct.pack("<I", len(labels)))
        out.write(images.tobytes())
        out.write(labels.astype(np.uint8).tobytes())
    print(f"wrote {path}: {len(labels)} samples")


def load_libsvm_text(path: Path) -> tuple[np.ndarray, np.ndarray]:
    images, labels = [], []
    for line in path.read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        label = int(float(parts[0]))
        labels.append(0 if label == 10 else label)
        row = np.full(256, -1.0)
        for tok in parts[1:]:
            idx, val = tok.split(":")
            row[int(idx) - 1] = float(val)
        images.append(row)
    return np.array(images), np.array(labels)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--h5", type=Path, help="usps.h5 (HDF5 layout)")
    ap.add_argument("--train", type=Path, help="libsvm-format training split")
    ap.add_argument("--test", type=Path, help="libsvm-format test split")
    ap.add_argument("--out-dir", type=Path, required=True)
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    if args.h5:
        import h5py

        with h5py.File(args.h5, "r") as f:
            write_bundle(args.out_dir / "usps_train.bin",
                         f["train/data"][:], f["train/target"][:])
            write_bundle(args.out_dir / "usps_test.bin",
                         f["test/data"][:], f["test/target"][:])
    elif args.train and args.test:
        write_bundle(args.out_dir / "usps_train.bin", *load_libsvm_text(args.train))
        write_bundle(args.out_dir / "usps_test.bin", *load_libsvm_text(args.test))
    else:
        ap.error("provide either --h5 or both --train and --test")


if __name__ == "__main__":
    sys.exit(main())
