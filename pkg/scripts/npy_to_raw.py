#!/usr/bin/env python3
"""Split a stacked image array (.npy, shape N×H×W or N×H×W×C) into .cdpraw files.

Use this to feed extracted dataset images (e.g. one class of CIFAR-10 or
Fashion-MNIST saved with ``numpy.save``) to ``cdp experiment images``.
Integer arrays are scaled by their dtype maximum so pixels land in [0, 1].

    python scripts/npy_to_raw.py class3.npy images/ --limit 200
"""

import argparse
from pathlib import Path

import numpy as np

from conformal_dp.data import write_raw


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("array", type=Path)
    ap.add_argument("out", type=Path)
    ap.add_argument("--limit", type=int)
    args = ap.parse_args()

    arr = np.load(args.array)
    if arr.ndim not in (3, 4):
        raise SystemExit(f"expected N×H×W or N×H×W×C, got shape {arr.shape}")
    if np.issubdtype(arr.dtype, np.integer):
        arr = arr / np.iinfo(arr.dtype).max
    arr = arr[: args.limit]
    args.out.mkdir(parents=True, exist_ok=True)
    for i, im in enumerate(arr):
        write_raw(args.out / f"img_{i:05d}.cdpraw", im)
    print(f"wrote {len(arr)} files to {args.out}")


if __name__ == "__main__":
    main()
