#!/usr/bin/env python3
"""Fetch MNIST as IDX files, or build the small committed subset offline.

Two modes:

  # full dataset (four canonical IDX files, ~11 MB download)
  ./scripts/fetch_mnist.py --out data/mnist

  # 10k-sample subset from the digit JSONs shipped with the 'mnist' npm
  # package (784 floats per image, value = byte/255 rounded to 3 decimals)
  ./scripts/fetch_mnist.py --from-json path/to/mnist/src/digits --out data/mnist10k

The JSON mode regenerates the files committed under data/mnist10k: all
10000 images, shuffled with a fixed seed, split 8500 train / 1500 test.
"""

import argparse
import gzip
import json
import pathlib
import random
import struct
import sys
import urllib.request

MIRRORS = [
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
]
FILES = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
]

SUBSET_SEED = 1
SUBSET_TRAIN = 8500
SUBSET_TEST = 1500


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def fetch_full(out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        dest = out_dir / name[:-3]
        if dest.exists():
            print(f"{dest} already present, skipping")
            continue
        blob = None
        for mirror in MIRRORS:
            url = mirror + name
            try:
                print(f"downloading {url}")
                blob = urllib.request.urlopen(url, timeout=60).read()
                break
            except OSError as e:
                print(f"  failed: {e}", file=sys.stderr)
        if blob is None:
            sys.exit(f"error: could not download {name} from any mirror")
        dest.write_bytes(gzip.decompress(blob))
        print(f"wrote {dest}")


def build_subset_from_json(json_dir, out_dir):
    samples = []  # (label, bytes) in a fixed, source-independent order
    for digit in range(10):
        src = json_dir / f"{digit}.json"
        if not src.exists():
            sys.exit(f"error: {src} not found")
        flat = json.loads(src.read_text())["data"]  # all images concatenated
        if len(flat) % 784 != 0:
            sys.exit(f"error: {src} length {len(flat)} is not a multiple of 784")
        for off in range(0, len(flat), 784):
            img = [round(v * 255) for v in flat[off:off + 784]]
            if not all(0 <= b <= 255 for b in img):
                sys.exit(f"error: pixel out of range in {src}")
            samples.append((digit, img))

    if len(samples) < SUBSET_TRAIN + SUBSET_TEST:
        sys.exit(f"error: need {SUBSET_TRAIN + SUBSET_TEST} images, got {len(samples)}")
    random.Random(SUBSET_SEED).shuffle(samples)

    out_dir.mkdir(parents=True, exist_ok=True)
    train = samples[:SUBSET_TRAIN]
    test = samples[SUBSET_TRAIN:SUBSET_TRAIN + SUBSET_TEST]
    write_idx_images(out_dir / "train-images-idx3-ubyte", [s[1] for s in train])
    write_idx_labels(out_dir / "train-labels-idx1-ubyte", [s[0] for s in train])
    write_idx_images(out_dir / "t10k-images-idx3-ubyte", [s[1] for s in test])
    write_idx_labels(out_dir / "t10k-labels-idx1-ubyte", [s[0] for s in test])
    for digit in range(10):
        n = sum(1 for s in test if s[0] == digit)
        print(f"digit {digit}: {n} test samples")
    print(f"wrote {SUBSET_TRAIN} train / {SUBSET_TEST} test images to {out_dir}")


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=pathlib.Path, required=True, help="output directory")
    ap.add_argument("--from-json", type=pathlib.Path, metavar="DIR",
                    help="build the 10k subset from per-digit JSON files instead of downloading")
    args = ap.parse_args()
    if args.from_json:
        build_subset_from_json(args.from_json, args.out)
    else:
        fetch_full(args.out)


if __name__ == "__main__":
    main()
