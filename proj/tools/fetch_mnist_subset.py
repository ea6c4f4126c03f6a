#!/usr/bin/env python3
# Copyright 2026 The pixsig Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes the 5000-image MNIST subset shipped with mlxtend as IDX files.

The bundled rows are grouped by digit, so the split is stratified: the first
400 images of each digit go to the train split and the remaining 100 to the
test split, both interleaved round-robin over digits.
Usage: fetch_mnist_subset.py OUT_DIR [--wheel PATH]
"""
import argparse
import glob
import gzip
import os
import struct
import subprocess
import tempfile
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def find_wheel(explicit):
    if explicit:
        return explicit
    tmp = tempfile.mkdtemp()
    subprocess.check_call(["pip", "download", "--no-deps", "-q", "-d", tmp, "mlxtend"])
    return glob.glob(os.path.join(tmp, "mlxtend-*.whl"))[0]


def write_idx(path, dtype_dims, payload):
    dims = dtype_dims
    with open(path, "wb") as f:
        f.write(bytes([0, 0, 0x08, len(dims)]))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir")
    ap.add_argument("--wheel")
    ap.add_argument("--train-per-class", type=int, default=400)
    args = ap.parse_args()

    with zipfile.ZipFile(find_wheel(args.wheel)) as z:
        rows = gzip.decompress(z.read(MEMBER)).decode().strip().split("\n")

    by_digit = {}
    for row in rows:
        vals = [int(float(v)) for v in row.split(",")]
        by_digit.setdefault(vals[-1], []).append(bytes(vals[:-1]))
    per_class = args.train_per_class
    splits = {
        "train": {d: imgs[:per_class] for d, imgs in by_digit.items()},
        "t10k": {d: imgs[per_class:] for d, imgs in by_digit.items()},
    }
    os.makedirs(args.out_dir, exist_ok=True)
    for name, groups in splits.items():
        images, labels = bytearray(), bytearray()
        depth = max(len(v) for v in groups.values())
        for i in range(depth):
            for d in sorted(groups):
                if i < len(groups[d]):
                    images.extend(groups[d][i])
                    labels.append(d)
        n = len(labels)
        write_idx(os.path.join(args.out_dir, f"{name}-images-idx3-ubyte"),
                  [n, 28, 28], bytes(images))
        write_idx(os.path.join(args.out_dir, f"{name}-labels-idx1-ubyte"),
                  [n], bytes(labels))
        print(f"{name}: {n} images")


if __name__ == "__main__":
    main()
