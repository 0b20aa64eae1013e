#!/usr/bin/env python3
"""Fetch the MNIST training set as gzipped IDX files.

Usage: python3 scripts/fetch_mnist.py [OUT_DIR]

The original IDX files are taken from the npm package `mnist-data`, which
bundles them unmodified, so only `npm` is required. Output:
OUT_DIR/train-images-idx3-ubyte.gz and OUT_DIR/train-labels-idx1-ubyte.gz
(default OUT_DIR: data/mnist next to this script's parent directory).
"""
import gzip
import hashlib
import os
import struct
import subprocess
import sys
import tarfile
import tempfile

PACKAGE = "mnist-data@1.2.6"
FILES = {
    "train-images-idx3-ubyte": (0x00000803, 60000),
    "train-labels-idx1-ubyte": (0x00000801, 60000),
}

out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "data", "mnist")
os.makedirs(out_dir, exist_ok=True)

with tempfile.TemporaryDirectory() as tmp:
    subprocess.run(["npm", "pack", PACKAGE], cwd=tmp, check=True, capture_output=True)
    tgz = next(f for f in os.listdir(tmp) if f.endswith(".tgz"))
    with tarfile.open(os.path.join(tmp, tgz)) as tar:
        for name, (magic, count) in FILES.items():
            raw = tar.extractfile(f"package/data/{name}").read()
            got_magic, got_count = struct.unpack(">II", raw[:8])
            if (got_magic, got_count) != (magic, count):
                sys.exit(f"{name}: unexpected header {got_magic:#x}/{got_count}")
            with gzip.GzipFile(os.path.join(out_dir, name + ".gz"), "wb", mtime=0) as f:
                f.write(raw)
            print(f"{name}: {len(raw)} bytes, sha256 {hashlib.sha256(raw).hexdigest()}")
